"""Partial information decomposition of continuous variables with copulas.

The unique information of one source about a target is the minimum, over
joint distributions sharing the two source-target marginals, of a
conditional mutual information.  Working on the copula (rank) scale, that
set is parametrized by a conditional Gaussian copula whose parameter varies
with the target, and the objective is bounded from above with importance
sampling; the remaining terms follow from the mutual informations.

Main entry points: :func:`decompose` for a data set, :func:`train_unique`
for the unique-information estimate alone, :func:`discrete_broja` for
finite distributions.
"""
__version__ = "0.1.0"

from .estimator import EstimatorConfig, train_unique  # noqa: E402
from .oracle import DiscreteJoint, discrete_broja, gaussian_unique_exact  # noqa: E402
from .pid import PidReport, consistency_check, decompose  # noqa: E402
from .pseudoobs import Dataset, pseudo_observations  # noqa: E402

__all__ = [
    "__version__",
    "Dataset",
    "DiscreteJoint",
    "EstimatorConfig",
    "PidReport",
    "consistency_check",
    "decompose",
    "discrete_broja",
    "gaussian_unique_exact",
    "pseudo_observations",
    "train_unique",
]
