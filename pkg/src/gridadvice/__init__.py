"""Grid-world adviser agents and their explanations.

Two environments (taxi repositioning, wildfire extinguishing), a per-cell
prediction network, a dueling double deep-Q adviser, Shapley/LIME feature
attribution, composed and saliency-map explanations, a scaling benchmark,
and an HTTP game service for human advice-following trials.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
