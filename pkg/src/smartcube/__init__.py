"""smartcube: STAC catalogs to lazy chunked datacubes, executed as task graphs,
plus a small space-time factorized segmentation model trained on them."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
