"""Computational differential geometry of semisprays: iterated complete
lifts via truncated multi-jet arithmetic, geodesic and Jacobi-field
integration, variation correspondences, Jacobi tensors and Riccati
machinery, plus a CLI and a verification harness."""

from . import bundle, errors, flow, jacobi, multidual, spray, variation, verify
from .bundle import BundlePoint
from .errors import JetsprayError
from .flow import GeodesicRecord, integrate_geodesic
from .jacobi import JacobiTensor, ParallelFrame, TensorAlongCurve
from .spray import Semispray, constant_curvature_spray, flat_spray, load_spray_config
from .variation import GeodesicVariation

__version__ = "0.1.0"

__all__ = [
    "BundlePoint", "GeodesicRecord", "GeodesicVariation", "JacobiTensor",
    "JetsprayError", "ParallelFrame", "Semispray", "TensorAlongCurve",
    "bundle", "constant_curvature_spray", "errors", "flat_spray", "flow",
    "integrate_geodesic", "jacobi", "load_spray_config", "multidual",
    "spray", "variation", "verify",
]
