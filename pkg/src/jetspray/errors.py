"""Exception types shared across the package."""


class JetsprayError(Exception):
    """Base class for all package errors."""


class OrderMismatch(JetsprayError):
    """Multidual operands have different orders."""


class SingularJet(JetsprayError):
    """Division by a multidual with zero real part."""


class DomainError(JetsprayError):
    """Function argument outside its real domain (ln, sqrt, chart radius...)."""


class BadLevel(JetsprayError):
    """Involution level out of range."""


class BadOrder(JetsprayError):
    """Bundle order too small for the requested operation."""


class BadIndex(JetsprayError):
    """Canonical projection index out of range."""


class BaseMismatch(JetsprayError):
    """Fiber addition of points over different base points."""


class OutsideSlashed(JetsprayError):
    """State violates the slashed-bundle (nonzero velocity) condition."""


class GridTooShort(JetsprayError):
    """Time grid has too few samples for finite differencing."""


class DepthCap(JetsprayError):
    """Mixed finite-difference depth exceeds the supported cap."""


class TruncatedVariation(JetsprayError):
    """A geodesic of the variation left its domain before the requested time."""


class ShrinkEpsilon(JetsprayError):
    """Parameter box could not be shrunk to a valid size."""


class SingularFrame(JetsprayError):
    """Frame vectors became linearly dependent."""


class NotTransversal(JetsprayError):
    """Tensor fails the transversality conditions."""


class SingularAt(JetsprayError):
    """Tensor not invertible at one or more grid points."""

    def __init__(self, times):
        self.times = list(times)
        super().__init__(f"singular at t = {self.times}")


class NotDiffeo(JetsprayError):
    """Variation fails to be a local diffeomorphism on the window."""


class NotEmbeddable(JetsprayError):
    """Base geodesic self-intersects; no tubular chart exists."""


class ChartFailed(JetsprayError):
    """Chart half-width underflowed during bisection."""
