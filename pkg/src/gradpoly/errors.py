"""Exception types raised across the package."""


class GradpolyError(Exception):
    """Base class for all package errors."""


class NonCompatible(GradpolyError):
    """Cartan-decomposition closure fails for the supplied operators."""


class NonCommutative(GradpolyError):
    """The declared maximal abelian subspace does not commute."""


class DegenerateSpec(GradpolyError):
    """The model description is empty or otherwise unusable."""


class DimensionOverflow(GradpolyError):
    """A derived representation exceeds the configured dimension cap."""


class UnsupportedKind(GradpolyError):
    """No registered strategy or sampler for this model kind."""


class RealizationMismatch(GradpolyError):
    """An orbit realization violates its own invariant."""


class ZeroVector(GradpolyError):
    """Operation requires a nonzero vector."""


class DimensionCap(GradpolyError):
    """Exact arrangement computations are refused above the rank cap."""


class InfeasibleFiber(GradpolyError):
    """No mass vector realizes the requested gradient-map value."""


class NotTorus(GradpolyError):
    """Exact null-cone test requested for a non-torus model."""


class ParamError(GradpolyError):
    """Invalid flow or test parameters."""


class EmptyCloud(GradpolyError):
    """A sampled point cloud turned out to be empty."""


class DimMismatch(GradpolyError):
    """Point and polytope dimensions disagree."""


class PlaneDegenerate(GradpolyError):
    """The plotting plane functionals are linearly dependent."""
