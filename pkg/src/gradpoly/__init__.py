"""Gradient maps of real reductive group actions on projective space.

Subpackages, bottom-up: ``model`` (representations with real-form data),
``gradmap`` (gradient maps and shifting), ``strata`` (exact torus strata and
the P0 decomposition), ``polytope`` (hulls, clipping, convexity tests),
``flow`` (orbit sampling, norm-square flows, null cones) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import GradpolyError  # noqa: E402,F401
from .model import Model, RepFunctor, build_model, derived_model, sample_group, validate_model  # noqa: E402,F401
