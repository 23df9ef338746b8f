"""Discrete alpha-energies of maps from the 2-sphere twisted by a prescribed 2-form.

Modules: ``target`` (embedded targets and 2-forms), ``mesh`` (icosphere
domains), ``energy`` (functional, gradient, Hessian), ``solve`` (descent,
Newton, min-max, lambda scans, alpha continuation), ``spectrum`` (Morse index
and the comparison form), ``diagnose`` (identity residuals), ``cli``.
"""

__version__ = "0.1.0"

from .energy import Functional, FunctionalParams  # noqa: E402
from .mesh import DomainMesh, icosphere  # noqa: E402
from .target import make_form, make_target  # noqa: E402

__all__ = ["Functional", "FunctionalParams", "DomainMesh", "icosphere", "make_form", "make_target", "__version__"]
