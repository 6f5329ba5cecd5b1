"""Steady subsonic Euler flow in a half plane, via the stream-function reduction.

The package solves the full (non-isentropic) steady Euler system over a curved
lower boundary by reducing it to a single quasilinear elliptic equation for the
stream function, iterating a linearized problem on truncated domains, and
checking the theory's structural identities (subsonicity, streamline
conservation, vorticity balance, far-field decay) as runtime diagnostics.
"""

from .errors import SubstreamError

__version__ = "0.1.0"

__all__ = ["SubstreamError", "__version__"]
