"""closurekit: data-driven closure models for reduced-order dynamical systems.

Subpackages are imported explicitly, e.g. ``from closurekit.systems import lorenz``.
"""

__version__ = "0.1.0"
