"""Desk-scale numerics for gluing non-degenerate Z2-harmonic 1-forms.

Submodules: ``models``, ``branched_field``, ``flat_solver``, ``preglue``,
``nash_moser``, ``morse_forge``, ``acceptance`` and ``cli``.
"""

__version__ = "0.1.0"
