"""Tactile-shell whole-body control for a one-arm mobile manipulator.

The package couples a floating-base arm model with a capacitive tactile
shell around the mobile base: shell readings become an external base wrench,
the base runs an admittance law on that wrench, and the arm runs a Cartesian
impedance (or follow-me) law on top. A deterministic fixed-step simulator,
a calibration pipeline for the shell sensors, a CLI, and a small socket
server for live visualization sit on top of the core.
"""

__version__ = "0.1.0"
