"""
mechinfo – stress-state information content of mechanical test specimens.

Forward plane-stress solves, stress-state entropy, specimen design and
material identification (simplex and MCMC). See cli.py for the entrypoint.
"""
__all__ = [
    "cli",
    "config",
    "constants",
    "constitutive",
    "design",
    "entropy",
    "errors",
    "events",
    "fem",
    "inverse",
    "stress_metrics",
    "studies",
    "synth",
    "uq",
]
