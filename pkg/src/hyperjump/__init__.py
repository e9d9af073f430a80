"""Jump discontinuities of constant-coefficient hyperbolic systems."""
__version__ = "0.1.0"
