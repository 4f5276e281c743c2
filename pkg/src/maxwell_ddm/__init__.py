"""Time-harmonic Maxwell edge elements, GMRES preconditioners and Robin domain decomposition in 2D."""
__version__ = "0.1.0"
