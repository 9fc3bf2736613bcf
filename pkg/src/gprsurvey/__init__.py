"""Robotic GPR survey simulation, migration imaging and 3D pipe reconstruction."""
__version__ = "0.1.0"
