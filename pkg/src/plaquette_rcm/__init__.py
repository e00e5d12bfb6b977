"""Plaquette random-cluster model and Potts lattice gauge theory on cubical complexes."""

__version__ = "0.1.0"
