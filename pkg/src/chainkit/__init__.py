"""Finite multilevel determinantal ensembles (coupled random-matrix chains)."""
