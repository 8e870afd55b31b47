"""Frictionless penalty contact with adaptive non-conforming refinement."""
