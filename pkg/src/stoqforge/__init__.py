"""Circuit-to-stoquastic-Hamiltonian reductions with subset-state guides, checked numerically."""

__version__ = "0.1.0"
