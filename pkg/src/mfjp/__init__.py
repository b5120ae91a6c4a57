"""Metastability toolkit for mean-field interacting jump processes.

Modules
-------
model
    Finite-state models with rate expressions; validation and catalog.
dynamics
    McKean-Vlasov flow, fixed points, attractors and basins.
action
    Lagrangian, path action and terminal cost.
quasipotential
    Lattice shortest-path quasipotential and the one-dimensional oracle.
hierarchy
    W-graphs, relaxation constant and the cycle hierarchy.
spectral
    Exact finite-N generator, invariant measure, spectral gap, TV curves.
simulate
    Exact-event Monte Carlo, hitting times and annealing.
cli
    The ``mfjp`` command-line tool.
"""

__version__ = "1.0.0"
