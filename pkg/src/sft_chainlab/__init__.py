"""Symbolic engine for the combinatorial layer of contact homology.

Subpackages: exact graded linear algebra, Reeb orbit bookkeeping, decorated
tree categories with strata enumeration, gluing-parameter charts, virtual
count tables with master-equation residuals, the filtered chain algebra,
and the finite-scale strata-module machinery (homotopy colimits,
cofibrancy, lifting).
"""

__version__ = "0.1.0"
