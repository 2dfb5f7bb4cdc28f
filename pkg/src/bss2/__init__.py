"""Adaptive blind separation of two (possibly dependent) sources.

Subpackages: ``sources`` (joint models), ``nonlinearity`` (matrix
nonlinearities), ``adaptive`` (online recursions), ``meanfield``
(expectations and equilibria), ``stability`` (local stability and
separability), ``cli`` (scenario runner).
"""

from . import adaptive, meanfield, nonlinearity, sources, stability

__all__ = ["adaptive", "meanfield", "nonlinearity", "sources", "stability"]
__version__ = "0.1.0"
