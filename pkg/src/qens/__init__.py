"""Quantum ensemble binary classifiers on a statevector simulator.

Submodules: ``simulator`` (gates, circuits, statevectors), ``cosine``
(swap-test cosine classifiers and their ensembles), ``variational`` (trainable
learners), ``ensemble`` (soft voting, bagging, boosting), ``forest`` (the
classical baseline), ``data``, ``metrics`` and the ``cli`` harness.
"""

from .errors import ConfigError, DataError, QensError, QubitCapError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "QensError", "QubitCapError", "__version__"]
