"""DC security-constrained optimal power flow with corrective control.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports it and adds a few conveniences that are easier in Python.
"""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import ScopfSolution, Network

__version__ = "0.1.0"


def solution_dict(solution: ScopfSolution) -> dict:
    """The solution document as plain Python data."""
    return _json.loads(solution.to_json())


def network_dict(network: Network) -> dict:
    return _json.loads(network.to_json())
