"""Adversarial transferability toolkit: Python bindings over the C++ core."""

import json

from ._advt import *  # noqa: F401,F403
from ._advt import (
    AdvtError,
    blackbox_attack as _blackbox_attack,
    cross_matrix as _cross_matrix,
    intra_matrix as _intra_matrix,
)

__version__ = "0.1.0"


def cross_matrix(*args, **kwargs):
    """Cross-technique transfer report as a dict (key order preserved)."""
    return json.loads(_cross_matrix(*args, **kwargs))


def intra_matrix(*args, **kwargs):
    """Intra-technique transfer report as a dict."""
    return json.loads(_intra_matrix(*args, **kwargs))


def blackbox_attack(*args, **kwargs):
    """Run substitute training plus a transfer attack; returns the report dict."""
    return json.loads(_blackbox_attack(*args, **kwargs))
