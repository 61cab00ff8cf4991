"""Global numerical tolerances.

The defaults can be replaced for a block of code with :func:`override`, which
the CLI uses to apply the ``tolerances`` section of an experiment config.
"""

from __future__ import annotations

import contextlib
import dataclasses


@dataclasses.dataclass(frozen=True)
class Tolerances:
    invertibility: float = 1e-10   # ||A A^-1 - I|| for accepted maps
    identity: float = 1e-8         # relative slack in cocycle / projector identities
    ratio_slack: float = 1e-8      # measured/allowed ratios up to 1 + this pass
    invariance: float = 1e-8       # ||A_k P_k - P_{k+1} A_k|| relative to ||A_k||
    splitting_condition: float = 1e8
    overflow_warning: float = 1e12


_current = Tolerances()


def get() -> Tolerances:
    return _current


@contextlib.contextmanager
def override(**changes):
    global _current
    saved = _current
    _current = dataclasses.replace(saved, **changes)
    try:
        yield _current
    finally:
        _current = saved
