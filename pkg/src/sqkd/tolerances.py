"""Numerical tolerances shared by every module.

Values are read through :func:`get` so that tests can tighten or relax them
locally with :func:`override`::

    with override(unitary=1e-6):
        ...
"""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    normalization: float = 1e-10
    unitary: float = 1e-9
    hermitian: float = 1e-10
    psd: float = 1e-10
    trace: float = 1e-10
    probability_sum: float = 1e-9
    constraint: float = 1e-9
    zero_vector: float = 1e-12  # squared norm below this counts as the zero vector
    jacobi_offdiag: float = 1e-12
    lambda_slack: float = 1e-9
    inequality_slack: float = 1e-9


DEFAULT = Tolerances()
_current: contextvars.ContextVar[Tolerances] = contextvars.ContextVar("sqkd_tolerances", default=DEFAULT)


def get() -> Tolerances:
    return _current.get()


@contextlib.contextmanager
def override(**changes):
    token = _current.set(dataclasses.replace(_current.get(), **changes))
    try:
        yield _current.get()
    finally:
        _current.reset(token)
