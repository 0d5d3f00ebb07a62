"""Closed-form key-rate lower bound from observable error statistics.

The bound combines S(B|E2C) >= H(D) - S(E2C) with the overlap lower bound C
on |<e00|e11>|:

    r_tilde = 1 - H(t1/2, t2/2) - t2/2 - (t1/2) h(lambda_tilde)

with t1 = p00 + p11 and t2 = p01 + p10 taken from the SIFT-Z statistics.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import tolerances
from .attack import ChannelStats, h_b_given_a_from_pa
from .errors import DegenerateChannelError, DomainError, NoPositiveRateError
from .qmath import binary_entropy, shannon_entropy

BISECTION_ITERATIONS = 80
BISECTION_EARLY_STOP = 1e-12
SCAN_POINTS = 512


@dataclass(frozen=True)
class KeyRateBound:
    c: float
    c_tilde: float
    lambda_tilde: float | None  # None when t1 == 0 and the sigma_1 term is dropped
    h_ba: float
    r_tilde: float
    t1: float
    t2: float


@dataclass(frozen=True)
class SymmetricNoise:
    q_z: float
    q_x: float

    def __post_init__(self):
        for name in ("q_z", "q_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise DomainError(f"{name}={v!r} outside [0, 1/2]")


def h_b_given_a(stats: ChannelStats) -> float:
    return h_b_given_a_from_pa(stats.p_a)


def c_lower_bound(stats: ChannelStats) -> float:
    (a00, a01), (a10, a11) = stats.p_a.tolist()
    (bpp, bpm), (bmp, bmm) = stats.p_b.tolist()
    plus_leak = math.sqrt(bpp * bpm)
    minus_leak = math.sqrt(bmp * bmm)
    return (1.0 - (bpm + bmp)
            - 2.0 * math.sqrt(a00 * a01) * (plus_leak + minus_leak)
            - 2.0 * math.sqrt(a10 * a11) * (minus_leak + plus_leak))


def c_tilde_of(c: float) -> float:
    return c * c if c >= 0.0 else 0.0


def lambda_tilde(stats: ChannelStats, c_tilde: float) -> float:
    (a00, _), (_, a11) = stats.p_a.tolist()
    t1 = a00 + a11
    if t1 <= 0.0:
        raise DegenerateChannelError("p00 + p11 = 0; drop the sigma_1 term instead")
    if not 0.0 <= c_tilde <= 1.0:
        raise DomainError(f"c_tilde={c_tilde!r} outside [0, 1]")
    lam = 0.5 + math.sqrt((a00 - a11) ** 2 + 4.0 * c_tilde) / (2.0 * t1)
    if lam > 1.0:
        if lam - 1.0 > tolerances.get().lambda_slack:
            raise DomainError(
                f"lambda_tilde={lam!r} exceeds 1: the CTRL statistics demand more overlap "
                "than the SIFT statistics allow (inconsistent ChannelStats)")
        lam = 1.0
    return lam


def keyrate_bound(stats: ChannelStats) -> KeyRateBound:
    pa = stats.p_a
    t1 = float(pa[0, 0] + pa[1, 1])
    t2 = float(pa[0, 1] + pa[1, 0])
    c = c_lower_bound(stats)
    ct = c_tilde_of(c)
    r = 1.0 - shannon_entropy([0.5 * t1, 0.5 * t2]) - 0.5 * t2
    lam = None
    if t1 > 0.0:
        lam = lambda_tilde(stats, ct)
        r -= 0.5 * t1 * binary_entropy(lam)
    return KeyRateBound(c=c, c_tilde=ct, lambda_tilde=lam, h_ba=h_b_given_a(stats), r_tilde=r, t1=t1, t2=t2)


def symmetric_stats(noise: SymmetricNoise | tuple[float, float]) -> ChannelStats:
    if not isinstance(noise, SymmetricNoise):
        noise = SymmetricNoise(*noise)
    qz, qx = noise.q_z, noise.q_x
    return ChannelStats(np.array([[1 - qz, qz], [qz, 1 - qz]]), np.array([[1 - qx, qx], [qx, 1 - qx]]))


def symmetric_rate(q: float, zeta: float, xi: float) -> float:
    """r_tilde with Q_Z = zeta * q and Q_X = xi * q."""
    return keyrate_bound(symmetric_stats(SymmetricNoise(zeta * q, xi * q))).r_tilde


def q_limit(zeta: float, xi: float) -> float:
    return 0.5 / max(zeta, xi)


def threshold_q(zeta: float, xi: float) -> float:
    """Smallest Q > 0 with r_tilde(zeta Q, xi Q) = 0.

    A uniform scan over (0, Q_max] locates the first sign change, then
    bisection refines it, keeping r(lo) > 0 >= r(hi).
    """
    if zeta <= 0 or xi <= 0:
        raise DomainError("zeta and xi must be positive")
    q_max = q_limit(zeta, xi)
    f = lambda q: symmetric_rate(q, zeta, xi)  # noqa: E731

    lo = 0.0
    if f(lo) <= 0.0:
        raise NoPositiveRateError(f"r_tilde <= 0 already at Q=0 for zeta={zeta}, xi={xi}")
    hi = None
    for k in range(1, SCAN_POINTS + 1):
        q = q_max * k / SCAN_POINTS
        if f(q) <= 0.0:
            hi = q
            break
        lo = q
    if hi is None:
        raise NoPositiveRateError(f"r_tilde stays positive up to Q_max={q_max} for zeta={zeta}, xi={xi}")

    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        r = f(mid)
        if abs(r) <= BISECTION_EARLY_STOP:
            return mid
        if r > 0.0:
            lo = mid
        else:
            hi = mid
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def rate_curve(zeta: float, xi: float, q_max: float, steps: int) -> list[tuple[float, float]]:
    if steps < 2:
        raise DomainError("steps must be at least 2")
    if q_max < 0 or q_max > q_limit(zeta, xi):
        raise DomainError(f"q_max={q_max} outside [0, {q_limit(zeta, xi)}]")
    qs = np.linspace(0.0, q_max, steps)
    return [(float(q), symmetric_rate(float(q), zeta, xi)) for q in qs]


def is_nonincreasing(curve: Sequence[tuple[float, float]], up_to: float | None = None, atol: float = 1e-12) -> bool:
    pts = [p for p in curve if up_to is None or p[0] <= up_to]
    return all(b[1] <= a[1] + atol for a, b in zip(pts, pts[1:]))


def zero_crossing(curve: Sequence[tuple[float, float]]) -> float | None:
    """Linearly interpolated Q of the first positive-to-nonpositive step."""
    for (q0, r0), (q1, r1) in zip(curve, curve[1:]):
        if r0 > 0.0 >= r1:
            return q0 + (q1 - q0) * r0 / (r0 - r1)
    return None


def curve_to_csv(curve: Sequence[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q", "r_tilde"])
    for q, r in curve:
        w.writerow([f"{q:.12g}", f"{r:.12g}"])
    return buf.getvalue()


def curve_from_csv(text: str) -> list[tuple[float, float]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [(float(r["q"]), float(r["r_tilde"])) for r in rows]


def threshold_to_json(zeta: float, xi: float, q: float) -> str:
    return json.dumps({"zeta": zeta, "xi": xi, "q_threshold": q}, sort_keys=True)


def bound_as_dict(b: KeyRateBound) -> dict:
    return asdict(b)
