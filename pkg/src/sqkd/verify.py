"""Soundness campaign: exact attack rates against the closed-form bound."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import tolerances
from .attack import AttackPair, channel_stats, check_overlap_inequality, decompose_sift, exact_eve_rate, sample_random_attack
from .keyrate import keyrate_bound


@dataclass(frozen=True)
class SampleCheck:
    index: int
    exact_rate: float
    r_tilde: float
    overlap_lhs: float
    overlap_rhs: float

    @property
    def rate_slack(self) -> float:
        return self.exact_rate - self.r_tilde

    @property
    def overlap_slack(self) -> float:
        return self.overlap_lhs - self.overlap_rhs

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "exact_rate": self.exact_rate,
            "r_tilde": self.r_tilde,
            "rate_slack": self.rate_slack,
            "overlap_lhs": self.overlap_lhs,
            "overlap_rhs": self.overlap_rhs,
            "overlap_slack": self.overlap_slack,
        }


def check_attack(attack: AttackPair, index: int = 0) -> SampleCheck:
    exact = exact_eve_rate(decompose_sift(attack))
    bound = keyrate_bound(channel_stats(attack))
    overlap = check_overlap_inequality(attack)
    return SampleCheck(index, float(exact), float(bound.r_tilde), float(overlap.lhs), float(overlap.rhs))


def _check_range(args) -> list[SampleCheck]:
    seed, d1, d2, start, stop = args
    return [check_attack(sample_random_attack([seed, i], d1, d2), i) for i in range(start, stop)]


def verify_bound(samples: int, d1: int = 2, d2: int = 2, seed: int = 0, jobs: int = 1,
                 include_identity: bool = False) -> dict:
    """Run the campaign; sample ``i`` uses the attack drawn from seed ``[seed, i]``."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if jobs <= 1:
        checks = _check_range((seed, d1, d2, 0, samples))
    else:
        step = -(-samples // (4 * jobs))
        work = [(seed, d1, d2, s, min(s + step, samples)) for s in range(0, samples, step)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            checks = [c for part in pool.map(_check_range, work) for c in part]

    slack = tolerances.get().inequality_slack
    violations = [c.to_dict() for c in checks if c.rate_slack < -slack or c.overlap_slack < -slack]
    report = {
        "samples": samples,
        "d1": d1,
        "d2": d2,
        "seed": seed,
        "min_slack": min(c.rate_slack for c in checks),
        "min_overlap_slack": min(c.overlap_slack for c in checks),
        "violations": violations,
    }
    if include_identity:
        ident = check_attack(AttackPair.identity(d1, d2), -1)
        report["identity"] = ident.to_dict()
    return report
