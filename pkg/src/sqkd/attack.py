"""Collective attacks on the two-way channel and the statistics they induce.

Eve holds two unitaries.  ``u_e`` acts on the Bob->Alice leg over
``T (x) E1`` (transit qubit is the most significant factor) and ``u_f`` acts
on the Alice->Bob leg over ``E2 (x) T`` (ancilla most significant).  Both
ancillas start in ``|0>`` and a fresh ``E2`` is used for every returning
qubit, so a CTRL qubit sees ``V = (u_f (x) I_E1)(I_E2 (x) u_e)`` on
``E2 (x) T (x) E1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import qmath, tolerances
from .errors import ConfigError, DomainError

FORMAT_VERSION = 1
SUPPORTED_ANCILLA_DIMS = (1, 2, 4)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AttackPair:
    u_e: np.ndarray
    u_f: np.ndarray
    d1: int
    d2: int

    def __post_init__(self):
        u_e = _frozen(self.u_e)
        u_f = _frozen(self.u_f)
        object.__setattr__(self, "u_e", u_e)
        object.__setattr__(self, "u_f", u_f)
        if self.d1 < 1 or self.d2 < 1:
            raise DomainError("ancilla dimensions must be positive")
        if u_e.shape != (2 * self.d1, 2 * self.d1):
            raise DomainError(f"u_e has shape {u_e.shape}, expected {(2 * self.d1,) * 2}")
        if u_f.shape != (2 * self.d2, 2 * self.d2):
            raise DomainError(f"u_f has shape {u_f.shape}, expected {(2 * self.d2,) * 2}")
        if not qmath.is_unitary(u_e):
            raise DomainError("u_e is not unitary")
        if not qmath.is_unitary(u_f):
            raise DomainError("u_f is not unitary")

    @classmethod
    def identity(cls, d1: int = 1, d2: int = 1) -> "AttackPair":
        return cls(np.eye(2 * d1), np.eye(2 * d2), d1, d2)

    @classmethod
    def from_transit_ops(cls, forward=None, backward=None, d1: int = 1, d2: int = 1) -> "AttackPair":
        """Attack that applies single-qubit operators to the transit qubit and
        leaves both ancillas untouched."""
        fwd = np.eye(2) if forward is None else np.asarray(forward, dtype=complex)
        bwd = np.eye(2) if backward is None else np.asarray(backward, dtype=complex)
        return cls(np.kron(fwd, np.eye(d1)), np.kron(np.eye(d2), bwd), d1, d2)

    def composed(self) -> np.ndarray:
        """V on E2 (x) T (x) E1."""
        return np.kron(self.u_f, np.eye(self.d1)) @ np.kron(np.eye(self.d2), self.u_e)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "d1": self.d1,
            "d2": self.d2,
            "u_e": _matrix_to_json(self.u_e),
            "u_f": _matrix_to_json(self.u_f),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackPair":
        try:
            version = doc["format_version"]
            if version != FORMAT_VERSION:
                raise ConfigError(f"unsupported attack format_version {version!r}")
            return cls(_matrix_from_json(doc["u_e"]), _matrix_from_json(doc["u_f"]), int(doc["d1"]), int(doc["d2"]))
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"malformed attack document: {exc!r}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "AttackPair":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(doc)


def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


@dataclass(frozen=True)
class SiftDecomposition:
    """``e_a[i, j]`` is Eve's (sub-normalized) E2 vector for Alice sending
    ``|i>`` and the transit ending in ``|j>``."""

    e_a: np.ndarray  # shape (2, 2, d2)

    def constraint_residuals(self) -> tuple[float, float, float]:
        e = self.e_a
        r0 = abs(np.vdot(e[0, 0], e[0, 0]) + np.vdot(e[0, 1], e[0, 1]) - 1.0)
        r1 = abs(np.vdot(e[1, 0], e[1, 0]) + np.vdot(e[1, 1], e[1, 1]) - 1.0)
        r2 = abs(np.vdot(e[0, 0], e[1, 0]) + np.vdot(e[0, 1], e[1, 1]))
        return float(r0), float(r1), float(r2)

    def overlap(self, a: tuple[int, int], b: tuple[int, int]) -> complex:
        return complex(np.vdot(self.e_a[a], self.e_a[b]))


@dataclass(frozen=True)
class CtrlDecomposition:
    """Forward-leg vectors ``e_b[s, t]`` (s, t in 0=+, 1=-) on E1 and the four
    round-trip vectors ``f[k]`` on E2 (x) E1.

    ``f`` is kept exactly as the displayed sums; each has squared norm four
    times the probability it carries, so normalization reads
    ``(|f0|^2 + |f1|^2) / 4 == 1``.
    """

    e_b: np.ndarray  # shape (2, 2, d1)
    f: np.ndarray  # shape (4, d2 * d1)

    def constraint_residuals(self) -> tuple[float, float, float]:
        f = self.f
        n = [np.vdot(v, v).real for v in f]
        r0 = abs((n[0] + n[1]) / 4.0 - 1.0)
        r1 = abs((n[2] + n[3]) / 4.0 - 1.0)
        r2 = abs(np.vdot(f[0], f[2]) + np.vdot(f[1], f[3])) / 4.0
        return float(r0), float(r1), float(r2)

    def forward_residuals(self) -> tuple[float, float, float]:
        e = self.e_b
        r0 = abs(np.vdot(e[0, 0], e[0, 0]) + np.vdot(e[0, 1], e[0, 1]) - 1.0)
        r1 = abs(np.vdot(e[1, 0], e[1, 0]) + np.vdot(e[1, 1], e[1, 1]) - 1.0)
        r2 = abs(np.vdot(e[0, 0], e[1, 0]) + np.vdot(e[0, 1], e[1, 1]))
        return float(r0), float(r1), float(r2)


@dataclass(frozen=True)
class ChannelStats:
    """``p_a[i][j]``: Bob reads ``|j>`` in Z given Alice sent ``|i>``.
    ``p_b[s][t]``: Bob reads X outcome ``t`` on a CTRL qubit he prepared as ``s``
    (index 0 is ``+``, 1 is ``-``)."""

    p_a: np.ndarray
    p_b: np.ndarray

    def __post_init__(self):
        tol = tolerances.get().probability_sum
        for name in ("p_a", "p_b"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (2, 2):
                raise DomainError(f"{name} must be 2x2, got {m.shape}")
            if np.any(m < -tol) or np.any(m > 1.0 + tol):
                raise DomainError(f"{name} entries must lie in [0, 1]")
            if np.any(np.abs(m.sum(axis=1) - 1.0) > tol):
                raise DomainError(f"rows of {name} must sum to 1")
            m = np.clip(m, 0.0, 1.0)
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @classmethod
    def noiseless(cls) -> "ChannelStats":
        return cls(np.eye(2), np.eye(2))

    def to_dict(self) -> dict:
        return {"p_a": self.p_a.tolist(), "p_b": self.p_b.tolist()}


def decompose_sift(attack: AttackPair) -> SiftDecomposition:
    d2 = attack.d2
    # column for |0>_E2 |i>_T is i; row for |k>_E2 |j>_T is 2k + j
    block = attack.u_f[:, :2].reshape(d2, 2, 2)  # [k, j, i]
    e_a = np.transpose(block, (2, 1, 0)).copy()
    sq = np.sum(np.abs(e_a) ** 2, axis=2)
    e_a[sq < tolerances.get().zero_vector] = 0.0
    e_a.setflags(write=False)
    return SiftDecomposition(e_a)


def forward_vectors(attack: AttackPair) -> np.ndarray:
    """e_b[s, t] = (<t|_T (x) I) u_e (|s>_T |0>_E1) in the X basis."""
    d1 = attack.d1
    out = np.empty((2, 2, d1), dtype=complex)
    for s, ket in enumerate(qmath.X_BASIS):
        psi = attack.u_e @ np.kron(ket, qmath.basis_state(0, d1))
        psi = psi.reshape(2, d1)
        for t, bra in enumerate(qmath.X_BASIS):
            out[s, t] = bra.conj() @ psi
    return out


def decompose_ctrl(attack: AttackPair) -> CtrlDecomposition:
    e_a = decompose_sift(attack).e_a
    e_b = forward_vectors(attack)
    f = np.empty((4, attack.d2 * attack.d1), dtype=complex)
    for s in range(2):
        a = e_b[s, 0] + e_b[s, 1]
        b = e_b[s, 0] - e_b[s, 1]
        f[2 * s] = (np.kron(e_a[0, 0], a) + np.kron(e_a[0, 1], a)
                    + np.kron(e_a[1, 0], b) + np.kron(e_a[1, 1], b))
        f[2 * s + 1] = (np.kron(e_a[0, 0], a) - np.kron(e_a[0, 1], a)
                        + np.kron(e_a[1, 0], b) - np.kron(e_a[1, 1], b))
    e_b.setflags(write=False)
    f.setflags(write=False)
    return CtrlDecomposition(e_b, f)


def ctrl_round_trip(attack: AttackPair, sign: int) -> np.ndarray:
    """V (|0>_E2 |sign>_T |0>_E1) projected onto each X outcome of T.

    Returns an array of shape (2, d2 * d1); row ``t`` equals ``f[2*sign + t] / 2``.
    """
    d1, d2 = attack.d1, attack.d2
    psi = attack.composed() @ qmath.kron(qmath.basis_state(0, d2), qmath.X_BASIS[sign], qmath.basis_state(0, d1))
    psi = psi.reshape(d2, 2, d1)
    return np.stack([np.einsum("t,ktl->kl", bra.conj(), psi).ravel() for bra in qmath.X_BASIS])


def channel_stats(attack: AttackPair) -> ChannelStats:
    sift = decompose_sift(attack)
    ctrl = decompose_ctrl(attack)
    p_a = np.sum(np.abs(sift.e_a) ** 2, axis=2)
    p_b = (np.sum(np.abs(ctrl.f) ** 2, axis=1) / 4.0).reshape(2, 2)
    return ChannelStats(p_a, p_b)


def rho_be2(d: SiftDecomposition) -> np.ndarray:
    """Classical-quantum state of Bob's Z outcome and Eve's E2, B first."""
    e = d.e_a
    block0 = qmath.projector(e[0, 0]) + qmath.projector(e[1, 0])
    block1 = qmath.projector(e[0, 1]) + qmath.projector(e[1, 1])
    return 0.5 * (np.kron(qmath.projector(qmath.KET0), block0) + np.kron(qmath.projector(qmath.KET1), block1))


def rho_be2c(d: SiftDecomposition) -> np.ndarray:
    """rho_BE2 extended by a register C (|0> = agree, |1> = disagree); order B, E2, C."""
    e = d.e_a
    agree, disagree = qmath.projector(qmath.KET0), qmath.projector(qmath.KET1)
    out = 0
    for i in range(2):
        for j in range(2):
            c = agree if i == j else disagree
            out = out + 0.5 * qmath.kron(qmath.projector(qmath.Z_BASIS[j]), qmath.projector(e[i, j]), c)
    return out


def h_b_given_a_from_pa(p_a) -> float:
    return qmath.shannon_entropy(0.5 * np.asarray(p_a, dtype=float).ravel()) - 1.0


def exact_eve_rate(d: SiftDecomposition) -> float:
    """S(B|E2) - H(B|A) for this attack, evaluated exactly."""
    d2 = d.e_a.shape[2]
    s_b_e = qmath.conditional_entropy(rho_be2(d), (2, d2), [0])
    p_a = np.sum(np.abs(d.e_a) ** 2, axis=2)
    return s_b_e - h_b_given_a_from_pa(p_a)


def sample_random_attack(seed, d1: int, d2: int) -> AttackPair:
    """Random attack from QR-orthonormalized complex Gaussian matrices.

    ``seed`` is anything ``numpy.random.default_rng`` accepts (an int or a
    sequence of ints).
    """
    if d1 not in SUPPORTED_ANCILLA_DIMS or d2 not in SUPPORTED_ANCILLA_DIMS:
        raise DomainError(f"ancilla dimensions must be in {SUPPORTED_ANCILLA_DIMS}, got d1={d1}, d2={d2}")
    rng = np.random.default_rng(seed)
    return AttackPair(_random_unitary(2 * d1, rng), _random_unitary(2 * d2, rng), d1, d2)


def _random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    # one Newton-Schulz step removes residual drift from exact unitarity
    q = 1.5 * q - 0.5 * q @ q.conj().T @ q
    return q


@dataclass(frozen=True)
class OverlapReport:
    lhs: float
    rhs: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def check_overlap_inequality(attack: AttackPair) -> OverlapReport:
    """Compare |<e00|e11>| with the lower bound C computed from the statistics."""
    from .keyrate import c_lower_bound

    lhs = abs(decompose_sift(attack).overlap((0, 0), (1, 1)))
    rhs = c_lower_bound(channel_stats(attack))
    return OverlapReport(lhs, rhs, lhs >= rhs - tolerances.get().inequality_slack)


# Reference attacks used by tests, fixtures and the CLI.

def rotation(theta: float) -> np.ndarray:
    """exp(-i theta Y): |0> -> cos|0> + sin|1>."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def z_copier(d1: int = 1) -> AttackPair:
    """u_f = CNOT from the transit qubit onto E2 (d2 = 2); forward leg untouched."""
    cnot = np.zeros((4, 4), dtype=complex)
    for k in range(2):
        for t in range(2):
            cnot[2 * (k ^ t) + t, 2 * k + t] = 1.0
    return AttackPair(np.eye(2 * d1), cnot, d1, 2)
