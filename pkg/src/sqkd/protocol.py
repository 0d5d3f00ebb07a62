"""Monte Carlo simulation of the protocol up to the raw key.

Bob prepares ``N`` qubits from {|+>, |->} and sends them to Alice.  Alice
prepares ``M`` qubits in the Z basis, shuffles all ``N + M`` and returns the
first ``2N``; she never measures.  Bob measures every returned qubit in a
random basis, the parties sift SIFT-Z and CTRL-X bits, check error rates
against thresholds and keep ``n`` SIFT-Z bits as raw key.

Each returned qubit is simulated as an exact pure state on
``E2 (x) T (x) E1``.  SIFT qubits carry a trivial ``E1`` in ``|0>``.  Bob's
outcome is drawn from the Born probabilities of the transit qubit with both
ancillas traced out.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import qmath
from .attack import AttackPair, ChannelStats
from .errors import ConfigError, DomainError
from .keyrate import keyrate_bound

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FORMAT_VERSION = 1
CHUNK = 1 << 15

Z, X = 0, 1
ABORT_INSUFFICIENT_SIFT = "insufficient-sift"
ABORT_CTRL = "ctrl-threshold"
ABORT_TEST = "test-threshold"


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    delta: float = 0.0
    m: Optional[int] = None  # defaults to N
    t_x: float = 0.11
    t_z: float = 0.11
    seed: int = 0
    max_restarts: int = 3

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if self.delta < 0:
            raise DomainError(f"delta must be non-negative, got {self.delta!r}")
        for name in ("t_x", "t_z"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v!r} outside [0, 1]")
        if self.max_restarts < 0:
            raise DomainError("max_restarts must be non-negative")
        if self.m is None:
            object.__setattr__(self, "m", self.big_n)
        if self.m < self.big_n:
            raise DomainError(f"m={self.m} must be at least N={self.big_n}")

    @property
    def big_n(self) -> int:
        # the epsilon absorbs binary rounding in products such as 4 * 10 * 1.1
        return math.ceil(4 * self.n * (1 + self.delta) - 1e-9)


@dataclass(frozen=True)
class IdealChannel:
    kind = "ideal"
    d1 = 1
    d2 = 1


@dataclass(frozen=True)
class NoiseChannel:
    """Pauli noise on the Alice->Bob leg: X with probability ``q_z`` and,
    independently, Z with probability ``q_x``.

    SIFT qubits (Z states) are therefore flipped with probability ``q_z`` and
    CTRL qubits (X states) with probability ``q_x``.
    """

    q_z: float
    q_x: float
    kind = "symmetric-noise"
    d1 = 1
    d2 = 1

    def __post_init__(self):
        for name in ("q_z", "q_x"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                raise DomainError(f"{name}={v!r} outside [0, 1/2]")


@dataclass(frozen=True)
class AttackChannel:
    attack: AttackPair
    kind = "attack"

    @property
    def d1(self) -> int:
        return self.attack.d1

    @property
    def d2(self) -> int:
        return self.attack.d2


ChannelModel = Union[IdealChannel, NoiseChannel, AttackChannel]


def channel_to_dict(channel: ChannelModel) -> dict:
    if isinstance(channel, NoiseChannel):
        return {"kind": channel.kind, "q_z": channel.q_z, "q_x": channel.q_x}
    if isinstance(channel, AttackChannel):
        return {"kind": channel.kind, "attack": channel.attack.to_dict()}
    return {"kind": channel.kind}


# -- random streams ---------------------------------------------------------

_ROLES = ("bob_prepare", "alice", "eve", "bob_basis", "born", "bob_test")


def role_streams(seed: int, attempt: int = 0) -> dict[str, np.random.Generator]:
    """One independent generator per role, derived from the master seed."""
    root = np.random.SeedSequence(entropy=seed, spawn_key=(attempt,))
    return {name: np.random.default_rng(child) for name, child in zip(_ROLES, root.spawn(len(_ROLES)))}


# -- protocol steps ------------------------------------------------------------

def prepare_bob(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Bob's signs: 0 for |+>, 1 for |->."""
    return rng.integers(0, 2, size=n_qubits, dtype=np.uint8)


def bob_states(signs: np.ndarray) -> np.ndarray:
    return np.stack(qmath.X_BASIS)[signs]


def transit_forward(channel: ChannelModel, signs: np.ndarray) -> np.ndarray:
    """States on T (x) E1 as Alice receives them, shape (N, 2, d1)."""
    d1 = channel.d1
    states = np.zeros((len(signs), 2, d1), dtype=complex)
    states[:, :, 0] = bob_states(signs)
    if isinstance(channel, AttackChannel):
        flat = states.reshape(len(signs), 2 * d1) @ channel.attack.u_e.T
        states = flat.reshape(len(signs), 2, d1)
    return states


def alice_insert_reorder(n_bob: int, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Alice's Z bits and the shuffle of all ``n_bob + m`` qubits.

    ``permutation[k]`` is the label of the qubit at position ``k``; labels
    below ``n_bob`` are Bob's qubits, the rest are Alice's (offset by ``n_bob``).
    Only positions ``0 .. 2 n_bob - 1`` are sent on.
    """
    bits = rng.integers(0, 2, size=m, dtype=np.uint8)
    permutation = rng.permutation(n_bob + m)
    return bits, permutation


def assemble_sent(forward: np.ndarray, alice_bits: np.ndarray, permutation: np.ndarray, n_sent: int) -> np.ndarray:
    """Stack the qubits Alice sends, on T (x) E1, in sent order."""
    n_bob, _, d1 = forward.shape
    labels = permutation[:n_sent]
    out = np.zeros((n_sent, 2, d1), dtype=complex)
    from_bob = labels < n_bob
    out[from_bob] = forward[labels[from_bob]]
    alice_idx = labels[~from_bob] - n_bob
    rows = np.flatnonzero(~from_bob)
    out[rows, alice_bits[alice_idx], 0] = 1.0
    return out


def transit_backward(channel: ChannelModel, sent: np.ndarray, eve_rng: np.random.Generator) -> np.ndarray:
    """States on E2 (x) T (x) E1 reaching Bob, shape (k, d2, 2, d1)."""
    k, _, d1 = sent.shape
    d2 = channel.d2
    full = np.zeros((k, d2, 2, d1), dtype=complex)
    full[:, 0] = sent
    if isinstance(channel, AttackChannel):
        flat = full.reshape(k, 2 * d2, d1)
        full = np.einsum("ab,nbl->nal", channel.attack.u_f, flat).reshape(k, d2, 2, d1)
    elif isinstance(channel, NoiseChannel):
        flip_x = eve_rng.random(k) < channel.q_z
        flip_z = eve_rng.random(k) < channel.q_x
        full[flip_x] = full[flip_x][:, :, ::-1, :]
        full[flip_z, :, 1, :] *= -1.0
    return full


def born_probability_one(states: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Probability of outcome 1 (|1> or |->) when measuring T in each basis."""
    vec1 = np.stack([qmath.KET1, qmath.MINUS])[bases]  # (k, 2)
    amp1 = np.einsum("nt,nktl->nkl", vec1.conj(), states)
    p1 = np.sum(np.abs(amp1) ** 2, axis=(1, 2))
    norm = np.sum(np.abs(states) ** 2, axis=(1, 2, 3))
    return p1 / norm


def measure_bob(states: np.ndarray, bases: np.ndarray, born_rng: np.random.Generator) -> np.ndarray:
    p1 = born_probability_one(states, bases)
    return (born_rng.random(len(bases)) < p1).astype(np.uint8)


def sift(permutation: np.ndarray, bases: np.ndarray, n_bob: int) -> tuple[np.ndarray, np.ndarray]:
    """SIFT-Z (Alice's qubit, Z basis) and CTRL-X (Bob's qubit, X basis) positions."""
    labels = permutation[: len(bases)]
    from_alice = labels >= n_bob
    return np.flatnonzero(from_alice & (bases == Z)), np.flatnonzero(~from_alice & (bases == X))


def error_rate(sent: np.ndarray, received: np.ndarray) -> Optional[float]:
    if len(sent) == 0:
        return None
    return float(np.count_nonzero(sent != received)) / len(sent)


# -- transcript ------------------------------------------------------------------

def _ro(a) -> Optional[np.ndarray]:
    if a is None:
        return None
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProtocolTranscript:
    config: ProtocolConfig
    channel_kind: str
    attempts: int
    bob_prepared: np.ndarray
    alice_prepared: np.ndarray
    permutation: np.ndarray
    bob_bases: np.ndarray
    bob_outcomes: np.ndarray
    sift_z_indices: np.ndarray
    ctrl_x_indices: np.ndarray
    test_indices: np.ndarray
    q_x_est: Optional[float]
    q_z_est: Optional[float]
    abort: Optional[str]
    raw_key_a: Optional[np.ndarray]
    raw_key_b: Optional[np.ndarray]

    def __post_init__(self):
        for name in ("bob_prepared", "alice_prepared", "permutation", "bob_bases", "bob_outcomes",
                     "sift_z_indices", "ctrl_x_indices", "test_indices", "raw_key_a", "raw_key_b"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    @property
    def n_bob(self) -> int:
        return len(self.bob_prepared)

    @property
    def sent_positions(self) -> np.ndarray:
        """Labels of the qubits in the returned sequence."""
        return self.permutation[: 2 * self.n_bob]

    def alice_bits_at(self, positions: np.ndarray) -> np.ndarray:
        return self.alice_prepared[self.permutation[positions] - self.n_bob]

    def bob_signs_at(self, positions: np.ndarray) -> np.ndarray:
        return self.bob_prepared[self.permutation[positions]]

    def to_dict(self) -> dict:
        def bits(a):
            return None if a is None else [int(x) for x in a]

        symbols = (("0", "1"), ("+", "-"))
        return {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "channel_kind": self.channel_kind,
            "attempts": self.attempts,
            "bob_prepared": ["+-"[int(s)] for s in self.bob_prepared],
            "alice_prepared": bits(self.alice_prepared),
            "permutation": bits(self.permutation),
            "sent_positions": bits(self.sent_positions),
            "bob_bases": ["ZX"[int(b)] for b in self.bob_bases],
            "bob_outcomes": [symbols[int(b)][int(o)] for b, o in zip(self.bob_bases, self.bob_outcomes)],
            "sift_z_indices": bits(np.sort(self.sift_z_indices)),
            "ctrl_x_indices": bits(np.sort(self.ctrl_x_indices)),
            "test_indices": bits(np.sort(self.test_indices)),
            "q_x_est": self.q_x_est,
            "q_z_est": self.q_z_est,
            "abort": self.abort,
            "raw_key_a": bits(self.raw_key_a),
            "raw_key_b": bits(self.raw_key_b),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolTranscript":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported transcript format_version {doc.get('format_version')!r}")
        bases = np.array(["ZX".index(b) for b in doc["bob_bases"]], dtype=np.uint8)
        outcomes = np.array([{"0": 0, "1": 1, "+": 0, "-": 1}[o] for o in doc["bob_outcomes"]], dtype=np.uint8)

        def arr(key, dtype):
            v = doc[key]
            return None if v is None else np.array(v, dtype=dtype)

        return cls(
            config=ProtocolConfig(**doc["config"]),
            channel_kind=doc["channel_kind"],
            attempts=doc["attempts"],
            bob_prepared=np.array(["+-".index(s) for s in doc["bob_prepared"]], dtype=np.uint8),
            alice_prepared=arr("alice_prepared", np.uint8),
            permutation=arr("permutation", np.int64),
            bob_bases=bases,
            bob_outcomes=outcomes,
            sift_z_indices=arr("sift_z_indices", np.int64),
            ctrl_x_indices=arr("ctrl_x_indices", np.int64),
            test_indices=arr("test_indices", np.int64),
            q_x_est=doc["q_x_est"],
            q_z_est=doc["q_z_est"],
            abort=doc["abort"],
            raw_key_a=arr("raw_key_a", np.uint8),
            raw_key_b=arr("raw_key_b", np.uint8),
        )


# -- driver -----------------------------------------------------------------------

def _quantum_round(config: ProtocolConfig, channel: ChannelModel, streams) -> dict:
    n_bob = config.big_n
    n_sent = 2 * n_bob
    signs = prepare_bob(n_bob, streams["bob_prepare"])
    forward = transit_forward(channel, signs)
    alice_bits, permutation = alice_insert_reorder(n_bob, config.m, streams["alice"])
    bases = streams["bob_basis"].integers(0, 2, size=n_sent, dtype=np.uint8)
    outcomes = np.empty(n_sent, dtype=np.uint8)
    for start in range(0, n_sent, CHUNK):
        stop = min(start + CHUNK, n_sent)
        sent = assemble_sent(forward, alice_bits, permutation[start:stop], stop - start)
        arriving = transit_backward(channel, sent, streams["eve"])
        outcomes[start:stop] = measure_bob(arriving, bases[start:stop], streams["born"])
    return {"signs": signs, "alice_bits": alice_bits, "permutation": permutation, "bases": bases, "outcomes": outcomes}


def run_protocol(config: ProtocolConfig, channel: ChannelModel) -> ProtocolTranscript:
    n_bob = config.big_n
    for attempt in range(config.max_restarts + 1):
        streams = role_streams(config.seed, attempt)
        rnd = _quantum_round(config, channel, streams)
        sift_z, ctrl_x = sift(rnd["permutation"], rnd["bases"], n_bob)
        if len(sift_z) >= 2 * config.n:
            break
    common = dict(
        config=config, channel_kind=channel.kind, attempts=attempt + 1,
        bob_prepared=rnd["signs"], alice_prepared=rnd["alice_bits"], permutation=rnd["permutation"],
        bob_bases=rnd["bases"], bob_outcomes=rnd["outcomes"], sift_z_indices=sift_z, ctrl_x_indices=ctrl_x,
    )
    perm, outcomes = rnd["permutation"], rnd["outcomes"]
    empty = np.array([], dtype=np.int64)
    if len(sift_z) < 2 * config.n:
        return ProtocolTranscript(**common, test_indices=empty, q_x_est=None, q_z_est=None,
                                  abort=ABORT_INSUFFICIENT_SIFT, raw_key_a=None, raw_key_b=None)

    q_x = error_rate(rnd["signs"][perm[ctrl_x]], outcomes[ctrl_x])
    if q_x is not None and q_x > config.t_x:
        return ProtocolTranscript(**common, test_indices=empty, q_x_est=q_x, q_z_est=None,
                                  abort=ABORT_CTRL, raw_key_a=None, raw_key_b=None)

    alice_at = lambda pos: rnd["alice_bits"][perm[pos] - n_bob]  # noqa: E731
    chosen = streams["bob_test"].choice(len(sift_z), size=config.n, replace=False)
    test = np.sort(sift_z[chosen])
    q_z = error_rate(alice_at(test), outcomes[test])
    if q_z > config.t_z:
        return ProtocolTranscript(**common, test_indices=test, q_x_est=q_x, q_z_est=q_z,
                                  abort=ABORT_TEST, raw_key_a=None, raw_key_b=None)

    remaining = np.setdiff1d(sift_z, test)[: config.n]
    return ProtocolTranscript(**common, test_indices=test, q_x_est=q_x, q_z_est=q_z, abort=None,
                              raw_key_a=alice_at(remaining), raw_key_b=outcomes[remaining])


# -- parameter estimation -------------------------------------------------------------

@dataclass(frozen=True)
class StatsEstimate:
    """Pooled outcome counts; ``counts_a[i, j]`` over SIFT-Z bits and
    ``counts_b[s, t]`` over CTRL-X bits."""

    counts_a: np.ndarray
    counts_b: np.ndarray

    @staticmethod
    def _rows(counts: np.ndarray) -> list[Optional[np.ndarray]]:
        out = []
        for row in counts:
            total = row.sum()
            out.append(None if total == 0 else row / total)
        return out

    @property
    def p_a(self) -> list[Optional[np.ndarray]]:
        return self._rows(self.counts_a)

    @property
    def p_b(self) -> list[Optional[np.ndarray]]:
        return self._rows(self.counts_b)

    @property
    def complete(self) -> bool:
        return all(r is not None for r in self.p_a + self.p_b)

    def channel_stats(self) -> ChannelStats:
        if not self.complete:
            raise DomainError("some rows have no samples; statistics are incomplete")
        return ChannelStats(np.array(self.p_a), np.array(self.p_b))

    def standard_errors(self, reference: ChannelStats) -> tuple[np.ndarray, np.ndarray]:
        """Binomial standard errors of each cell given the reference probabilities."""
        def se(p, counts):
            n = counts.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.sqrt(p * (1 - p) / n)
        return se(reference.p_a, self.counts_a), se(reference.p_b, self.counts_b)

    def to_dict(self) -> dict:
        return {"counts_a": self.counts_a.tolist(), "counts_b": self.counts_b.tolist()}


def estimate_stats(transcripts: Sequence[ProtocolTranscript]) -> StatsEstimate:
    if not transcripts:
        raise DomainError("need at least one transcript")
    counts_a = np.zeros((2, 2), dtype=np.int64)
    counts_b = np.zeros((2, 2), dtype=np.int64)
    for t in transcripts:
        sz, cx = t.sift_z_indices, t.ctrl_x_indices
        np.add.at(counts_a, (t.alice_bits_at(sz), t.bob_outcomes[sz]), 1)
        np.add.at(counts_b, (t.bob_signs_at(cx), t.bob_outcomes[cx]), 1)
    return StatsEstimate(counts_a, counts_b)


@dataclass(frozen=True)
class EndToEndReport:
    trials: int
    mean_q_z: Optional[float]
    mean_q_x: Optional[float]
    abort_rate: float
    aborts: dict
    r_tilde_from_estimates: Optional[float]
    estimate: StatsEstimate
    note: Optional[str] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimate"] = self.estimate.to_dict()
        return d


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(trials)]


def _run_one(args):
    config, channel = args
    return run_protocol(config, channel)


def run_trials(config: ProtocolConfig, channel: ChannelModel, trials: int, jobs: int = 1) -> list[ProtocolTranscript]:
    if trials < 1:
        raise DomainError("trials must be at least 1")
    work = [(replace(config, seed=s), channel) for s in trial_seeds(config.seed, trials)]
    if jobs <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def summarize(transcripts: Sequence[ProtocolTranscript]) -> EndToEndReport:
    qz = [t.q_z_est for t in transcripts if t.q_z_est is not None]
    qx = [t.q_x_est for t in transcripts if t.q_x_est is not None]
    aborts: dict[str, int] = {}
    for t in transcripts:
        if t.abort:
            aborts[t.abort] = aborts.get(t.abort, 0) + 1
    est = estimate_stats(transcripts)
    r, note = None, None
    try:
        r = keyrate_bound(est.channel_stats()).r_tilde
    except DomainError as exc:
        note = str(exc)
    return EndToEndReport(
        trials=len(transcripts),
        mean_q_z=float(np.mean(qz)) if qz else None,
        mean_q_x=float(np.mean(qx)) if qx else None,
        abort_rate=sum(aborts.values()) / len(transcripts),
        aborts=dict(sorted(aborts.items())),
        r_tilde_from_estimates=r,
        estimate=est,
        note=note,
    )


def end_to_end_rate(config: ProtocolConfig, channel: ChannelModel, trials: int, jobs: int = 1) -> EndToEndReport:
    return summarize(run_trials(config, channel, trials, jobs))


# -- config files -------------------------------------------------------------------

_CONFIG_KEYS = {"n", "delta", "m", "t_x", "t_z", "seed", "max_restarts", "channel"}
_CHANNEL_KEYS = {"kind", "q_z", "q_x", "attack_file"}


def _line_of(text: str, key: str) -> str:
    pat = re.compile(rf"^\s*(channel\.)?{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return f"line {text.count(chr(10), 0, m.start()) + 1}: " if m else ""


def parse_config(text: str, base_dir: Path | None = None) -> tuple[ProtocolConfig, ChannelModel]:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{_line_of(text, key)}unknown config key {key!r}")
    if "n" not in doc:
        raise ConfigError("missing required key 'n'")
    chan = doc.get("channel", {"kind": "ideal"})
    if not isinstance(chan, dict):
        raise ConfigError(f"{_line_of(text, 'channel')}'channel' must be a table")
    unknown = set(chan) - _CHANNEL_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{_line_of(text, key)}unknown channel key {key!r}")

    try:
        config = ProtocolConfig(**{k: v for k, v in doc.items() if k != "channel"})
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    kind = chan.get("kind", "ideal")
    try:
        if kind == "ideal":
            channel: ChannelModel = IdealChannel()
        elif kind == "symmetric-noise":
            channel = NoiseChannel(float(chan.get("q_z", 0.0)), float(chan.get("q_x", 0.0)))
        elif kind == "attack":
            if "attack_file" not in chan:
                raise ConfigError(f"{_line_of(text, 'kind')}attack channel needs 'channel.attack_file'")
            path = Path(chan["attack_file"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            channel = AttackChannel(AttackPair.load(path))
        else:
            raise ConfigError(f"{_line_of(text, 'kind')}unknown channel kind {kind!r}")
    except DomainError as exc:
        raise ConfigError(f"invalid channel: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read attack file: {exc}") from exc
    return config, channel


def load_config(path) -> tuple[ProtocolConfig, ChannelModel]:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


def transcripts_to_json(transcripts: Sequence[ProtocolTranscript]) -> str:
    return json.dumps([t.to_dict() for t in transcripts], sort_keys=True)
