"""Acceptance suite.

Each test carries ``@pytest.mark.criterion(k)``; the conftest hook prints one
PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time

import numpy as np
import pytest

from sqkd import cli, qmath
from sqkd.attack import (
    channel_stats,
    ctrl_round_trip,
    decompose_ctrl,
    decompose_sift,
    rho_be2c,
    sample_random_attack,
)
from sqkd.keyrate import is_nonincreasing, rate_curve, threshold_q, zero_crossing
from sqkd.protocol import AttackChannel, IdealChannel, ProtocolConfig, estimate_stats, run_protocol, run_trials
from sqkd.verify import verify_bound

# Reference noise thresholds, rows Q_Z = Q/2, Q, 2Q and columns Q_X = Q/2, Q, 2Q.
REFERENCE_THRESHOLDS = {
    (0.5, 0.5): 0.0891, (0.5, 1.0): 0.0657, (0.5, 2.0): 0.0471,
    (1.0, 0.5): 0.0589, (1.0, 1.0): 0.0446, (1.0, 2.0): 0.0329,
    (2.0, 0.5): 0.0442, (2.0, 1.0): 0.0334, (2.0, 2.0): 0.0249,
}
THRESHOLD_TOL = 0.0005
GRID_BUDGET_S = 5.0
CURVE_BUDGET_S = 5.0
SOUNDNESS_SAMPLES = 10_000
SOUNDNESS_BUDGET_S = 60.0
SOUNDNESS_TOL = 1e-9
CONSTRAINT_SAMPLES = 1000
CONSTRAINT_TOL = 1e-9
STATS_BITS = 100_000
STATS_SIGMAS = 3.0
NOISELESS_SEEDS = 100
SSA_STATES = 1000
SPECTRUM_TOL = 1e-9
DIAGONAL_TOL = 1e-12

CELLS = sorted(REFERENCE_THRESHOLDS)


def _cell_id(cell):
    return f"zeta{cell[0]:g}-xi{cell[1]:g}"


# -- 1. threshold grid -----------------------------------------------------------

@pytest.mark.criterion(1)
@pytest.mark.parametrize("cell", CELLS, ids=_cell_id)
def test_threshold_grid_cell(cell, detail):
    q = threshold_q(*cell)
    expected = REFERENCE_THRESHOLDS[cell]
    detail(f"computed {100 * q:.3f}% vs reference {100 * expected:.2f}% (tol {100 * THRESHOLD_TOL:.2f} points)")
    assert abs(q - expected) <= THRESHOLD_TOL


@pytest.mark.criterion(1)
def test_threshold_grid_command_runtime(tmp_path, detail):
    out = tmp_path / "table1.csv"
    start = time.perf_counter()
    code = cli.main(["table1", "--out", str(out)])
    elapsed = time.perf_counter() - start
    detail(f"table1 wall time {elapsed:.3f}s (budget {GRID_BUDGET_S}s), exit {code}")
    assert code == 0
    assert len(out.read_text().splitlines()) == 10
    assert elapsed < GRID_BUDGET_S


# -- 2. rate curves -------------------------------------------------------------

@pytest.mark.criterion(2)
@pytest.mark.parametrize("cell", CELLS, ids=_cell_id)
def test_rate_curve_case(cell, detail):
    curve = rate_curve(*cell, 0.12, 1201)
    crossing = zero_crossing(curve)
    expected = REFERENCE_THRESHOLDS[cell]
    detail(f"sign change at {100 * crossing:.3f}% vs reference {100 * expected:.2f}%")
    assert curve[0][1] == pytest.approx(1.0, abs=1e-12)
    assert is_nonincreasing(curve, up_to=threshold_q(*cell))
    assert abs(crossing - expected) <= THRESHOLD_TOL


@pytest.mark.criterion(2)
def test_rate_curves_runtime(detail):
    start = time.perf_counter()
    for cell in CELLS:
        rate_curve(*cell, 0.12, 1201)
    elapsed = time.perf_counter() - start
    detail(f"nine curves of 1201 points in {elapsed:.3f}s (budget {CURVE_BUDGET_S}s)")
    assert elapsed < CURVE_BUDGET_S


# -- 3. bound soundness ---------------------------------------------------------

@pytest.fixture(scope="module")
def soundness_campaign():
    start = time.perf_counter()
    report = verify_bound(SOUNDNESS_SAMPLES, 2, 2, seed=0)
    return report, time.perf_counter() - start


@pytest.mark.criterion(3)
def test_exact_rate_never_below_bound(soundness_campaign, detail):
    report, elapsed = soundness_campaign
    bad = [v for v in report["violations"] if v["rate_slack"] < -SOUNDNESS_TOL]
    detail(f"{report['samples']} attacks, min rate slack {report['min_slack']:.4g}, violations {len(bad)}")
    assert report["samples"] >= SOUNDNESS_SAMPLES
    assert not bad


@pytest.mark.criterion(3)
def test_overlap_never_below_lower_bound(soundness_campaign, detail):
    report, _ = soundness_campaign
    bad = [v for v in report["violations"] if v["overlap_slack"] < -SOUNDNESS_TOL]
    detail(f"min overlap slack {report['min_overlap_slack']:.4g}, violations {len(bad)}")
    assert not bad


@pytest.mark.criterion(3)
def test_soundness_campaign_runtime(soundness_campaign, detail):
    _, elapsed = soundness_campaign
    detail(f"campaign wall time {elapsed:.2f}s (budget {SOUNDNESS_BUDGET_S}s)")
    assert elapsed < SOUNDNESS_BUDGET_S


# -- 4. decomposition constraints ------------------------------------------------

@pytest.mark.criterion(4)
@pytest.mark.parametrize("d1,d2", [(a, b) for a in (1, 2, 4) for b in (1, 2, 4)], ids=lambda d: str(d))
def test_decomposition_constraints(d1, d2, detail):
    worst = 0.0
    for i in range(CONSTRAINT_SAMPLES):
        attack = sample_random_attack([100 + d1, d2, i], d1, d2)
        ctrl = decompose_ctrl(attack)
        worst = max(worst, *decompose_sift(attack).constraint_residuals(), *ctrl.constraint_residuals(),
                    *ctrl.forward_residuals())
        for sign in (0, 1):
            gap = np.abs(ctrl_round_trip(attack, sign) - ctrl.f[2 * sign: 2 * sign + 2] / 2).max()
            worst = max(worst, float(gap))
    detail(f"d1={d1} d2={d2}: worst residual {worst:.2e} over {CONSTRAINT_SAMPLES} attacks")
    assert worst <= CONSTRAINT_TOL


# -- 5. simulator vs analytic statistics ------------------------------------------

@pytest.mark.criterion(5)
@pytest.mark.parametrize("index,dims", list(enumerate([(2, 2), (1, 2), (2, 1), (4, 4), (2, 4)])))
def test_simulated_statistics_match_analytic(index, dims, detail):
    attack = sample_random_attack([500, index], *dims)
    # N = 4n(1 + delta) qubits of each kind; about N/2 land in each pool
    cfg = ProtocolConfig(n=STATS_BITS // 2, delta=0.05, t_x=1.0, t_z=1.0, seed=1000 + index)
    transcript = run_protocol(cfg, AttackChannel(attack))
    est = estimate_stats([transcript])
    assert est.counts_a.sum() >= STATS_BITS and est.counts_b.sum() >= STATS_BITS
    ref = channel_stats(attack)
    se_a, se_b = est.standard_errors(ref)
    emp = est.channel_stats()
    z_a = np.abs(emp.p_a - ref.p_a) / se_a
    z_b = np.abs(emp.p_b - ref.p_b) / se_b
    detail(f"dims {dims}: {est.counts_a.sum()} SIFT-Z / {est.counts_b.sum()} CTRL-X bits, "
           f"max |z| = {max(z_a.max(), z_b.max()):.2f}")
    assert z_a.max() <= STATS_SIGMAS
    assert z_b.max() <= STATS_SIGMAS


# -- 6. noiseless end-to-end --------------------------------------------------------

@pytest.mark.criterion(6)
def test_noiseless_runs_agree(detail):
    transcripts = run_trials(ProtocolConfig(n=32, delta=0.5, seed=2024), IdealChannel(), NOISELESS_SEEDS)
    seeds = {t.config.seed for t in transcripts}
    ok = [t for t in transcripts
          if t.abort is None and t.q_x_est == 0.0 and t.q_z_est == 0.0
          and t.raw_key_a is not None and np.array_equal(t.raw_key_a, t.raw_key_b)]
    detail(f"{len(ok)}/{len(transcripts)} runs clean over {len(seeds)} distinct seeds")
    assert len(seeds) == NOISELESS_SEEDS
    assert len(ok) == NOISELESS_SEEDS


# -- 7. entropy core -------------------------------------------------------------

@pytest.mark.criterion(7)
def test_strong_subadditivity(detail):
    rng = np.random.default_rng(77)
    dims = (2, 2, 2)
    worst = -math.inf
    for _ in range(SSA_STATES):
        rank = int(rng.integers(1, 9))
        g = rng.standard_normal((8, rank)) + 1j * rng.standard_normal((8, rank))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        s = lambda keep: qmath.von_neumann_entropy(qmath.partial_trace(rho, dims, keep))  # noqa: E731
        worst = max(worst, s([0, 1, 2]) + s([1]) - s([0, 1]) - s([1, 2]))
    detail(f"{SSA_STATES} states, max of S(ABC)+S(B)-S(AB)-S(BC) = {worst:.3e}")
    assert worst <= 1e-9


@pytest.mark.criterion(7)
def test_pair_spectrum_closed_form(detail):
    worst = 0.0
    for i in range(1000):
        d2 = (2, 4)[i % 2]
        e = decompose_sift(sample_random_attack([700, i], 1, d2)).e_a
        p00, p11 = np.vdot(e[0, 0], e[0, 0]).real, np.vdot(e[1, 1], e[1, 1]).real
        ov = abs(np.vdot(e[0, 0], e[1, 1])) ** 2
        root = math.sqrt((p00 - p11) ** 2 + 4 * ov)
        closed = np.array([(p00 + p11 + root) / 2, (p00 + p11 - root) / 2])
        numeric = qmath.hermitian_eigenvalues(qmath.projector(e[0, 0]) + qmath.projector(e[1, 1]))
        worst = max(worst, float(np.abs(numeric[:2] - closed).max()), float(np.abs(numeric[2:]).max(initial=0.0)))
    detail(f"worst eigenvalue gap {worst:.2e} (tol {SPECTRUM_TOL})")
    assert worst <= SPECTRUM_TOL


@pytest.mark.criterion(7)
def test_diagonal_entropy_identity(detail):
    worst = 0.0
    for i in range(1000):
        attack = sample_random_attack([900, i], 1, (2, 4)[i % 2])
        p = channel_stats(attack).p_a
        half = 0.5 * np.array([p[0, 0], p[0, 1], p[1, 1], p[1, 0]])
        target = qmath.shannon_entropy(half)
        worst = max(worst,
                    abs(qmath.von_neumann_entropy(np.diag(half)) - target),
                    abs(qmath.von_neumann_entropy(rho_be2c(decompose_sift(attack))) - target))
    detail(f"worst |S - H| {worst:.2e} (tol {DIAGONAL_TOL})")
    assert worst <= DIAGONAL_TOL


# -- 8. determinism -------------------------------------------------------------------

DETERMINISM_COMMANDS = {
    "table1": ["table1"],
    "table1-json": ["table1", "--format", "json"],
    "curve": ["curve", "--zeta", "2", "--xi", "0.5", "--q-max", "0.1", "--steps", "201"],
    "curve-json": ["curve", "--zeta", "1", "--xi", "1", "--q-max", "0.05", "--steps", "51", "--format", "json"],
    "simulate": ["simulate", "{config}", "--trials", "3", "--transcripts"],
    "verify-bound": ["verify-bound", "--samples", "200", "--include-identity"],
}


@pytest.mark.criterion(8)
@pytest.mark.parametrize("name", sorted(DETERMINISM_COMMANDS))
def test_repeated_runs_are_byte_identical(name, tmp_path, detail):
    config = tmp_path / "run.toml"
    config.write_text('n = 64\ndelta = 0.5\nseed = 1\n[channel]\nkind = "symmetric-noise"\nq_z = 0.02\nq_x = 0.03\n')
    argv = [a.replace("{config}", str(config)) for a in DETERMINISM_COMMANDS[name]]
    payloads, manifests = [], []
    for run in range(2):
        out = tmp_path / f"out{run}"
        assert cli.main(argv + ["--seed", "42", "--out", str(out)]) == 0
        payloads.append(out.read_bytes())
        m = json.loads((tmp_path / f"out{run}.manifest.json").read_text())
        for volatile in ("timestamp", "duration_s", "outputs"):
            m.pop(volatile)
        manifests.append(m)
    detail(f"{len(payloads[0])} payload bytes")
    assert payloads[0] == payloads[1]
    assert manifests[0] == manifests[1]
