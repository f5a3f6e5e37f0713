"""Acceptance criteria, run on the shipped default configuration.

Each test prints one ``CRITERION <n> PASS|FAIL`` line with the measured values.
Run ``pytest -s tests/test_acceptance.py`` or ``python tests/test_acceptance.py``
to see the lines alongside the pytest result.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from epsnn.cli import main as cli_main
from epsnn.config import RunConfig, serialize_config
from epsnn.dynamics import ConductanceParams, Convention, NeuronParams, NeuronState, conductance_current, step_neuron
from epsnn.experiments import run_discrimination, run_recognition
from epsnn.fabric import mismatch_sample
from epsnn.plasticity import ErrorPair, PlasticityParams, Role, weight_delta
from epsnn.stimulus import PatternSpec, generate_pattern

N_SEEDS = 10
MIN_SEEDS = 8

# tolerances
BASELINE_RATIO = 1.5
UNTRAINED_D_FRACTION = 0.2
LOSER_FRACTION = 0.2
KS_MIN = 0.2
CANCEL_MAX = 0.7
CANCEL_CONTROL = (0.7, 1.3)
LEAK_REL = 0.01
MISMATCH_MEAN_REL = 0.01
MISMATCH_STD_REL = 0.05
DT_REL = 0.10
RUNTIME_PER_SEED = 120.0


def report(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)


@pytest.fixture(autouse=True)
def _show(capsys):
    yield
    with capsys.disabled():
        out = capsys.readouterr().out
        for line in out.splitlines():
            if line.startswith("CRITERION"):
                print("\n" + line, end="")


@pytest.fixture(scope="module")
def recognition():
    cfg = RunConfig.defaults("recognition")
    t0 = time.perf_counter()
    trained = [run_recognition(cfg.with_seed_offset(i)) for i in range(N_SEEDS)]
    per_seed = (time.perf_counter() - t0) / N_SEEDS
    untrained = [run_recognition(cfg.with_seed_offset(i), learning=False) for i in range(N_SEEDS)]
    return cfg, trained, untrained, per_seed


@pytest.fixture(scope="module")
def discrimination():
    cfg = RunConfig.defaults("discrimination")
    return [run_discrimination(cfg.with_seed_offset(i)) for i in range(N_SEEDS)]


def test_criterion_1_learning_effect(recognition):
    cfg, trained, _, per_seed = recognition
    L = np.array([r.L for r in trained])
    test = np.median([r.phase_means["test"] for r in trained])
    base = np.median([r.phase_means["baseline"] for r in trained])
    n_pos = int((L > 0).sum())
    ratio_ok = test >= BASELINE_RATIO * base and test > 0
    ok = n_pos >= MIN_SEEDS and ratio_ok and per_seed <= RUNTIME_PER_SEED
    report(1, ok, f"L>0 in {n_pos}/{N_SEEDS} seeds, median test {test:.4g} vs baseline {base:.4g}, "
                  f"{per_seed:.2f} s per seed")
    assert ok


def test_criterion_2_selectivity(recognition):
    _, trained, untrained, _ = recognition
    D = np.array([r.D for r in trained])
    DU = np.abs([u.D for u in untrained])
    med = float(np.median(D))
    n_pos = int((D > 0).sum())
    n_flat = int((DU < UNTRAINED_D_FRACTION * med).sum()) if med > 0 else 0
    ok = n_pos >= MIN_SEEDS and n_flat >= MIN_SEEDS
    report(2, ok, f"D>0 in {n_pos}/{N_SEEDS} seeds, median D {med:.4g}; untrained |D| below "
                  f"{UNTRAINED_D_FRACTION}*median in {n_flat}/{N_SEEDS} seeds (max {DU.max():.4g})")
    assert ok


def test_criterion_3_discrimination(discrimination):
    good = [r.all_correct and r.loser_fraction < LOSER_FRACTION for r in discrimination]
    n_correct = sum(r.all_correct for r in discrimination)
    ok = sum(good) >= MIN_SEEDS
    report(3, ok, f"both patterns correct in {n_correct}/{N_SEEDS} seeds, also with loser below "
                  f"{LOSER_FRACTION:.0%} of winner in {sum(good)}/{N_SEEDS}")
    assert ok


def test_criterion_4_weight_shift(recognition):
    _, trained, untrained, _ = recognition
    ks = np.array([r.ks for r in trained])
    ks_off = np.array([u.ks for u in untrained])
    n = int((ks > KS_MIN).sum())
    ok = n >= MIN_SEEDS and np.all(ks_off == 0.0)
    report(4, ok, f"KS>{KS_MIN} in {n}/{N_SEEDS} runs (median {np.median(ks):.3f}); "
                  f"learning off max KS {ks_off.max():.3g}")
    assert ok


def test_criterion_5_apical_cancellation(recognition):
    _, trained, untrained, _ = recognition
    on = np.array([r.apical_cancellation for r in trained])
    off = np.array([u.apical_cancellation for u in untrained])
    n = int((on < CANCEL_MAX).sum())
    lo, hi = CANCEL_CONTROL
    n_off = int(((off >= lo) & (off <= hi)).sum())
    ok = n >= MIN_SEEDS and n_off == N_SEEDS
    report(5, ok, f"metric<{CANCEL_MAX} in {n}/{N_SEEDS} training runs (median {np.median(on):.3f}); "
                  f"learning off within [{lo}, {hi}] in {n_off}/{N_SEEDS}")
    assert ok


def _unit_checks() -> dict[str, bool]:
    checks = {}
    p = NeuronParams(tau=5e-3, leak=0.9, i_thr=10.0, i_reset=0.0, sigma=0.0, t_refr=0.0)
    dt = p.tau / p.leak / 1000
    s = NeuronState(i_soma=1.0)
    for k in range(1000):
        s, _ = step_neuron(s, p, dt, 0.0, now=k * dt)
    checks["a leak decay"] = abs(s.i_soma - math.exp(-1)) / math.exp(-1) < LEAK_REL

    checks["b conductance at reversal"] = all(
        conductance_current(i, e, ConductanceParams(0.7, e, conv)) == 0.0
        for i in (0.3, 2.0) for e in (-1.0, 0.0, 1.3) for conv in Convention
    )

    def delta(d, eta, theta):
        return weight_delta(ErrorPair(d, 0.0, Role.BASAL_BOTTOM_UP), PlasticityParams(eta, theta))

    dead = all(delta(d, eta, 0.1) == 0.0 for d in (-0.1, -0.05, 0.0, 0.05, 0.1) for eta in (0.1, 0.5, 2.0))
    spots = delta(0.3, 0.5, 0.1) == pytest.approx(0.05) and delta(-0.3, 0.5, 0.1) == pytest.approx(-0.05)
    checks["c dead zone and branches"] = dead and spots

    x = mismatch_sample(np.full(10_000, 2.5), 0.2, 0.05, np.random.default_rng(0))
    checks["d mismatch moments"] = (
        abs(x.mean() - 2.5) / 2.5 < MISMATCH_MEAN_REL and abs(x.std() - 0.5) / 0.5 < MISMATCH_STD_REL
    )

    tile = generate_pattern(PatternSpec(), dt=1e-4)
    checks["e pattern tile"] = (
        len(tile) == 128 and tile.n_channels == 32 and tile.times.max() < 0.2
        and tile.channels.min() >= 0 and tile.channels.max() < 32
    )
    return checks


def test_criterion_6_unit_numerics():
    checks = _unit_checks()
    ok = all(checks.values())
    report(6, ok, ", ".join(f"({k}) {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "default.cfg"
    cfg.write_text(serialize_config(RunConfig.defaults("recognition")))
    for d in ("a", "b"):
        assert cli_main(["recognition", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    ok = all(same) and len(names) > 0
    report(7, ok, f"{sum(same)}/{len(names)} output files byte-identical ({', '.join(names)})")
    assert ok


def test_criterion_8_dt_robustness():
    cfg = RunConfig.defaults("recognition")
    fine = replace(cfg, engine=replace(cfg.engine, dt=cfg.engine.dt / 2,
                                       calcium_sample_every=2 * cfg.engine.calcium_sample_every))
    a = run_recognition(cfg).phase_means["test"]
    b = run_recognition(fine).phase_means["test"]
    rel = abs(b - a) / a if a > 0 else math.inf
    ok = rel < DT_REL
    report(8, ok, f"seed {cfg.engine.seed}: test-phase calcium {a:.4g} at dt={cfg.engine.dt:g}, "
                  f"{b:.4g} at dt/2, change {rel:.1%}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
