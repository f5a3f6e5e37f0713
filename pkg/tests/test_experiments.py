import numpy as np
import pytest

from epsnn.config import parse_config
from epsnn.engine import Recording
from epsnn.experiments import (
    apical_cancellation_metric,
    discrimination_phases,
    recognition_phases,
    run_discrimination,
    run_recognition,
    weight_shift_statistic,
)


def _rec_with_apical(values):
    values = np.asarray(values, dtype=float)
    cur = np.zeros((values.size, 1, 4))
    cur[:, 0, 1] = values
    return Recording(1e-4, 1.0, 10000, {}, np.arange(values.size), {}, currents={"pyramidal": cur})


def test_cancellation_metric_definition():
    assert apical_cancellation_metric(_rec_with_apical([1.0] * 10 + [0.0] * 10)) == 0.0
    assert apical_cancellation_metric(_rec_with_apical([1.0] * 20)) == pytest.approx(1.0)
    assert apical_cancellation_metric(_rec_with_apical([-2.0] * 10 + [1.0] * 10)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        apical_cancellation_metric(Recording(1e-4, 0.0, 0, {}, np.zeros(0), {}))


def test_ks_statistic_bounds():
    a = np.linspace(0, 1, 50)
    assert weight_shift_statistic(a, a) == 0.0
    assert weight_shift_statistic(a, a + 2.0) == 1.0
    rows = [(0, 0, "InputToPyrBasal", float(w)) for w in a]
    assert weight_shift_statistic(rows, rows) == 0.0


def test_recognition_protocol_order():
    cfg = parse_config("")
    names = [p.name for p in recognition_phases(cfg)]
    assert names == ["baseline", "training", "test", "silence", "deviant"]
    learning = [p.learning for p in recognition_phases(cfg)]
    assert learning == [False, True, False, False, False]


def test_discrimination_equal_teacher_time():
    cfg = parse_config("task = discrimination")
    phases, tests = discrimination_phases(cfg)
    per_pattern = {0: 0.0, 1: 0.0}
    for ph in phases:
        if ph.name.startswith("train_p"):
            per_pattern[int(ph.name[7])] += ph.duration
            assert "teacher" in ph.stimuli
    assert per_pattern[0] == pytest.approx(per_pattern[1])
    assert sorted(tests.values()) == ["test_p0", "test_p1"]


def test_learning_gate_keeps_weights():
    r = run_recognition(parse_config(""), learning=False)
    assert r.ks == 0.0
    assert r.weights_pre == r.weights_post


def test_learning_disabled_gives_small_L():
    cfg = parse_config("")
    trained = run_recognition(cfg).L
    untrained = run_recognition(cfg, learning=False).L
    assert trained > 0
    assert abs(untrained) < 0.1 * trained


def test_same_pattern_twice_gives_zero_D():
    # single-seed D is dominated by readout burst noise; average over seeds
    cfg = parse_config("")
    runs = [run_recognition(c, deviant_seed=c.stimulus.seed)
            for c in (cfg.with_seed_offset(i) for i in range(6))]
    mean_D = np.mean([r.D for r in runs])
    mean_L = np.mean([r.L for r in runs])
    assert mean_L > 0
    assert abs(mean_D) < 0.1 * mean_L


def test_untrained_discrimination_has_no_preference():
    # without learning the readouts barely respond, so no seed separates the patterns
    cfg = parse_config("task = discrimination")
    for i in range(5):
        r = run_discrimination(cfg.with_seed_offset(i), learning=False)
        assert not r.all_correct
        assert r.means.max() < 0.01


def test_recognition_report_fields():
    r = run_recognition(parse_config(""))
    assert set(r.phase_means) == {"baseline", "training", "test", "silence", "deviant"}
    assert r.L == pytest.approx(r.phase_means["test"] - r.phase_means["baseline"])
    assert r.D == pytest.approx(r.phase_means["test"] - r.phase_means["deviant"])
    assert r.weight_hist_pre.sum() == r.weight_hist_post.sum() == len(r.weights_pre)
