import numpy as np
import pytest

from epsnn.stimulus import PatternSpec, SpikeTrain, deviant_pattern, generate_pattern, generate_teacher, tile


def test_default_pattern_shape():
    tr = generate_pattern(PatternSpec())
    assert len(tr) == 128
    assert tr.n_channels == 32
    assert tr.times.min() >= 0.0 and tr.times.max() < 0.2
    assert tr.channels.min() >= 0 and tr.channels.max() < 32


def test_grid_pattern_keeps_count_and_unique_slots():
    tr = generate_pattern(PatternSpec(), dt=1e-4)
    assert len(tr) == 128
    keys = set(zip(np.round(tr.times / 1e-4).astype(int).tolist(), tr.channels.tolist()))
    assert len(keys) == 128
    assert tr.times.max() < 0.2


def test_empty_pattern():
    assert len(generate_pattern(PatternSpec(n_spikes=0))) == 0


def test_pattern_determinism():
    a = generate_pattern(PatternSpec(seed=4))
    assert a == generate_pattern(PatternSpec(seed=4))
    assert a != generate_pattern(PatternSpec(seed=5))


def test_deviant_statistics():
    spec = PatternSpec(seed=1)
    dev = deviant_pattern(spec, 2)
    assert len(dev) == 128 and dev.n_channels == 32
    assert dev.times.max() < 0.2
    assert len(dev) / (32 * 0.2) == pytest.approx(20.0)
    orig = set(generate_pattern(spec).events)
    assert orig.isdisjoint(dev.events)
    with pytest.raises(ValueError):
        deviant_pattern(spec, 1)


@pytest.mark.parametrize("duration,expected", [(1.0, 900), (0.2, 180)])
def test_teacher_counts(duration, expected):
    assert abs(len(generate_teacher(900.0, duration)) - expected) <= 1
    assert abs(len(generate_teacher(900.0, duration, dt=1e-4)) - expected) <= 1


def test_teacher_zero_rate():
    assert len(generate_teacher(0.0, 1.0)) == 0


def test_teacher_poisson_mean_rate():
    n = len(generate_teacher(900.0, 10.0, poisson_seed=3))
    assert abs(n - 9000) < 5 * np.sqrt(9000)


def test_tile_repeats_period():
    tile0 = generate_pattern(PatternSpec(seed=2))
    tr = tile(tile0, 0.2, 1.0)
    assert len(tr) == 5 * 128
    second = tr.times[(tr.times >= 0.2) & (tr.times < 0.4)]
    assert np.allclose(np.sort(second) - 0.2, np.sort(tile0.times))


def test_spike_train_csv_round_trip():
    tr = generate_pattern(PatternSpec(seed=3), dt=1e-4)
    back = SpikeTrain.from_csv(tr.to_csv(), n_channels=32)
    assert np.array_equal(back.channels, tr.channels)
    assert np.allclose(back.times, tr.times, rtol=1e-9)


def test_spike_train_csv_rejects_bad_row():
    with pytest.raises(ValueError, match="row 3"):
        SpikeTrain.from_csv("t_seconds,channel\n0.1,0\nabc,1\n")
