"""Pattern recognition and pattern discrimination protocols.

Recognition (one readout): baseline -> training with teacher -> test ->
silence -> deviant pattern. ``L`` is the readout's teacher-off response gain
from learning, ``D`` the margin between trained and deviant pattern.

Discrimination (two readouts): each pattern is trained with the teacher on its
own readout only, for equal time, then both are tested teacher-off and the
readout with the larger mean calcium wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .config import RunConfig
from .engine import Phase, Recording, n_steps_for, run_phases
from .fabric import ConnectionClass, Network, apply_mismatch, build_network
from .stimulus import PatternSpec, SpikeTrain, generate_pattern, generate_teacher, tile

RECOGNITION_PHASES = ("baseline", "training", "test", "silence", "deviant")


def quantize(values) -> np.ndarray:
    """Round to the 9 significant digits used in the CSV outputs."""
    arr = np.asarray(values, dtype=float)
    return np.array([float(f"{v:.9g}") for v in arr.reshape(-1)]).reshape(arr.shape)


def build_from_config(cfg: RunConfig) -> Network:
    net = build_network(cfg.architecture, cfg.synapses, cfg.neurons)
    return apply_mismatch(net, cfg.mismatch)


def pattern_spec(cfg: RunConfig, seed: int | None = None) -> PatternSpec:
    s = cfg.stimulus
    return PatternSpec(s.channels, s.duration, s.n_spikes, s.seed if seed is None else seed, s.periodic)


def pattern_train(cfg: RunConfig, seed: int, duration: float) -> SpikeTrain:
    tile0 = generate_pattern(pattern_spec(cfg, seed), dt=cfg.engine.dt)
    if cfg.stimulus.periodic:
        return tile(tile0, cfg.stimulus.duration, duration)
    return tile(tile0, max(duration, cfg.stimulus.duration), duration)


def teacher_train(cfg: RunConfig, readout: int, duration: float, key: int = 0) -> SpikeTrain:
    s = cfg.stimulus
    poisson = None
    if s.teacher_mode == "poisson":
        poisson = cfg.engine.seed * 1000 + key
    return generate_teacher(
        s.teacher_rate, duration, channel=readout, n_channels=cfg.architecture.n_readout,
        dt=cfg.engine.dt, poisson_seed=poisson,
    )


def window_mean(rec: Recording, cfg: RunConfig, population: str = "readout", neuron: int = 0) -> float:
    """Mean quantized calcium of one neuron, skipping the initial transient."""
    values = quantize(rec.calcium[population][:, neuron])
    return _tail_mean(values, cfg)


def _tail_mean(values: np.ndarray, cfg: RunConfig) -> float:
    period = cfg.engine.calcium_sample_every * cfg.engine.dt
    discard = cfg.experiment.discard_tau * cfg.neurons["readout"].tau_ca
    first = int(np.floor(discard / period + 0.5))
    tail = values[first:]
    if tail.size == 0:
        raise ValueError("calcium window is empty after discarding the transient")
    return float(np.mean(tail))


def _long_enough(rec: Recording, cfg: RunConfig) -> bool:
    discard = cfg.experiment.discard_tau * cfg.neurons["readout"].tau_ca
    return rec.duration > discard + cfg.engine.calcium_sample_every * cfg.engine.dt


def histogram_pair(pre: np.ndarray, post: np.ndarray, bins: int = 20):
    lo = float(min(pre.min(initial=0.0), post.min(initial=0.0)))
    hi = float(max(pre.max(initial=1.0), post.max(initial=1.0)))
    edges = np.linspace(lo, hi, bins + 1)
    return np.histogram(pre, edges)[0], np.histogram(post, edges)[0], edges


@dataclass
class RecognitionReport:
    L: float
    D: float
    phase_means: dict[str, float]
    weights_pre: list
    weights_post: list
    weight_hist_pre: np.ndarray
    weight_hist_post: np.ndarray
    hist_edges: np.ndarray
    ks: float
    apical_cancellation: float | None
    recordings: list[Recording] = field(repr=False, default_factory=list)
    seed: int = 0


@dataclass
class DiscriminationReport:
    winners: list[int]
    margins: list[float]
    correct: list[bool]
    means: np.ndarray  # (pattern, readout) mean calcium in the test phases
    recordings: list[Recording] = field(repr=False, default_factory=list)
    seed: int = 0

    @property
    def all_correct(self) -> bool:
        return all(self.correct)

    @property
    def loser_fraction(self) -> float:
        """Largest loser/winner calcium ratio over the tested patterns."""
        worst = 0.0
        for p, row in enumerate(self.means):
            win = row.max()
            lose = np.delete(row, int(np.argmax(row))).max() if row.size > 1 else 0.0
            worst = max(worst, lose / win if win > 0 else 1.0)
        return worst


def recognition_phases(cfg: RunConfig, *, deviant_seed: int | None = None) -> list[Phase]:
    x = cfg.experiment
    s = cfg.stimulus
    dev_seed = s.deviant_seed if deviant_seed is None else deviant_seed
    teacher = teacher_train(cfg, 0, x.training)
    return [
        Phase({"input": pattern_train(cfg, s.seed, x.baseline)}, False, x.baseline, "baseline"),
        Phase({"input": pattern_train(cfg, s.seed, x.training), "teacher": teacher}, True, x.training, "training"),
        Phase({"input": pattern_train(cfg, s.seed, x.test)}, False, x.test, "test"),
        Phase({}, False, x.silence, "silence"),
        Phase({"input": pattern_train(cfg, dev_seed, x.test)}, False, x.test, "deviant"),
    ]


def run_recognition(
    cfg: RunConfig, *, learning: bool = True, deviant_seed: int | None = None
) -> RecognitionReport:
    """Run the five-phase recognition protocol on readout 0.

    ``learning=False`` presents the same stimuli with plasticity off (the
    untrained control). ``deviant_seed`` overrides the deviant pattern's seed;
    passing the training seed presents the trained pattern twice.
    """
    net = build_from_config(cfg)
    phases = recognition_phases(cfg, deviant_seed=deviant_seed)
    phases[1] = replace(phases[1], learning=learning)
    engine = replace(cfg.engine, record=replace(cfg.engine.record, compartments=True, weights=True))
    recs = run_phases(net, phases, engine)
    means = {}
    for ph, rec in zip(phases, recs):
        if ph.name in ("training", "silence") and not _long_enough(rec, cfg):
            means[ph.name] = float("nan")  # not used by the metrics
        else:
            means[ph.name] = window_mean(rec, cfg) if rec.n_steps else 0.0
    L = means["test"] - means["baseline"]
    D = means["test"] - means["deviant"]

    cls = ConnectionClass.InputToPyrBasal.name
    pre = [r for r in recs[1].weights_before if r[2] == cls]
    post = [r for r in recs[1].weights_after if r[2] == cls]
    w_pre = np.array([r[3] for r in pre])
    w_post = np.array([r[3] for r in post])
    h_pre, h_post, edges = histogram_pair(w_pre, w_post)
    return RecognitionReport(
        L=L,
        D=D,
        phase_means=means,
        weights_pre=pre,
        weights_post=post,
        weight_hist_pre=h_pre,
        weight_hist_post=h_post,
        hist_edges=edges,
        ks=weight_shift_statistic(w_pre, w_post),
        apical_cancellation=apical_cancellation_metric(recs[1]) if recs[1].n_steps else None,
        recordings=recs,
        seed=cfg.engine.seed,
    )


def discrimination_phases(
    cfg: RunConfig, *, swap: bool = False, learning: bool = True
) -> tuple[list[Phase], dict[int, str]]:
    """Training blocks followed by teacher-off tests.

    Pattern ``p`` is paired with readout ``p`` (``1 - p`` when ``swap``). Returns
    the phases and a map pattern index -> name of its test phase.
    """
    x = cfg.experiment
    s = cfg.stimulus
    seeds = (s.seed, s.deviant_seed)
    block = x.training / x.train_blocks
    phases = []
    for b in range(x.train_blocks):
        for p, seed in enumerate(seeds):
            target = 1 - p if swap else p
            phases.append(
                Phase(
                    {
                        "input": pattern_train(cfg, seed, block),
                        "teacher": teacher_train(cfg, target, block, key=2 * b + p),
                    },
                    learning,
                    block,
                    f"train_p{p}_b{b}",
                )
            )
    tests = {}
    for p, seed in enumerate(seeds):
        phases.append(Phase({}, False, x.silence, f"silence_p{p}"))
        phases.append(Phase({"input": pattern_train(cfg, seed, x.test)}, False, x.test, f"test_p{p}"))
        tests[p] = f"test_p{p}"
    return phases, tests


def run_discrimination(
    cfg: RunConfig, *, learning: bool = True, swap: bool = False
) -> DiscriminationReport:
    net = build_from_config(cfg)
    phases, tests = discrimination_phases(cfg, swap=swap, learning=learning)
    engine = replace(cfg.engine, record=replace(cfg.engine.record, compartments=False))
    recs = run_phases(net, phases, engine)
    by_name = {ph.name: rec for ph, rec in zip(phases, recs)}
    n_r = cfg.architecture.n_readout
    means = np.zeros((len(tests), n_r))
    for p, name in tests.items():
        for r in range(n_r):
            means[p, r] = window_mean(by_name[name], cfg, "readout", r)
    winners, margins, correct = [], [], []
    for p in range(len(tests)):
        row = means[p]
        win = int(np.argmax(row))
        lose = float(np.delete(row, win).max()) if n_r > 1 else 0.0
        if row[win] == 0.0:
            margin = 1.0
        elif lose == 0.0:
            margin = float("inf")
        else:
            margin = float(row[win] / lose)
        target = 1 - p if swap else p
        winners.append(win)
        margins.append(margin)
        correct.append(win == target and row[win] > lose)
    return DiscriminationReport(winners, margins, correct, means, recs, seed=cfg.engine.seed)


def apical_cancellation_metric(recording: Recording) -> float:
    """Mean |net apical current| over the last 10% of a recording divided by
    the mean over the first 10%."""
    if recording.apical is None:
        raise ValueError("apical currents were not recorded (enable compartment recording)")
    a = np.abs(recording.apical)
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty apical recording")
    k = max(1, n // 10)
    first = a[:k].mean()
    last = a[-k:].mean()
    if first == 0.0:
        return 0.0 if last == 0.0 else float("inf")
    return float(last / first)


def weight_shift_statistic(hist_pre, hist_post) -> float:
    """Two-sample Kolmogorov-Smirnov statistic between two weight samples.

    Accepts arrays of weights or snapshot rows ``(pre, post, class, w)``.
    """
    a = _weights_of(hist_pre)
    b = _weights_of(hist_post)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty weight snapshot")
    return float(stats.ks_2samp(a, b).statistic)


def _weights_of(snapshot) -> np.ndarray:
    if isinstance(snapshot, np.ndarray):
        return snapshot.astype(float)
    rows = list(snapshot)
    if rows and isinstance(rows[0], tuple):
        return np.array([r[3] for r in rows], dtype=float)
    return np.asarray(rows, dtype=float)


def sweep(fn, cfg: RunConfig, n_seeds: int, **kwargs) -> list:
    """Run ``fn`` on ``n_seeds`` seed variants ``base + i``."""
    return [fn(cfg.with_seed_offset(i), **kwargs) for i in range(n_seeds)]


def protocol_steps(phases: list[Phase], dt: float) -> list[int]:
    return [n_steps_for(ph.duration, dt) for ph in phases]
