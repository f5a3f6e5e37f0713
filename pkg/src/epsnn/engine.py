"""Clock-driven simulation loop.

One step of the loop, for every synapse and neuron:

1. deliver stimulus spikes of this step and neuron spikes of the previous step
   (one-step axonal delay) into the synaptic traces, then decay the traces;
2. sum traces into compartment currents, conductance synapses reading the
   previous-step somatic current;
3. advance every neuron with a fresh noise draw;
4. if learning is on, update plastic synapses whose trigger fired. Operands
   are taken from the previous step, with the basal prediction referred to
   the soma (coupled basal current over leak);
5. record.

All reads in steps 2-4 target the previous buffer, so neuron order cannot
change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .dynamics import SimulationError, conductance_kernel, coupling_factor, soma_kernel
from .fabric import NEURON_POPULATIONS, ConnectionClass, Kind, Network, weight_snapshot
from .plasticity import Role, Trigger, clamp_kernel, delta_kernel
from .stimulus import SpikeTrain

CHUNK_STEPS = 20000
SOMA_OPERANDS = ("free", "spiking")
_APICAL = 1
_BASAL = 0


@dataclass(frozen=True)
class RecordFlags:
    spikes: bool = True
    calcium: bool = True
    weights: bool = True
    compartments: bool = False


@dataclass(frozen=True)
class EngineConfig:
    dt: float = 1e-4
    duration: float = 1.0
    seed: int = 0
    record: RecordFlags = field(default_factory=RecordFlags)
    calcium_sample_every: int = 10
    # coarse grid of the noise path; dt = noise_grid / 2**k refines the same path
    noise_grid: float = 1e-4
    # somatic operand of the plasticity rule: "free" integrates the soma
    # without threshold and reset, "spiking" reads the spiking soma itself
    soma_operand: str = "free"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("engine.dt must be > 0")
        if not self.duration >= self.dt:
            raise ValueError("engine.duration must be >= engine.dt")
        if self.calcium_sample_every < 1:
            raise ValueError("engine.calcium_sample_every must be >= 1")
        if self.soma_operand not in SOMA_OPERANDS:
            raise ValueError(f"engine.soma_operand must be one of {SOMA_OPERANDS}")
        if not self.noise_grid > 0:
            raise ValueError("engine.noise_grid must be > 0")


def n_steps_for(duration: float, dt: float) -> int:
    if duration <= 0:
        return 0
    return int(math.ceil(duration / dt - 1e-9))


@dataclass
class Recording:
    dt: float
    duration: float
    n_steps: int
    spikes: dict[str, SpikeTrain]
    sample_times: np.ndarray
    calcium: dict[str, np.ndarray]  # population -> (n_samples, n_neurons)
    # population -> (n_samples, n_neurons, 4): basal, apical, soma-input, i_soma
    currents: dict[str, np.ndarray] = field(default_factory=dict)
    weights_before: list | None = None
    weights_after: list | None = None
    name: str = ""
    start: float = 0.0  # absolute time of step 0 within a protocol

    @property
    def apical(self) -> np.ndarray | None:
        """Net apical current of the pyramidal neurons, (n_samples, n_pyramidal)."""
        if "pyramidal" not in self.currents:
            return None
        return self.currents["pyramidal"][:, :, 1]


@dataclass(frozen=True)
class Phase:
    stimuli: Mapping[str, SpikeTrain]
    learning: bool
    duration: float
    name: str = ""


@njit(cache=True)
def _kernel(
    n_steps, step0, dt,
    ev_step, ev_node,
    n_src,
    tau, leak, coup, i_thr, i_reset, refr_steps, sigma, ca_decay, j_ca,
    pre, post_n, comp, kind, sign, w, gain, syn_decay, alpha, e_rev, literal,
    plastic_idx, role, eta, theta, shifted, w_min, w_max, trigger, period_steps,
    i_soma, refr_count, calcium, trace, fired, i_free, learn_view,
    noise, learning, free_operand,
    spikes_out, rec_every, ca_out, comp_out, err,
):
    n_neur = i_soma.size
    n_syn = pre.size
    node_spike = np.zeros(n_src + n_neur, dtype=np.bool_)
    cur = np.zeros((n_neur, 3))
    cur_free = np.zeros((n_neur, 3))
    top_down = np.zeros(n_neur)
    inhib = np.zeros(n_neur)
    soma_prev = np.zeros(n_neur)
    ev = 0
    n_ev = ev_step.size
    for n in range(n_steps):
        node_spike[:] = False
        while ev < n_ev and ev_step[ev] == n:
            node_spike[ev_node[ev]] = True
            ev += 1
        for j in range(n_neur):
            node_spike[n_src + j] = fired[j]

        cur[:, :] = 0.0
        cur_free[:, :] = 0.0
        top_down[:] = 0.0
        inhib[:] = 0.0
        for s in range(n_syn):
            if node_spike[pre[s]]:
                trace[s] += w[s] * gain[s]
            trace[s] *= syn_decay[s]
            j = post_n[s]
            k = comp[s]
            if kind[s] == 0:
                cur[j, k] += sign[s] * trace[s]
                cur_free[j, k] += sign[s] * trace[s]
                if k == _APICAL and sign[s] < 0.0:
                    inhib[j] += trace[s]
            else:
                c = conductance_kernel(trace[s], i_soma[j], alpha[s], e_rev[s], literal[s])
                cur[j, k] += c
                cur_free[j, k] += conductance_kernel(trace[s], i_free[j], alpha[s], e_rev[s], literal[s])
                if k == _APICAL:
                    top_down[j] += c

        for j in range(n_neur):
            soma_prev[j] = i_soma[j]
            calcium[j] *= ca_decay[j]
            spiked = False
            if refr_count[j] > 0:
                refr_count[j] -= 1
                i_soma[j] = i_reset[j]
            else:
                drive = coup[j, 0] * cur[j, 0] + coup[j, 1] * cur[j, 1] + coup[j, 2] * cur[j, 2]
                v = soma_kernel(i_soma[j], drive, leak[j], tau[j], sigma[j], dt, noise[n, j])
                # a state already above threshold (set from outside) fires too
                if v > i_thr[j] or soma_prev[j] > i_thr[j]:
                    spiked = True
                    v = i_reset[j]
                    refr_count[j] = refr_steps[j]
                    calcium[j] += j_ca[j]
                i_soma[j] = v
            fired[j] = spiked
            drive = coup[j, 0] * cur_free[j, 0] + coup[j, 1] * cur_free[j, 1] + coup[j, 2] * cur_free[j, 2]
            i_free[j] = soma_kernel(i_free[j], drive, leak[j], tau[j], sigma[j], dt, noise[n, j])
            if not (np.isfinite(i_soma[j]) and np.isfinite(calcium[j]) and np.isfinite(i_free[j])):
                err[0] = j
                err[1] = n
                return
            spikes_out[n, j] = spiked

        if learning:
            g = step0 + n + 1
            for q in range(plastic_idx.size):
                s = plastic_idx[q]
                if trigger[s] == 0:
                    hit = node_spike[pre[s]]
                else:
                    hit = g % period_steps[s] == 0
                if not hit:
                    continue
                j = post_n[s]
                # operands come from the previous step, before this step's
                # presynaptic jumps, matching the double-buffered neuron update
                if role[s] == 2:
                    d = learn_view[j, 1] - learn_view[j, 2]
                else:
                    d = learn_view[j, 3] - learn_view[j, 0]
                dw = delta_kernel(d, eta[s], theta[s], shifted[s])
                if dw != 0.0:
                    w[s] = clamp_kernel(w[s] + dw, w_min[s], w_max[s])

        for j in range(n_neur):
            # basal current referred to the soma: the somatic current the basal
            # input alone would settle to, c_B * I_B / leak
            learn_view[j, 0] = coup[j, _BASAL] * cur[j, _BASAL] / leak[j]
            learn_view[j, 1] = top_down[j]
            learn_view[j, 2] = inhib[j]
            learn_view[j, 3] = i_free[j] if free_operand else i_soma[j]

        if (n + 1) % rec_every == 0:
            r = (n + 1) // rec_every - 1
            for j in range(n_neur):
                ca_out[r, j] = calcium[j]
                comp_out[r, j, 0] = cur[j, 0]
                comp_out[r, j, 1] = cur[j, 1]
                comp_out[r, j, 2] = cur[j, 2]
                comp_out[r, j, 3] = i_soma[j]


def _stimulus_events(network: Network, stimuli: Mapping[str, SpikeTrain], dt: float, n_steps: int):
    steps, nodes = [], []
    for pop, train in stimuli.items():
        if pop not in ("input", "teacher"):
            raise ValueError(f"stimuli may only target 'input' or 'teacher', got {pop!r}")
        size = network.sizes[pop]
        if train.n_channels > size or (len(train) and int(train.channels.max()) >= size):
            raise ValueError(
                f"stimulus for {pop!r} has {train.n_channels} channels, population has {size}"
            )
        st = np.round(train.times / dt).astype(np.int64)
        keep = (st >= 0) & (st < n_steps)
        steps.append(st[keep])
        nodes.append(train.channels[keep] + network.offsets[pop])
    if not steps:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    s = np.concatenate(steps)
    nd = np.concatenate(nodes)
    order = np.lexsort((nd, s))
    return s[order], nd[order]


def _check_stability(network: Network, dt: float) -> None:
    if network.n_synapses and dt >= network.tau_syn.min():
        raise ValueError(f"dt={dt} must be smaller than every tau_syn (min {network.tau_syn.min():.3g})")
    if np.any(dt * network.leak / network.tau >= 1):
        raise ValueError("dt * leak / tau must be < 1 for every neuron")


def noise_generator(seed: int, key: int = 0, stream: int = 5) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, key])))


def _bridge_levels(dt: float, grid: float) -> int | None:
    """``k`` with ``dt * 2**k == grid``, or None when dt is off that ladder."""
    ratio = grid / dt
    k = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if k >= 0 and abs(ratio - 2**k) <= 1e-9 * ratio:
        return k
    return None


class NoiseStream:
    """Standard-normal step draws of one Brownian path per neuron.

    Increments over the coarse ``grid`` come from stream ``(seed, key)``; when
    ``dt = grid / 2**k`` each is bisected ``k`` times by Brownian-bridge
    sampling from a second stream. Every step still sees an independent
    N(0, 1) draw, and halving dt refines the path instead of replacing it.
    Off the ladder, draws are plain i.i.d. normals from the first stream.
    """

    def __init__(self, seed: int, key: int, n: int, dt: float, grid: float):
        self.n = n
        self.levels = _bridge_levels(dt, grid)
        self.coarse = noise_generator(seed, key)
        self.fine = noise_generator(seed, key, stream=6)
        self.buf = np.zeros((0, n))

    def take(self, k: int) -> np.ndarray:
        if not self.levels:
            return self.coarse.standard_normal((k, self.n))
        m = 2**self.levels
        if self.buf.shape[0] < k:
            n_bins = -(-(k - self.buf.shape[0]) // m)
            inc = self.coarse.standard_normal((n_bins, self.n))  # in units of sqrt(grid)
            width = 1.0
            for _ in range(self.levels):
                dev = self.fine.standard_normal(inc.shape) * (0.5 * math.sqrt(width))
                pair = np.empty((2 * inc.shape[0], self.n))
                pair[0::2] = 0.5 * inc + dev
                pair[1::2] = 0.5 * inc - dev
                inc, width = pair, 0.5 * width
            self.buf = np.concatenate([self.buf, inc * math.sqrt(m)])
        out, self.buf = self.buf[:k], self.buf[k:]
        return out


def run(
    network: Network,
    stimuli: Mapping[str, SpikeTrain],
    cfg: EngineConfig,
    learning_enabled: bool = False,
    *,
    noise_key: int = 0,
    step0: int = 0,
    name: str = "",
    start: float = 0.0,
) -> Recording:
    """Simulate ``cfg.duration`` seconds, mutating the network state in place.

    Noise is drawn from a stream keyed by ``(cfg.seed, noise_key)`` in
    neuron-index order, independent of what is recorded (see NoiseStream).
    """
    dt = cfg.dt
    n_steps = n_steps_for(cfg.duration, dt)
    _check_stability(network, dt)
    ev_step, ev_node = _stimulus_events(network, stimuli, dt, n_steps)
    nn = network.n_neurons
    n_src = network.n_sources
    weights_before = weight_snapshot(network) if cfg.record.weights else None

    coup = np.empty((nn, 3))
    for k in range(3):
        coup[:, k] = [
            coupling_factor(a, l) if a > 0 else 0.0
            for a, l in zip(network.coupling_alpha[:, k], network.leak)
        ]
    refr_steps = np.round(network.t_refr / dt).astype(np.int64)
    ca_decay = 1.0 - dt / network.tau_ca
    syn_decay = 1.0 - dt / network.tau_syn
    post_n = network.post - n_src
    plastic_idx = np.flatnonzero(network.plastic).astype(np.int64)
    period_steps = np.maximum(np.round(network.period / dt).astype(np.int64), 1)

    every = cfg.calcium_sample_every
    rng = NoiseStream(cfg.seed, noise_key, nn, dt, cfg.noise_grid)
    spikes = np.zeros((n_steps, nn), dtype=np.bool_)
    n_rec = n_steps // every
    ca = np.zeros((n_rec, nn))
    comp = np.zeros((n_rec, nn, 4))
    err = np.full(2, -1, dtype=np.int64)

    done = 0
    while done < n_steps:
        k = min(CHUNK_STEPS, n_steps - done)
        if k % every and done + k < n_steps:
            k = max(k - k % every, min(every, n_steps - done))
        noise = rng.take(k)
        lo = np.searchsorted(ev_step, done)
        hi = np.searchsorted(ev_step, done + k)
        r0 = done // every
        r1 = (done + k) // every
        _kernel(
            k, step0 + done, dt,
            ev_step[lo:hi] - done, ev_node[lo:hi],
            n_src,
            network.tau, network.leak, coup, network.i_thr, network.i_reset, refr_steps,
            network.sigma, ca_decay, network.j_ca,
            network.pre, post_n, network.compartment, network.kind, network.sign,
            network.w, network.i_gain, syn_decay, network.alpha, network.e_rev, network.literal,
            plastic_idx, network.role, network.eta, network.theta, network.shifted,
            network.w_min, network.w_max, network.trigger, period_steps,
            network.i_soma, network.refr_count, network.calcium, network.trace, network.fired,
            network.i_free, network.learn_view,
            noise, bool(learning_enabled), cfg.soma_operand == "free",
            spikes[done:done + k], every, ca[r0:r1], comp[r0:r1], err,
        )
        if err[0] >= 0:
            raise SimulationError(int(err[0]), start + (step0 + done + err[1] + 1) * dt)
        done += k

    rec_spikes = {}
    rec_ca = {}
    for pop in NEURON_POPULATIONS:
        sl = network.neuron_slice(pop)
        if cfg.record.spikes:
            steps, idx = np.nonzero(spikes[:, sl])
            rec_spikes[pop] = SpikeTrain((steps + 1) * dt, idx, network.sizes[pop])
        if cfg.record.calcium:
            rec_ca[pop] = ca[:, sl].copy()
    currents = {}
    if cfg.record.compartments:
        currents = {pop: comp[:, network.neuron_slice(pop)].copy() for pop in NEURON_POPULATIONS}
    return Recording(
        dt=dt,
        duration=n_steps * dt,
        n_steps=n_steps,
        spikes=rec_spikes,
        sample_times=(np.arange(1, n_rec + 1) * every * dt) if cfg.record.calcium else np.zeros(0),
        calcium=rec_ca,
        currents=currents,
        weights_before=weights_before,
        weights_after=weight_snapshot(network) if cfg.record.weights else None,
        name=name,
        start=start,
    )


def run_phases(network: Network, phases: Sequence[Phase], cfg: EngineConfig) -> list[Recording]:
    """Run phases back to back, carrying all network state across them.

    ``cfg.duration`` is ignored; each phase supplies its own. Phase ``i`` draws
    its noise from stream ``(cfg.seed, i)``.
    """
    out = []
    step0 = 0
    t = 0.0
    for i, ph in enumerate(phases):
        n = n_steps_for(ph.duration, cfg.dt)
        if n == 0:
            snap = weight_snapshot(network) if cfg.record.weights else None
            out.append(
                Recording(
                    dt=cfg.dt, duration=0.0, n_steps=0,
                    spikes={p: SpikeTrain.empty(network.sizes[p]) for p in NEURON_POPULATIONS}
                    if cfg.record.spikes else {},
                    sample_times=np.zeros(0),
                    calcium={p: np.zeros((0, network.sizes[p])) for p in NEURON_POPULATIONS}
                    if cfg.record.calcium else {},
                    currents={p: np.zeros((0, network.sizes[p], 4)) for p in NEURON_POPULATIONS}
                    if cfg.record.compartments else {},
                    weights_before=snap, weights_after=snap, name=ph.name, start=t,
                )
            )
            continue
        phase_cfg = replace(cfg, duration=n * cfg.dt)
        out.append(
            run(network, ph.stimuli, phase_cfg, ph.learning,
                noise_key=i, step0=step0, name=ph.name, start=t)
        )
        step0 += n
        t = step0 * cfg.dt
    return out
