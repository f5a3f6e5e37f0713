from dataclasses import replace

import numpy as np
import pytest

from epsnn.dynamics import NeuronParams, SimulationError
from epsnn.engine import EngineConfig, Phase, RecordFlags, run, run_phases
from epsnn.fabric import ArchitectureSpec, ConnectionClass, MismatchConfig, SynapseParams, apply_mismatch, build_network, weight_snapshot
from epsnn.plasticity import PlasticityParams
from epsnn.stimulus import PatternSpec, SpikeTrain, generate_pattern, generate_teacher, tile

CC = ConnectionClass


def small_network(sigma=0.0, seed=0, mismatch=True):
    syn = {cc: SynapseParams(tau_syn=0.01, i_gain=0.05, e_rev=1.5, plasticity=PlasticityParams(eta=1.0, theta=0.05))
           for cc in CC}
    syn[CC.TeacherToReadoutSoma] = SynapseParams(tau_syn=0.01, i_gain=0.3, e_rev=1.5)
    neuron = NeuronParams(tau=5e-3, leak=0.9, i_thr=1.0, i_reset=0.2, sigma=sigma)
    net = build_network(ArchitectureSpec(32, 2, 1, 1, w_init_range=(0.0, 20.0), seed=seed), syn, neuron)
    return apply_mismatch(net, MismatchConfig(seed=seed)) if mismatch else net


def stimuli(duration, teacher=True):
    s = {"input": tile(generate_pattern(PatternSpec(seed=1), dt=1e-4), 0.2, duration)}
    if teacher:
        s["teacher"] = generate_teacher(900.0, duration, dt=1e-4)
    return s


def test_quiescence():
    net = small_network()
    rec = run(net, {}, EngineConfig(duration=0.2))
    assert all(len(t) == 0 for t in rec.spikes.values())
    assert all(np.all(c == 0) for c in rec.calcium.values())


def test_determinism():
    a = run(small_network(sigma=3.0), stimuli(0.5), EngineConfig(duration=0.5, seed=3), True)
    b = run(small_network(sigma=3.0), stimuli(0.5), EngineConfig(duration=0.5, seed=3), True)
    for pop in a.calcium:
        assert np.array_equal(a.calcium[pop], b.calcium[pop])
        assert a.spikes[pop] == b.spikes[pop]
    assert a.weights_after == b.weights_after


def test_single_input_spike_single_output_spike():
    syn = {cc: SynapseParams(i_gain=0.0) for cc in CC}
    syn[CC.InputToPyrBasal] = SynapseParams(tau_syn=0.005, i_gain=1.0)
    neuron = NeuronParams(tau=5e-3, leak=1.0, i_thr=1.0, i_reset=0.0, t_refr=0.05, sigma=0.0)
    for w, expected in ((60.0, 1), (0.0, 0)):
        net = build_network(ArchitectureSpec(1, 1, 1, 1, w_init_range=(w, w + 1e-12)), syn, neuron)
        spike = {"input": SpikeTrain([0.01], [0], 1)}
        rec = run(net, spike, EngineConfig(duration=0.1))
        times = rec.spikes["pyramidal"].times
        assert len(times) == expected
        if expected:
            assert 0.01 < times[0] <= 0.01 + 5 * 0.005


def _permuted(net, order):
    out = net.copy()
    for name in ("cls", "pre", "post", "compartment", "kind", "sign", "plastic", "role", "w", "i_gain",
                 "tau_syn", "alpha", "e_rev", "literal", "eta", "theta", "w_min", "w_max", "shifted",
                 "trigger", "period", "trace"):
        setattr(out, name, getattr(net, name)[order].copy())
    return out


def test_synapse_order_does_not_matter():
    net = small_network()
    order = np.random.default_rng(0).permutation(net.n_synapses)
    cfg = EngineConfig(duration=0.5)
    a = run(net.copy(), stimuli(0.5), cfg, True)
    perm = _permuted(net, order)
    b = run(perm, stimuli(0.5), cfg, True)
    for pop in a.calcium:
        np.testing.assert_allclose(a.calcium[pop], b.calcium[pop], rtol=1e-9, atol=1e-12)
    wa = np.array([r[3] for r in a.weights_after])
    wb = np.empty_like(wa)
    wb[order] = [r[3] for r in b.weights_after]
    np.testing.assert_allclose(wa, wb, rtol=1e-9)


def test_protocol_phases_weights_change_only_when_learning():
    net = small_network(sigma=3.0)
    phases = [
        Phase(stimuli(0.5, teacher=False), False, 0.5, "baseline"),
        Phase(stimuli(1.0), True, 1.0, "training"),
        Phase(stimuli(0.5, teacher=False), False, 0.5, "test"),
    ]
    recs = run_phases(net, phases, EngineConfig())
    assert len(recs) == 3
    assert recs[0].weights_before == recs[0].weights_after
    assert recs[1].weights_before != recs[1].weights_after
    assert recs[2].weights_before == recs[2].weights_after
    assert recs[1].start == pytest.approx(0.5) and recs[2].start == pytest.approx(1.5)


def test_zero_duration_phase():
    net = small_network()
    before = net.copy()
    (rec,) = run_phases(net, [Phase({}, True, 0.0, "empty")], EngineConfig())
    assert rec.n_steps == 0 and rec.sample_times.size == 0
    assert np.array_equal(net.i_soma, before.i_soma) and np.array_equal(net.w, before.w)


def test_recording_layout():
    rec = run(small_network(), stimuli(0.3), EngineConfig(duration=0.3, calcium_sample_every=10,
                                                        record=RecordFlags(compartments=True)))
    assert rec.sample_times.size == 300
    assert rec.calcium["pyramidal"].shape == (300, 2)
    assert rec.apical.shape == (300, 2)
    assert np.all(rec.calcium["readout"] >= 0)


def test_non_finite_state_raises():
    net = small_network()
    net.e_rev[:] = np.inf
    with pytest.raises(SimulationError):
        run(net, stimuli(0.1), EngineConfig(duration=0.1))


def test_unstable_dt_rejected():
    with pytest.raises(ValueError):
        run(small_network(), {}, EngineConfig(dt=0.02, duration=0.1))


def test_bad_stimulus_target():
    with pytest.raises(ValueError):
        run(small_network(), {"readout": SpikeTrain([0.0], [0], 1)}, EngineConfig(duration=0.01))


def test_kernel_matches_step_neuron_oracle():
    # replay the recorded compartment currents through the dataclass API
    from epsnn.dynamics import Compartment, NeuronState, step_neuron

    net = small_network(sigma=0.0)
    dt = 1e-4
    cfg = EngineConfig(duration=0.3, record=RecordFlags(compartments=True), calcium_sample_every=1)
    probe = net.copy()
    rec = run(probe, stimuli(0.3), cfg)
    comps = (Compartment.BASAL, Compartment.APICAL, Compartment.SOMA)
    n_checked = 0
    for pop in ("pyramidal", "inter", "readout"):
        cur = rec.currents[pop]
        sl = net.neuron_slice(pop)
        for i, j in enumerate(range(sl.start, sl.stop)):
            params = NeuronParams(
                tau=net.tau[j], leak=net.leak[j],
                couplings={c: net.coupling_alpha[j, k] for k, c in enumerate(comps) if net.coupling_alpha[j, k] > 0},
                i_thr=net.i_thr[j], i_reset=net.i_reset[j], t_refr=net.t_refr[j], sigma=0.0,
                tau_ca=net.tau_ca[j], j_ca=net.j_ca[j],
            )
            state = NeuronState()
            for n in range(rec.n_steps):
                state = replace(state, i_comp={c: cur[n, i, k] for k, c in enumerate(comps)})
                state, _ = step_neuron(state, params, dt, 0.0, now=n * dt)
                assert state.i_soma == pytest.approx(cur[n, i, 3], abs=1e-9)
                assert state.calcium == pytest.approx(rec.calcium[pop][n, i], abs=1e-9)
            n_checked += len(rec.spikes[pop].channels[rec.spikes[pop].channels == i])
    assert n_checked > 0  # the replay covered spiking neurons
