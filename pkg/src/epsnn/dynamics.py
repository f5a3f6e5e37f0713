"""Single-neuron and single-synapse state updates.

Every neuron is a three-compartment integrator whose membrane variable is a
current ``i_soma`` (nA). Each compartment k carries a current ``I_k`` built from
low-passed synaptic traces; the soma integrates

    d i_soma / dt = (1 / tau) * (sum_k c_k * I_k - leak * i_soma) + noise,
    c_k = alpha_k / (alpha_k + leak),

with forward Euler, a hard threshold/reset and an absolute refractory period.
A calcium trace (tau_ca, +j_ca per spike) low-passes the spike train and is the
rate readout used by the experiments.

The scalar kernels below are compiled with numba and shared by the dataclass
API in this module and the vectorised loop in :mod:`epsnn.engine`, so the two
cannot drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np
from numba import njit


class Compartment(IntEnum):
    BASAL = 0
    APICAL = 1
    SOMA = 2


class Convention(IntEnum):
    """Sign convention of the conductance-based synapse."""

    DRIVING_FORCE = 0  # alpha * i_syn * (e_rev - i_soma)
    LITERAL = 1  # alpha * i_syn * (i_soma - e_rev)


class SimulationError(RuntimeError):
    """Non-finite neuron state; carries the offending neuron and time."""

    def __init__(self, neuron: int, time: float, what: str = "state"):
        super().__init__(f"non-finite {what} in neuron {neuron} at t={time:.6g} s")
        self.neuron = neuron
        self.time = time


# --------------------------------------------------------------------------
# compiled scalar kernels
# --------------------------------------------------------------------------


@njit(cache=True)
def euler_decay_factor(dt, tau):
    return 1.0 - dt / tau


@njit(cache=True)
def conductance_kernel(i_syn, i_soma, alpha, e_rev, literal):
    if literal:
        return alpha * i_syn * (i_soma - e_rev)
    return alpha * i_syn * (e_rev - i_soma)


@njit(cache=True)
def coupling_factor(alpha, leak):
    return alpha / (alpha + leak)


@njit(cache=True)
def soma_kernel(i_soma, drive, leak, tau, sigma, dt, noise):
    """One Euler-Maruyama step of the somatic current, clamped at zero.

    ``drive`` is the already-coupled sum ``sum_k c_k * I_k``.
    """
    v = i_soma + (dt / tau) * (drive - leak * i_soma) + sigma * math.sqrt(dt) * noise
    if v < 0.0:
        v = 0.0
    return v


# --------------------------------------------------------------------------
# dataclass API
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NeuronParams:
    tau: float = 5e-3
    leak: float = 1.0
    couplings: Mapping[Compartment, float] = field(
        default_factory=lambda: {
            Compartment.BASAL: 4.0,
            Compartment.APICAL: 4.0,
            Compartment.SOMA: 4.0,
        }
    )
    i_thr: float = 1.0
    i_reset: float = 0.0
    t_refr: float = 1e-3
    sigma: float = 0.0
    tau_ca: float = 0.2
    j_ca: float = 0.05

    def __post_init__(self):
        checks = {
            "tau": self.tau > 0,
            "leak": self.leak > 0,
            "t_refr": self.t_refr >= 0,
            "tau_ca": self.tau_ca > 0,
            "i_thr": self.i_thr > self.i_reset >= 0,
            "sigma": self.sigma >= 0,
            "couplings": all(a > 0 for a in self.couplings.values()),
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid NeuronParams fields: {', '.join(bad)}")

    def coupling(self, comp: Compartment) -> float:
        alpha = self.couplings.get(comp)
        return 0.0 if alpha is None else coupling_factor(alpha, self.leak)


@dataclass(frozen=True)
class NeuronState:
    i_soma: float = 0.0
    i_comp: Mapping[Compartment, float] = field(
        default_factory=lambda: {Compartment.BASAL: 0.0, Compartment.APICAL: 0.0}
    )
    refr_until: float = 0.0
    calcium: float = 0.0
    spiked_this_step: bool = False


@dataclass(frozen=True)
class ConductanceParams:
    alpha: float = 1.0
    e_rev: float = 1.0
    polarity: Convention = Convention.DRIVING_FORCE

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("ConductanceParams.alpha must be > 0")


def decay_synaptic_current(i_syn: float, dt: float, tau_syn: float) -> float:
    """Forward-Euler decay of a synaptic trace over one step."""
    if not (dt > 0 and tau_syn > 0):
        raise ValueError("dt and tau_syn must be positive")
    if dt >= tau_syn:
        raise ValueError(f"dt={dt} >= tau_syn={tau_syn}: integration unstable")
    return i_syn * euler_decay_factor(dt, tau_syn)


def conductance_current(i_syn: float, i_soma: float, params: ConductanceParams) -> float:
    if i_syn < 0:
        raise ValueError("i_syn must be nonnegative")
    return conductance_kernel(
        i_syn, i_soma, params.alpha, params.e_rev, params.polarity == Convention.LITERAL
    )


@dataclass(frozen=True)
class SynapseInput:
    """One synapse as seen by :func:`compartment_current`.

    ``trace`` is the low-passed synaptic current. Current-kind synapses add
    ``sign * trace``; conductance-kind ones (``conductance`` set) go through
    :func:`conductance_current`.
    """

    compartment: Compartment
    trace: float
    sign: float = 1.0
    conductance: ConductanceParams | None = None


def compartment_current(
    i_soma: float, synapses: Sequence[SynapseInput], compartment: Compartment
) -> float:
    total = 0.0
    for syn in synapses:
        if syn.compartment != compartment:
            continue
        if syn.conductance is None:
            total += syn.sign * syn.trace
        else:
            total += conductance_current(syn.trace, i_soma, syn.conductance)
    return total


def step_neuron(
    state: NeuronState,
    params: NeuronParams,
    dt: float,
    noise_sample: float,
    now: float = 0.0,
    neuron_id: int = 0,
) -> tuple[NeuronState, bool]:
    """Advance one neuron from ``now`` to ``now + dt``.

    Compartment currents are read from ``state.i_comp``. Returns the new state
    and whether a spike was emitted during the step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * params.leak / params.tau >= 1:
        raise ValueError("dt * leak / tau must be < 1")

    calcium = state.calcium * euler_decay_factor(dt, params.tau_ca)
    # refr_until is an end-of-step time; compare with half a step of slack
    if now < state.refr_until - 0.5 * dt:
        i_soma = params.i_reset
        spiked = False
    else:
        drive = 0.0
        for comp, current in state.i_comp.items():
            if comp in params.couplings:
                drive += coupling_factor(params.couplings[comp], params.leak) * current
        i_soma = soma_kernel(
            state.i_soma, drive, params.leak, params.tau, params.sigma, dt, noise_sample
        )
        # a state already above threshold fires whatever the input
        spiked = i_soma > params.i_thr or state.i_soma > params.i_thr
    refr_until = state.refr_until
    if spiked:
        i_soma = params.i_reset
        refr_until = now + dt + params.t_refr
        calcium += params.j_ca
    if not (math.isfinite(i_soma) and math.isfinite(calcium)):
        raise SimulationError(neuron_id, now + dt)
    new = replace(
        state, i_soma=i_soma, refr_until=refr_until, calcium=calcium, spiked_this_step=spiked
    )
    return new, spiked


def calcium_mean(
    spike_times: Sequence[float] | np.ndarray,
    tau_ca: float,
    j_ca: float,
    window: tuple[float, float],
) -> float:
    """Exact time-average over ``window`` of the exponentially filtered train.

    Uses the continuous-time kernel ``j_ca * exp(-(t - s) / tau_ca)`` for a
    spike at ``s``.
    """
    t0, t1 = window
    if not t1 > t0 >= 0:
        raise ValueError(f"empty or invalid window {window}")
    s = np.asarray(spike_times, dtype=float)
    s = s[s < t1]
    if s.size == 0:
        return 0.0
    start = np.maximum(s, t0)
    area = tau_ca * (np.exp(-(start - s) / tau_ca) - np.exp(-(t1 - s) / tau_ca))
    return float(j_ca * area.sum() / (t1 - t0))
