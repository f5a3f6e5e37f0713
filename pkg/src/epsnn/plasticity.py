"""Hysteretic local weight update with a stop-learning dead zone.

With ``d = i_plus - i_minus`` the update is::

    eta * d - theta   if d >  theta
    eta * d + theta   if d < -theta
    0                 otherwise

``i_plus``/``i_minus`` depend on the synapse role: for the basal roles they are
the postsynaptic somatic current and basal compartment current; for the
apical cancellation role they are the top-down (conductance) part and the
inhibitory part of the apical compartment, so learning drives the net apical
current toward zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from numba import njit


class Role(IntEnum):
    BASAL_BOTTOM_UP = 0
    LATERAL_TO_INTER = 1
    APICAL_CANCELLATION = 2


class Trigger(IntEnum):
    PRESYNAPTIC = 0
    PERIODIC = 1


@njit(cache=True)
def delta_kernel(d, eta, theta, shifted):
    if d > theta:
        if shifted:
            return eta * (d - theta)
        return eta * d - theta
    if d < -theta:
        if shifted:
            return eta * (d + theta)
        return eta * d + theta
    return 0.0


@njit(cache=True)
def clamp_kernel(w, lo, hi):
    if w < lo:
        return lo
    if w > hi:
        return hi
    return w


@dataclass(frozen=True)
class PlasticityParams:
    eta: float = 0.01
    theta: float = 0.0
    w_min: float = 0.0
    w_max: float = float("inf")
    trigger: Trigger = Trigger.PRESYNAPTIC
    period: float = 1e-3  # seconds, periodic trigger only
    shifted: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.theta >= 0:
            raise ValueError("theta must be >= 0")
        if not self.w_min < self.w_max:
            raise ValueError("w_min must be < w_max")
        if self.trigger == Trigger.PERIODIC and not self.period > 0:
            raise ValueError("period must be > 0 for the periodic trigger")


@dataclass(frozen=True)
class ErrorPair:
    i_plus: float
    i_minus: float
    role: Role

    @property
    def d(self) -> float:
        return self.i_plus - self.i_minus


def weight_delta(pair: ErrorPair, p: PlasticityParams) -> float:
    return delta_kernel(pair.d, p.eta, p.theta, p.shifted)


@dataclass(frozen=True)
class PostView:
    """The postsynaptic quantities the rule reads.

    ``apical_top_down`` is the conductance-driven part of the apical current and
    ``apical_inhibition`` the magnitude of its inhibitory part.
    """

    i_soma: float
    i_basal: float = 0.0
    apical_top_down: float = 0.0
    apical_inhibition: float = 0.0


def error_pair_for(role: Role | None, post: PostView) -> ErrorPair:
    """Select the operands of the rule for a synapse of the given role.

    ``role`` is ``None`` for fixed synapses, which is a contract violation.
    """
    if role is None:
        raise ValueError("error_pair_for called on a fixed synapse")
    if role == Role.APICAL_CANCELLATION:
        return ErrorPair(post.apical_top_down, post.apical_inhibition, role)
    return ErrorPair(post.i_soma, post.i_basal, role)


def apply_update(w: float, delta: float, p: PlasticityParams, triggered: bool = True) -> float:
    if not triggered:
        return w
    return clamp_kernel(w + delta, p.w_min, p.w_max)
