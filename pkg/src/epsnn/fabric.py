"""Network construction: populations, connection classes, mismatch.

Nodes live in one index space ordered ``input, teacher, pyramidal, inter,
readout``. The first two populations are spike sources with no dynamics; the
rest are neurons and neuron ``j`` sits at node ``n_sources + j``. Synapses are
stored as parallel arrays (one entry per edge) in lexicographic
``(class, pre, post)`` order.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping

import numpy as np

from .dynamics import Compartment, Convention, NeuronParams
from .plasticity import PlasticityParams, Role, Trigger

POPULATIONS = ("input", "teacher", "pyramidal", "inter", "readout")
NEURON_POPULATIONS = ("pyramidal", "inter", "readout")


class Kind(IntEnum):
    CURRENT = 0
    CONDUCTANCE = 1


@dataclass(frozen=True)
class ClassInfo:
    pre: str
    post: str
    compartment: Compartment
    plastic: bool
    kind: Kind
    inhibitory: bool
    role: Role | None


class ConnectionClass(IntEnum):
    InputToPyrBasal = 0
    PyrToInterBasal = 1
    PyrToReadoutBasal = 2
    ReadoutToPyrApical = 3
    InterToPyrApical = 4
    ReadoutToInterSoma = 5
    TeacherToReadoutSoma = 6

    @property
    def info(self) -> ClassInfo:
        return CLASS_INFO[self]


_C = Compartment
CLASS_INFO: dict[ConnectionClass, ClassInfo] = {
    ConnectionClass.InputToPyrBasal: ClassInfo(
        "input", "pyramidal", _C.BASAL, True, Kind.CURRENT, False, Role.BASAL_BOTTOM_UP
    ),
    ConnectionClass.PyrToInterBasal: ClassInfo(
        "pyramidal", "inter", _C.BASAL, True, Kind.CURRENT, False, Role.LATERAL_TO_INTER
    ),
    ConnectionClass.PyrToReadoutBasal: ClassInfo(
        "pyramidal", "readout", _C.BASAL, True, Kind.CURRENT, False, Role.BASAL_BOTTOM_UP
    ),
    ConnectionClass.ReadoutToPyrApical: ClassInfo(
        "readout", "pyramidal", _C.APICAL, False, Kind.CONDUCTANCE, False, None
    ),
    ConnectionClass.InterToPyrApical: ClassInfo(
        "inter", "pyramidal", _C.APICAL, True, Kind.CURRENT, True, Role.APICAL_CANCELLATION
    ),
    ConnectionClass.ReadoutToInterSoma: ClassInfo(
        "readout", "inter", _C.SOMA, False, Kind.CONDUCTANCE, False, None
    ),
    ConnectionClass.TeacherToReadoutSoma: ClassInfo(
        "teacher", "readout", _C.SOMA, False, Kind.CONDUCTANCE, False, None
    ),
}


@dataclass(frozen=True)
class SynapseParams:
    """Nominal parameters shared by every edge of one connection class.

    ``weight`` is only used by fixed classes; plastic weights are drawn from
    the architecture's initialisation range.
    """

    tau_syn: float = 5e-3
    i_gain: float = 1.0
    weight: float = 1.0
    alpha: float = 1.0
    e_rev: float = 1.5
    convention: Convention = Convention.DRIVING_FORCE
    plasticity: PlasticityParams = field(default_factory=PlasticityParams)


@dataclass(frozen=True)
class ArchitectureSpec:
    n_inputs: int = 32
    n_pyramidal: int = 2
    n_inter: int = 1
    n_readout: int = 1
    sparsity: float = 1.0
    w_init_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        counts = (self.n_inputs, self.n_pyramidal, self.n_inter, self.n_readout)
        if min(counts) < 1:
            raise ValueError("all population counts must be >= 1")
        if self.n_inter != self.n_readout:
            raise ValueError(
                f"n_inter ({self.n_inter}) must equal n_readout ({self.n_readout})"
            )
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")
        lo, hi = self.w_init_range
        if not lo < hi:
            raise ValueError("w_init_range must satisfy low < high")


@dataclass(frozen=True)
class MismatchConfig:
    cv: float = 0.20
    floor: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.cv < 1.0:
            raise ValueError("mismatch cv must lie in [0, 1)")
        if not 0.0 < self.floor < 1.0:
            raise ValueError("mismatch floor must lie in (0, 1)")


@dataclass
class Network:
    sizes: dict[str, int]
    offsets: dict[str, int]
    # per neuron (index j = node - n_sources)
    tau: np.ndarray
    leak: np.ndarray
    coupling_alpha: np.ndarray  # (n_neurons, 3)
    i_thr: np.ndarray
    i_reset: np.ndarray
    t_refr: np.ndarray
    sigma: np.ndarray
    tau_ca: np.ndarray
    j_ca: np.ndarray
    # per synapse
    cls: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    compartment: np.ndarray
    kind: np.ndarray
    sign: np.ndarray
    plastic: np.ndarray
    role: np.ndarray  # -1 for fixed synapses
    w: np.ndarray
    i_gain: np.ndarray
    tau_syn: np.ndarray
    alpha: np.ndarray
    e_rev: np.ndarray
    literal: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    w_min: np.ndarray
    w_max: np.ndarray
    shifted: np.ndarray
    trigger: np.ndarray
    period: np.ndarray
    # dynamic state
    i_soma: np.ndarray = field(default=None)
    refr_count: np.ndarray = field(default=None)
    calcium: np.ndarray = field(default=None)
    trace: np.ndarray = field(default=None)
    fired: np.ndarray = field(default=None)
    # somatic current integrated without threshold and reset
    i_free: np.ndarray = field(default=None)
    # previous-step operands read by the plasticity rule: soma-referred basal,
    # apical top-down, apical inhibitory and somatic current
    learn_view: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.i_soma is None:
            self.reset_state()

    @property
    def n_sources(self) -> int:
        return self.sizes["input"] + self.sizes["teacher"]

    @property
    def n_neurons(self) -> int:
        return sum(self.sizes[p] for p in NEURON_POPULATIONS)

    @property
    def n_synapses(self) -> int:
        return int(self.cls.size)

    def reset_state(self) -> None:
        n, s = self.n_neurons, self.cls.size
        self.i_soma = np.zeros(n)
        self.refr_count = np.zeros(n, dtype=np.int64)
        self.calcium = np.zeros(n)
        self.trace = np.zeros(s)
        self.fired = np.zeros(n, dtype=np.bool_)
        self.i_free = np.zeros(n)
        self.learn_view = np.zeros((n, 4))

    def node(self, population: str, index: int) -> int:
        return self.offsets[population] + index

    def neuron_slice(self, population: str) -> slice:
        start = self.offsets[population] - self.n_sources
        return slice(start, start + self.sizes[population])

    def locate(self, node: int) -> tuple[str, int]:
        for pop in reversed(POPULATIONS):
            if node >= self.offsets[pop] and self.sizes[pop]:
                return pop, node - self.offsets[pop]
        raise IndexError(node)

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def _neuron_params_for(nominal, population: str) -> NeuronParams:
    if isinstance(nominal, NeuronParams):
        return nominal
    return nominal.get(population) or nominal.get("default") or NeuronParams()


def build_network(
    spec: ArchitectureSpec,
    synapse_params: Mapping[ConnectionClass, SynapseParams] | None = None,
    nominal_params: NeuronParams | Mapping[str, NeuronParams] | None = None,
) -> Network:
    """Wire the populations according to the connection classes.

    ``nominal_params`` is either one :class:`NeuronParams` for every neuron or
    a mapping from population name (or ``"default"``) to parameters.
    """
    synapse_params = dict(synapse_params or {})
    nominal_params = nominal_params if nominal_params is not None else NeuronParams()
    sizes = {
        "input": spec.n_inputs,
        "teacher": spec.n_readout,
        "pyramidal": spec.n_pyramidal,
        "inter": spec.n_inter,
        "readout": spec.n_readout,
    }
    offsets, acc = {}, 0
    for pop in POPULATIONS:
        offsets[pop] = acc
        acc += sizes[pop]
    n_src = sizes["input"] + sizes["teacher"]

    neuron_rows = []
    for pop in NEURON_POPULATIONS:
        p = _neuron_params_for(nominal_params, pop)
        alphas = [p.couplings.get(c, 0.0) for c in Compartment]
        row = (p.tau, p.leak, alphas, p.i_thr, p.i_reset, p.t_refr, p.sigma, p.tau_ca, p.j_ca)
        neuron_rows.extend([row] * sizes[pop])
    cols = list(zip(*neuron_rows))

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 1])))
    edges: list[tuple[int, int, int]] = []
    forward: set[tuple[int, int]] = set()  # (pyramidal, readout) pairs
    for cc in ConnectionClass:
        info = cc.info
        n_pre, n_post = sizes[info.pre], sizes[info.post]
        sparse = cc in (ConnectionClass.InputToPyrBasal, ConnectionClass.PyrToReadoutBasal)
        one_to_one = cc in (ConnectionClass.ReadoutToInterSoma, ConnectionClass.TeacherToReadoutSoma)
        for i in range(n_pre):
            for j in range(n_post):
                if one_to_one and i != j:
                    continue
                if sparse and spec.sparsity < 1.0 and not rng.random() < spec.sparsity:
                    continue
                # feedback runs back along the sampled forward pathway
                if cc == ConnectionClass.ReadoutToPyrApical and (j, i) not in forward:
                    continue
                if cc == ConnectionClass.PyrToReadoutBasal:
                    forward.add((i, j))
                edges.append((int(cc), offsets[info.pre] + i, offsets[info.post] + j))

    e = np.array(edges, dtype=np.int64).reshape(-1, 3)
    cls = e[:, 0]
    n_syn = cls.size
    lo, hi = spec.w_init_range

    def per_class(getter, dtype=float):
        table = np.array(
            [getter(cc, synapse_params.get(cc, SynapseParams())) for cc in ConnectionClass],
            dtype=dtype,
        )
        return table[cls] if n_syn else np.zeros(0, dtype=dtype)

    plastic = per_class(lambda cc, sp: cc.info.plastic, np.bool_)
    w = per_class(lambda cc, sp: sp.weight)
    # plastic weights drawn in edge order so the topology seed fixes them too
    w[plastic] = rng.uniform(lo, hi, size=int(plastic.sum()))

    return Network(
        sizes=sizes,
        offsets=offsets,
        tau=np.array(cols[0], dtype=float),
        leak=np.array(cols[1], dtype=float),
        coupling_alpha=np.array(cols[2], dtype=float).reshape(-1, 3),
        i_thr=np.array(cols[3], dtype=float),
        i_reset=np.array(cols[4], dtype=float),
        t_refr=np.array(cols[5], dtype=float),
        sigma=np.array(cols[6], dtype=float),
        tau_ca=np.array(cols[7], dtype=float),
        j_ca=np.array(cols[8], dtype=float),
        cls=cls,
        pre=e[:, 1].copy(),
        post=e[:, 2].copy(),
        compartment=per_class(lambda cc, sp: int(cc.info.compartment), np.int64),
        kind=per_class(lambda cc, sp: int(cc.info.kind), np.int64),
        sign=per_class(lambda cc, sp: -1.0 if cc.info.inhibitory else 1.0),
        plastic=plastic,
        role=per_class(lambda cc, sp: -1 if cc.info.role is None else int(cc.info.role), np.int64),
        w=w,
        i_gain=per_class(lambda cc, sp: sp.i_gain),
        tau_syn=per_class(lambda cc, sp: sp.tau_syn),
        alpha=per_class(lambda cc, sp: sp.alpha),
        e_rev=per_class(lambda cc, sp: sp.e_rev),
        literal=per_class(lambda cc, sp: sp.convention == Convention.LITERAL, np.bool_),
        eta=per_class(lambda cc, sp: sp.plasticity.eta),
        theta=per_class(lambda cc, sp: sp.plasticity.theta),
        w_min=per_class(lambda cc, sp: sp.plasticity.w_min),
        w_max=per_class(lambda cc, sp: sp.plasticity.w_max),
        shifted=per_class(lambda cc, sp: sp.plasticity.shifted, np.bool_),
        trigger=per_class(lambda cc, sp: int(sp.plasticity.trigger), np.int64),
        period=per_class(lambda cc, sp: sp.plasticity.period),
    )


# Parameters resampled by apply_mismatch, in draw order.
NEURON_MISMATCH_FIELDS = ("tau", "leak", "coupling_alpha", "i_thr")
SYNAPSE_MISMATCH_FIELDS = ("tau_syn", "i_gain", "alpha", "e_rev", "eta", "theta")


def mismatch_sample(nominal, cv: float, floor: float, rng: np.random.Generator) -> np.ndarray:
    """``nominal * (1 + cv * N(0, 1))`` clamped below at ``floor * nominal``."""
    nominal = np.asarray(nominal, dtype=float)
    draw = nominal * (1.0 + cv * rng.standard_normal(nominal.shape))
    return np.maximum(draw, floor * nominal)


def apply_mismatch(network: Network, cfg: MismatchConfig) -> Network:
    """Return a copy with every fabricated parameter independently perturbed.

    Plastic weights are state, not fabricated parameters, and are left alone.
    Conductance parameters only exist on conductance-kind edges and learning
    parameters only on plastic edges; other entries are not drawn.
    """
    out = network.copy()
    if cfg.cv == 0.0:
        return out
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 2])))
    nominal_gap = out.i_thr - out.i_reset
    for name in NEURON_MISMATCH_FIELDS:
        setattr(out, name, mismatch_sample(getattr(out, name), cfg.cv, cfg.floor, rng))
    # a threshold at or below the reset level would fire every step
    out.i_thr = np.maximum(out.i_thr, out.i_reset + cfg.floor * nominal_gap)
    masks = {
        "alpha": out.kind == Kind.CONDUCTANCE,
        "e_rev": out.kind == Kind.CONDUCTANCE,
        "eta": out.plastic,
        "theta": out.plastic,
    }
    for name in SYNAPSE_MISMATCH_FIELDS:
        values = getattr(out, name).copy()
        mask = masks.get(name, np.ones(values.size, dtype=bool))
        values[mask] = mismatch_sample(values[mask], cfg.cv, cfg.floor, rng)
        setattr(out, name, values)
    return out


def weight_snapshot(
    network: Network, class_filter: Iterable[ConnectionClass] | ConnectionClass | None = None
) -> list[tuple[int, int, str, float]]:
    """``(pre, post, class name, w)`` per edge, in edge order.

    ``pre``/``post`` are indices within their populations.
    """
    if class_filter is None:
        wanted = set(ConnectionClass)
    elif isinstance(class_filter, ConnectionClass):
        wanted = {class_filter}
    else:
        wanted = set(class_filter)
    rows = []
    for k in range(network.n_synapses):
        cc = ConnectionClass(int(network.cls[k]))
        if cc not in wanted:
            continue
        pre = int(network.pre[k]) - network.offsets[cc.info.pre]
        post = int(network.post[k]) - network.offsets[cc.info.post]
        rows.append((pre, post, cc.name, float(network.w[k])))
    return rows
