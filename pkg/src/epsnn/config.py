"""Run configuration: flat ``section.key = value`` files.

Grammar, one entry per line::

    # comment
    architecture.n_pyramidal = 8
    neuron.tau = 0.005                 # every neuron population
    neuron.readout.sigma = 2.0         # one population only
    synapse.TeacherToReadoutSoma.e_rev = 1.5
    plasticity.InputToPyrBasal.eta = 0.002

Unknown keys, malformed values and invariant violations raise
:class:`ConfigError` naming the key and line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable

from .dynamics import Compartment, Convention, NeuronParams
from .engine import EngineConfig, RecordFlags
from .fabric import NEURON_POPULATIONS, ArchitectureSpec, ConnectionClass, MismatchConfig, SynapseParams
from .plasticity import PlasticityParams, Trigger

TASKS = ("recognition", "discrimination")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.key = key
        self.line = line


@dataclass(frozen=True)
class StimulusConfig:
    channels: int = 32
    duration: float = 0.200
    n_spikes: int = 128
    seed: int = 1
    deviant_seed: int = 10001
    periodic: bool = True
    teacher_rate: float = 900.0
    teacher_mode: str = "regular"

    def __post_init__(self):
        if self.teacher_mode not in ("regular", "poisson"):
            raise ValueError("stimulus.teacher_mode must be 'regular' or 'poisson'")
        if self.teacher_rate < 0:
            raise ValueError("stimulus.teacher_rate must be >= 0")
        if self.deviant_seed == self.seed:
            raise ValueError("stimulus.deviant_seed must differ from stimulus.seed")
        if self.n_spikes < 0 or self.channels < 1 or not self.duration > 0:
            raise ValueError("stimulus needs n_spikes >= 0, channels >= 1, duration > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol phase durations (seconds of simulated time)."""

    baseline: float = 2.0
    training: float = 10.0
    test: float = 2.0
    silence: float = 1.0
    train_blocks: int = 1
    discard_tau: float = 3.0  # calcium transient excluded from each phase, in units of tau_ca

    def __post_init__(self):
        for name in ("baseline", "training", "test", "silence", "discard_tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"experiment.{name} must be >= 0")
        if self.train_blocks < 1:
            raise ValueError("experiment.train_blocks must be >= 1")


# Nominal values. The threshold current fixes the unit scale (1 nA); the rest
# were calibrated against the recognition protocol, see README.
def default_neurons(task: str = "recognition") -> dict[str, NeuronParams]:
    base = NeuronParams(
        tau=5e-3,
        leak=0.9,
        couplings={Compartment.BASAL: 8.1, Compartment.APICAL: 8.0, Compartment.SOMA: 8.1},
        i_thr=1.0,
        i_reset=0.15,
        t_refr=1e-3,
        sigma=1.5,
        tau_ca=0.2,
        j_ca=0.05,
    )
    out = {pop: base for pop in NEURON_POPULATIONS}
    # a high readout reset keeps the taught readout rate up without raising its drive
    out["readout"] = replace(base, i_reset=0.6)
    return out


def default_synapses(task: str = "recognition") -> dict[ConnectionClass, SynapseParams]:
    cc = ConnectionClass
    P = PlasticityParams
    return {
        cc.InputToPyrBasal: SynapseParams(tau_syn=10e-3, i_gain=0.0025, plasticity=P(eta=1.7, theta=0.1)),
        cc.PyrToInterBasal: SynapseParams(tau_syn=10e-3, i_gain=0.002, plasticity=P(eta=3.0, theta=0.4)),
        cc.PyrToReadoutBasal: SynapseParams(tau_syn=10e-3, i_gain=0.03, plasticity=P(eta=4.6, theta=0.1)),
        cc.InterToPyrApical: SynapseParams(tau_syn=20e-3, i_gain=0.0005, plasticity=P(eta=1.0, theta=0.45)),
        cc.ReadoutToPyrApical: SynapseParams(tau_syn=20e-3, i_gain=0.175, alpha=1.0, e_rev=1.1),
        cc.ReadoutToInterSoma: SynapseParams(tau_syn=20e-3, i_gain=0.07, alpha=1.0, e_rev=1.65),
        cc.TeacherToReadoutSoma: SynapseParams(tau_syn=20e-3, i_gain=0.16, alpha=1.0, e_rev=3.0),
    }


def default_architecture(task: str = "recognition") -> ArchitectureSpec:
    if task == "discrimination":
        return ArchitectureSpec(32, 8, 2, 2, sparsity=0.5, w_init_range=(0.0, 1.0), seed=0)
    return ArchitectureSpec(32, 2, 1, 1, sparsity=1.0, w_init_range=(0.0, 1.0), seed=0)


def default_experiment(task: str = "recognition") -> ExperimentConfig:
    if task == "discrimination":
        return ExperimentConfig(train_blocks=5)
    return ExperimentConfig()


@dataclass(frozen=True)
class RunConfig:
    task: str = "recognition"
    architecture: ArchitectureSpec = field(default_factory=default_architecture)
    neurons: dict[str, NeuronParams] = field(default_factory=default_neurons)
    synapses: dict[ConnectionClass, SynapseParams] = field(default_factory=default_synapses)
    mismatch: MismatchConfig = field(default_factory=MismatchConfig)
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @classmethod
    def defaults(cls, task: str = "recognition") -> "RunConfig":
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        return cls(
            task=task,
            architecture=default_architecture(task),
            neurons=default_neurons(task),
            synapses=default_synapses(task),
            experiment=default_experiment(task),
        )

    def with_seed_offset(self, offset: int) -> "RunConfig":
        """Shift every seed by ``offset`` (seed sweeps)."""
        if offset == 0:
            return self
        return replace(
            self,
            architecture=replace(self.architecture, seed=self.architecture.seed + offset),
            mismatch=replace(self.mismatch, seed=self.mismatch.seed + offset),
            stimulus=replace(
                self.stimulus,
                seed=self.stimulus.seed + offset,
                deviant_seed=self.stimulus.deviant_seed + offset,
            ),
            engine=replace(self.engine, seed=self.engine.seed + offset),
        )


# --------------------------------------------------------------------------
# key table
# --------------------------------------------------------------------------


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _parse_int(text: str) -> int:
    return int(text)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (Convention, Trigger)):
        return v.name.lower()
    return str(v)


_CONVENTIONS = {"driving_force": Convention.DRIVING_FORCE, "literal": Convention.LITERAL}
_TRIGGERS = {"presynaptic": Trigger.PRESYNAPTIC, "periodic": Trigger.PERIODIC}


def _enum_parser(table: dict) -> Callable[[str], Any]:
    def parse(text: str):
        try:
            return table[text.lower()]
        except KeyError:
            raise ValueError(f"expected one of {sorted(table)}, got {text!r}") from None

    return parse


_NEURON_SCALARS = {
    "tau": _parse_float, "leak": _parse_float, "i_thr": _parse_float, "i_reset": _parse_float,
    "t_refr": _parse_float, "sigma": _parse_float, "tau_ca": _parse_float, "j_ca": _parse_float,
}
_COUPLING_KEYS = {"alpha_basal": Compartment.BASAL, "alpha_apical": Compartment.APICAL,
                  "alpha_soma": Compartment.SOMA}
_ARCH = {
    "n_inputs": _parse_int, "n_pyramidal": _parse_int, "n_inter": _parse_int,
    "n_readout": _parse_int, "sparsity": _parse_float, "w_init_low": _parse_float,
    "w_init_high": _parse_float, "seed": _parse_int,
}
_SYNAPSE = {
    "tau_syn": _parse_float, "i_gain": _parse_float, "weight": _parse_float,
    "alpha": _parse_float, "e_rev": _parse_float, "convention": _enum_parser(_CONVENTIONS),
}
_PLASTICITY = {
    "eta": _parse_float, "theta": _parse_float, "w_min": _parse_float, "w_max": _parse_float,
    "trigger": _enum_parser(_TRIGGERS), "period": _parse_float, "shifted": _parse_bool,
}
_MISMATCH = {"cv": _parse_float, "floor": _parse_float, "seed": _parse_int}
_STIMULUS = {
    "channels": _parse_int, "duration": _parse_float, "n_spikes": _parse_int, "seed": _parse_int,
    "deviant_seed": _parse_int, "periodic": _parse_bool, "teacher_rate": _parse_float,
    "teacher_mode": str,
}
_ENGINE = {
    "dt": _parse_float, "seed": _parse_int, "duration": _parse_float,
    "calcium_sample_every": _parse_int, "noise_grid": _parse_float, "soma_operand": str, "record_spikes": _parse_bool,
    "record_calcium": _parse_bool, "record_weights": _parse_bool,
    "record_compartments": _parse_bool,
}
_EXPERIMENT = {
    "baseline": _parse_float, "training": _parse_float, "test": _parse_float,
    "silence": _parse_float, "train_blocks": _parse_int, "discard_tau": _parse_float,
}
_SIMPLE_SECTIONS = {
    "architecture": _ARCH, "mismatch": _MISMATCH, "stimulus": _STIMULUS,
    "engine": _ENGINE, "experiment": _EXPERIMENT,
}


def _resolve(key: str) -> tuple[tuple, Callable[[str], Any]]:
    """Map a dotted key to a normalised address and its value parser."""
    parts = key.split(".")
    head = parts[0]
    if head == "task" and len(parts) == 1:
        return ("task",), str
    if head in _SIMPLE_SECTIONS and len(parts) == 2 and parts[1] in _SIMPLE_SECTIONS[head]:
        return (head, parts[1]), _SIMPLE_SECTIONS[head][parts[1]]
    if head == "neuron":
        if len(parts) == 2:
            pop, name = None, parts[1]
        elif len(parts) == 3 and parts[1] in NEURON_POPULATIONS:
            pop, name = parts[1], parts[2]
        else:
            raise KeyError(key)
        if name in _NEURON_SCALARS:
            return ("neuron", pop, name), _NEURON_SCALARS[name]
        if name in _COUPLING_KEYS:
            return ("neuron", pop, name), _parse_float
        raise KeyError(key)
    if head in ("synapse", "plasticity") and len(parts) == 3:
        try:
            cc = ConnectionClass[parts[1]]
        except KeyError:
            raise KeyError(key) from None
        table = _SYNAPSE if head == "synapse" else _PLASTICITY
        if parts[2] in table:
            if head == "plasticity" and not cc.info.plastic:
                raise KeyError(key)
            return (head, cc, parts[2]), table[parts[2]]
    raise KeyError(key)


def _apply(cfg: RunConfig, addr: tuple, value: Any) -> RunConfig:
    head = addr[0]
    if head == "task":
        return cfg
    if head == "architecture":
        arch = cfg.architecture
        name = addr[1]
        if name == "w_init_low":
            return replace(cfg, architecture=replace(arch, w_init_range=(value, arch.w_init_range[1])))
        if name == "w_init_high":
            return replace(cfg, architecture=replace(arch, w_init_range=(arch.w_init_range[0], value)))
        return replace(cfg, architecture=replace(arch, **{name: value}))
    if head == "neuron":
        _, pop, name = addr
        pops = NEURON_POPULATIONS if pop is None else (pop,)
        neurons = dict(cfg.neurons)
        for p in pops:
            cur = neurons[p]
            if name in _COUPLING_KEYS:
                couplings = dict(cur.couplings)
                couplings[_COUPLING_KEYS[name]] = value
                neurons[p] = replace(cur, couplings=couplings)
            else:
                neurons[p] = replace(cur, **{name: value})
        return replace(cfg, neurons=neurons)
    if head in ("synapse", "plasticity"):
        _, cc, name = addr
        synapses = dict(cfg.synapses)
        sp = synapses[cc]
        if head == "synapse":
            synapses[cc] = replace(sp, **{name: value})
        else:
            synapses[cc] = replace(sp, plasticity=replace(sp.plasticity, **{name: value}))
        return replace(cfg, synapses=synapses)
    if head == "engine":
        name = addr[1]
        if name.startswith("record_"):
            flags = replace(cfg.engine.record, **{name[len("record_"):]: value})
            return replace(cfg, engine=replace(cfg.engine, record=flags))
        return replace(cfg, engine=replace(cfg.engine, **{name: value}))
    section = getattr(cfg, head)
    return replace(cfg, **{head: replace(section, **{addr[1]: value})})


def _split_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        yield lineno, key, value


def parse_config(text: str, task: str | None = None) -> RunConfig:
    """Parse configuration text on top of the task's defaults.

    The task comes from the ``task`` key if present, else from the argument,
    else recognition.
    """
    entries = list(_split_lines(text))
    for lineno, key, value in entries:
        if key == "task":
            if value not in TASKS:
                raise ConfigError(f"task: expected one of {TASKS}, got {value!r}", "task", lineno)
            if task is not None and task != value:
                raise ConfigError(f"task: file says {value!r} but {task!r} was requested", "task", lineno)
            task = value
    cfg = RunConfig.defaults(task or "recognition")
    for lineno, key, value in entries:
        try:
            addr, parser = _resolve(key)
        except KeyError:
            raise ConfigError(f"unknown key {key!r}", key, lineno) from None
        try:
            cfg = _apply(cfg, addr, parser(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}", key, lineno) from None
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    for cc, sp in cfg.synapses.items():
        if not sp.tau_syn > 0:
            raise ConfigError(f"synapse.{cc.name}.tau_syn must be > 0", f"synapse.{cc.name}.tau_syn")
        if sp.tau_syn <= cfg.engine.dt:
            raise ConfigError(
                f"synapse.{cc.name}.tau_syn must exceed engine.dt", f"synapse.{cc.name}.tau_syn"
            )
        if cc.info.kind == 1 and not sp.alpha > 0:
            raise ConfigError(f"synapse.{cc.name}.alpha must be > 0", f"synapse.{cc.name}.alpha")
        if sp.i_gain < 0:
            raise ConfigError(f"synapse.{cc.name}.i_gain must be >= 0", f"synapse.{cc.name}.i_gain")
    for pop, p in cfg.neurons.items():
        if cfg.engine.dt * p.leak / p.tau >= 1:
            raise ConfigError(f"engine.dt too large for neuron.{pop}: dt*leak/tau must be < 1", "engine.dt")


def serialize_config(cfg: RunConfig) -> str:
    """Every key with its current value; ``parse_config`` inverts it."""
    lines = [f"task = {cfg.task}"]
    a = cfg.architecture
    for name in ("n_inputs", "n_pyramidal", "n_inter", "n_readout", "sparsity"):
        lines.append(f"architecture.{name} = {_fmt(getattr(a, name))}")
    lines.append(f"architecture.w_init_low = {_fmt(float(a.w_init_range[0]))}")
    lines.append(f"architecture.w_init_high = {_fmt(float(a.w_init_range[1]))}")
    lines.append(f"architecture.seed = {a.seed}")
    for pop in NEURON_POPULATIONS:
        p = cfg.neurons[pop]
        for name in _NEURON_SCALARS:
            lines.append(f"neuron.{pop}.{name} = {_fmt(float(getattr(p, name)))}")
        for name, comp in _COUPLING_KEYS.items():
            if comp in p.couplings:
                lines.append(f"neuron.{pop}.{name} = {_fmt(float(p.couplings[comp]))}")
    for cc in ConnectionClass:
        sp = cfg.synapses[cc]
        for name in _SYNAPSE:
            v = getattr(sp, name)
            lines.append(f"synapse.{cc.name}.{name} = {_fmt(v if isinstance(v, Convention) else float(v))}")
        if cc.info.plastic:
            for name in _PLASTICITY:
                v = getattr(sp.plasticity, name)
                if isinstance(v, (int, float)) and not isinstance(v, (bool, Trigger)):
                    v = float(v)
                lines.append(f"plasticity.{cc.name}.{name} = {_fmt(v)}")
    for name in _MISMATCH:
        lines.append(f"mismatch.{name} = {_fmt(getattr(cfg.mismatch, name))}")
    for name in _STIMULUS:
        lines.append(f"stimulus.{name} = {_fmt(getattr(cfg.stimulus, name))}")
    e = cfg.engine
    lines.append(f"engine.dt = {_fmt(e.dt)}")
    lines.append(f"engine.seed = {e.seed}")
    lines.append(f"engine.duration = {_fmt(e.duration)}")
    lines.append(f"engine.calcium_sample_every = {e.calcium_sample_every}")
    lines.append(f"engine.noise_grid = {_fmt(e.noise_grid)}")
    lines.append(f"engine.soma_operand = {e.soma_operand}")
    for f in fields(RecordFlags):
        lines.append(f"engine.record_{f.name} = {_fmt(getattr(e.record, f.name))}")
    for name in _EXPERIMENT:
        lines.append(f"experiment.{name} = {_fmt(getattr(cfg.experiment, name))}")
    return "\n".join(lines) + "\n"
