"""Model parameterization: loading, validation and serialization.

A :class:`ModelConfig` fully describes one network: the eight cell
populations, the 8x8 connectivity rules, the external-input condition,
the neuron model, the cylinder geometry, and experiment-level defaults
(dt, duration, transient, seed).  Configs are immutable after load and
safe to share across threads.

The canonical full-scale parameter set ships as a versioned JSON data
file (``data/potjans_diesmann_2014.json``) transcribed from the original
model publication; see the ``provenance`` block inside the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

POPULATION_LABELS = ("L2e", "L2i", "L4e", "L4i", "L5e", "L5i", "L6e", "L6i")
N_POPULATIONS = 8

INPUT_MODES = ("poisson_balanced", "dc_balanced", "poisson_unbalanced")

CANONICAL_RESOURCE = "potjans_diesmann_2014.json"


class ConfigError(ValueError):
    """Raised when a configuration file fails to parse or violates an invariant."""


@dataclass(frozen=True)
class PopulationSpec:
    """One cell population: size, background in-degrees, reference rate, depth band."""

    name: str
    size: int
    ext_indegree_balanced: int
    ext_indegree_unbalanced: int
    full_scale_rate_hz: float
    depth_range_um: tuple[float, float]


@dataclass(frozen=True)
class ConnectionSpec:
    """A single pre -> post connectivity rule (one cell of the 8x8 grid)."""

    pre: str
    post: str
    probability: float
    weight_mean_pa: float
    weight_rel_sd: float
    delay_mean_ms: float
    delay_rel_sd: float


@dataclass(frozen=True)
class ExternalInputSpec:
    """External drive condition: mode, per-input rate, synaptic weight."""

    mode: str
    rate_per_input_hz: float
    weight_pa: float


@dataclass(frozen=True)
class NeuronModelSpec:
    """Current-based LIF parameters with a single exponential synaptic current."""

    tau_m_ms: float
    tau_syn_ms: float
    c_m_pf: float
    v_rest_mv: float
    v_reset_mv: float
    v_theta_mv: float
    t_ref_ms: float
    v_init_mean_mv: float
    v_init_sd_mv: float

    @property
    def r_mohm_gohm(self) -> float:
        """Membrane resistance tau_m / C_m in GOhm (pA * GOhm = mV)."""
        return self.tau_m_ms / self.c_m_pf


@dataclass(frozen=True)
class GeometrySpec:
    """Cylinder the cells are embedded in; depth is the y axis."""

    depth_um: float
    diameter_um: float

    @property
    def radius_um(self) -> float:
        return self.diameter_um / 2.0


@dataclass(frozen=True)
class ExperimentSpec:
    """Experiment-level defaults; CLI flags override these."""

    dt_ms: float = 0.1
    duration_ms: float = 1000.0
    transient_ms: float = 100.0
    seed: int = 1


@dataclass(frozen=True)
class Connectivity:
    """8x8 rule matrices, indexed [post, pre] (row = target population)."""

    probability: np.ndarray
    weight_mean_pa: np.ndarray
    weight_rel_sd: np.ndarray
    delay_mean_ms: np.ndarray
    delay_rel_sd: np.ndarray

    def __post_init__(self):
        for name in ("probability", "weight_mean_pa", "weight_rel_sd",
                     "delay_mean_ms", "delay_rel_sd"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_POPULATIONS, N_POPULATIONS):
                raise ConfigError(f"connectivity.{name}: expected 8x8 matrix, "
                                  f"got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def rule(self, pre: int | str, post: int | str) -> ConnectionSpec:
        """Per-rule view of the matrices for one (pre, post) pair."""
        i = POPULATION_LABELS.index(post) if isinstance(post, str) else post
        j = POPULATION_LABELS.index(pre) if isinstance(pre, str) else pre
        return ConnectionSpec(
            pre=POPULATION_LABELS[j],
            post=POPULATION_LABELS[i],
            probability=float(self.probability[i, j]),
            weight_mean_pa=float(self.weight_mean_pa[i, j]),
            weight_rel_sd=float(self.weight_rel_sd[i, j]),
            delay_mean_ms=float(self.delay_mean_ms[i, j]),
            delay_rel_sd=float(self.delay_rel_sd[i, j]),
        )

    def __eq__(self, other):
        if not isinstance(other, Connectivity):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("probability", "weight_mean_pa", "weight_rel_sd",
                      "delay_mean_ms", "delay_rel_sd")
        )


@dataclass(frozen=True)
class ModelConfig:
    """Validated, immutable description of one network parameterization."""

    populations: tuple[PopulationSpec, ...]
    connectivity: Connectivity
    external: ExternalInputSpec
    neuron: NeuronModelSpec
    geometry: GeometrySpec
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    expected_total_neurons: int | None = None

    @property
    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.populations], dtype=np.int64)

    @property
    def total_neurons(self) -> int:
        return int(self.sizes.sum())

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.populations)

    def ext_indegrees(self, mode: str | None = None) -> np.ndarray:
        """Background in-degrees for the given input mode (default: own mode)."""
        mode = mode or self.external.mode
        if mode not in INPUT_MODES:
            raise ConfigError(f"external.mode: unknown input mode {mode!r}")
        if mode == "poisson_unbalanced":
            col = [p.ext_indegree_unbalanced for p in self.populations]
        else:
            col = [p.ext_indegree_balanced for p in self.populations]
        return np.array(col, dtype=np.int64)

    @property
    def full_scale_rates_hz(self) -> np.ndarray:
        return np.array([p.full_scale_rate_hz for p in self.populations])

    def with_mode(self, mode: str) -> "ModelConfig":
        """Copy of this config with a different external-input mode."""
        if mode not in INPUT_MODES:
            raise ConfigError(f"external.mode: unknown input mode {mode!r}")
        return replace(self, external=replace(self.external, mode=mode))

    def with_experiment(self, **kwargs) -> "ModelConfig":
        """Copy of this config with experiment-level overrides applied."""
        return replace(self, experiment=replace(self.experiment, **kwargs))


# ---------------------------------------------------------------------------
# validation

def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate(config: ModelConfig) -> ModelConfig:
    """Check every type invariant; returns the config unchanged on success.

    Raises :class:`ConfigError` naming the failing invariant and field.
    """
    pops = config.populations
    _check(len(pops) == N_POPULATIONS,
           f"population count != 8: got {len(pops)}")
    _check(tuple(p.name for p in pops) == POPULATION_LABELS,
           "populations: names must be L2e,L2i,L4e,L4i,L5e,L5i,L6e,L6i in order")
    for p in pops:
        _check(p.size > 0, f"populations[{p.name}].size: must be > 0")
        _check(p.ext_indegree_balanced >= 0,
               f"populations[{p.name}].ext_indegree_balanced: must be >= 0")
        _check(p.ext_indegree_unbalanced >= 0,
               f"populations[{p.name}].ext_indegree_unbalanced: must be >= 0")
        _check(p.full_scale_rate_hz >= 0,
               f"populations[{p.name}].full_scale_rate_hz: must be >= 0")

    if config.expected_total_neurons is not None:
        _check(config.total_neurons == config.expected_total_neurons,
               f"populations: sizes sum to {config.total_neurons}, expected "
               f"{config.expected_total_neurons}")

    geo = config.geometry
    _check(geo.depth_um > 0, "geometry.depth_um: must be > 0")
    _check(geo.diameter_um > 0, "geometry.diameter_um: must be > 0")

    # Depth bands: disjoint, ordered, and partitioning [0, depth].
    prev_hi = 0.0
    for p in pops:
        lo, hi = p.depth_range_um
        _check(lo < hi, f"populations[{p.name}].depth_range_um: empty band")
        _check(abs(lo - prev_hi) < 1e-9,
               f"populations[{p.name}].depth_range_um: bands must be contiguous "
               f"(starts at {lo}, previous ends at {prev_hi})")
        prev_hi = hi
    _check(abs(prev_hi - geo.depth_um) < 1e-9,
           f"populations: depth bands end at {prev_hi}, cylinder depth is "
           f"{geo.depth_um}")

    conn = config.connectivity
    p = conn.probability
    _check(bool(np.all((p >= 0.0) & (p < 1.0))),
           "connectivity.probability: entries must lie in [0, 1)")
    for j in range(N_POPULATIONS):
        col = conn.weight_mean_pa[:, j]
        if j % 2 == 0:
            _check(bool(np.all(col > 0)),
                   f"connectivity.weight_mean_pa: excitatory source "
                   f"{POPULATION_LABELS[j]} must have positive weights")
        else:
            _check(bool(np.all(col < 0)),
                   f"connectivity.weight_mean_pa: inhibitory source "
                   f"{POPULATION_LABELS[j]} must have negative weights")
    _check(bool(np.all(conn.delay_mean_ms > 0)),
           "connectivity.delay_mean_ms: delays must be > 0")
    _check(bool(np.all(conn.weight_rel_sd >= 0)),
           "connectivity.weight_rel_sd: must be >= 0")
    _check(bool(np.all(conn.delay_rel_sd >= 0)),
           "connectivity.delay_rel_sd: must be >= 0")

    ext = config.external
    _check(ext.mode in INPUT_MODES,
           f"external.mode: must be one of {INPUT_MODES}, got {ext.mode!r}")
    _check(ext.rate_per_input_hz > 0,
           "external.rate_per_input_hz: must be > 0")

    nm = config.neuron
    _check(nm.tau_m_ms > 0, "neuron.tau_m_ms: must be > 0")
    _check(nm.tau_syn_ms > 0, "neuron.tau_syn_ms: must be > 0")
    # tau_m > tau_syn is the canonical case and must be accepted; only
    # exact equality is rejected (degenerate propagator), by the engine.
    _check(nm.c_m_pf > 0, "neuron.c_m_pf: must be > 0")
    _check(nm.v_theta_mv > nm.v_reset_mv,
           "neuron.v_theta_mv: threshold must exceed reset potential")
    _check(nm.t_ref_ms >= 0, "neuron.t_ref_ms: must be >= 0")
    _check(nm.v_init_sd_mv >= 0, "neuron.v_init_sd_mv: must be >= 0")

    exp = config.experiment
    _check(exp.dt_ms > 0, "experiment.dt_ms: must be > 0")
    _check(exp.duration_ms > 0, "experiment.duration_ms: must be > 0")
    _check(exp.transient_ms >= 0, "experiment.transient_ms: must be >= 0")

    return config


# ---------------------------------------------------------------------------
# (de)serialization

def config_from_dict(data: dict) -> ModelConfig:
    """Build and validate a ModelConfig from a parsed JSON dict."""
    try:
        pops = tuple(
            PopulationSpec(
                name=str(p["name"]),
                size=int(p["size"]),
                ext_indegree_balanced=int(p["ext_indegree_balanced"]),
                ext_indegree_unbalanced=int(p["ext_indegree_unbalanced"]),
                full_scale_rate_hz=float(p["full_scale_rate_hz"]),
                depth_range_um=(float(p["depth_range_um"][0]),
                                float(p["depth_range_um"][1])),
            )
            for p in data["populations"]
        )
        conn = data["connectivity"]
        connectivity = Connectivity(
            probability=conn["probability"],
            weight_mean_pa=conn["weight_mean_pa"],
            weight_rel_sd=conn["weight_rel_sd"],
            delay_mean_ms=conn["delay_mean_ms"],
            delay_rel_sd=conn["delay_rel_sd"],
        )
        external = ExternalInputSpec(
            mode=str(data["external"].get("mode", "poisson_balanced")),
            rate_per_input_hz=float(data["external"]["rate_per_input_hz"]),
            weight_pa=float(data["external"]["weight_pa"]),
        )
        neuron = NeuronModelSpec(**{k: float(v) for k, v in data["neuron"].items()})
        geometry = GeometrySpec(
            depth_um=float(data["geometry"]["depth_um"]),
            diameter_um=float(data["geometry"]["diameter_um"]),
        )
        exp_data = data.get("experiment", {})
        experiment = ExperimentSpec(
            dt_ms=float(exp_data.get("dt_ms", 0.1)),
            duration_ms=float(exp_data.get("duration_ms", 1000.0)),
            transient_ms=float(exp_data.get("transient_ms", 100.0)),
            seed=int(exp_data.get("seed", 1)),
        )
        expected = data.get("expected_total_neurons")
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"config parse error: missing or malformed field {exc}") from exc
    config = ModelConfig(
        populations=pops,
        connectivity=connectivity,
        external=external,
        neuron=neuron,
        geometry=geometry,
        experiment=experiment,
        expected_total_neurons=None if expected is None else int(expected),
    )
    return validate(config)


def config_to_dict(config: ModelConfig) -> dict:
    """Serialize to a JSON-ready dict; round-trips through config_from_dict."""
    data = {
        "format": "microcircuit-config",
        "schema_version": 1,
        "geometry": {
            "depth_um": config.geometry.depth_um,
            "diameter_um": config.geometry.diameter_um,
        },
        "neuron": {
            "tau_m_ms": config.neuron.tau_m_ms,
            "tau_syn_ms": config.neuron.tau_syn_ms,
            "c_m_pf": config.neuron.c_m_pf,
            "v_rest_mv": config.neuron.v_rest_mv,
            "v_reset_mv": config.neuron.v_reset_mv,
            "v_theta_mv": config.neuron.v_theta_mv,
            "t_ref_ms": config.neuron.t_ref_ms,
            "v_init_mean_mv": config.neuron.v_init_mean_mv,
            "v_init_sd_mv": config.neuron.v_init_sd_mv,
        },
        "external": {
            "mode": config.external.mode,
            "rate_per_input_hz": config.external.rate_per_input_hz,
            "weight_pa": config.external.weight_pa,
        },
        "populations": [
            {
                "name": p.name,
                "size": p.size,
                "ext_indegree_balanced": p.ext_indegree_balanced,
                "ext_indegree_unbalanced": p.ext_indegree_unbalanced,
                "full_scale_rate_hz": p.full_scale_rate_hz,
                "depth_range_um": list(p.depth_range_um),
            }
            for p in config.populations
        ],
        "connectivity": {
            "layout": "post_pre",
            "probability": config.connectivity.probability.tolist(),
            "weight_mean_pa": config.connectivity.weight_mean_pa.tolist(),
            "weight_rel_sd": config.connectivity.weight_rel_sd.tolist(),
            "delay_mean_ms": config.connectivity.delay_mean_ms.tolist(),
            "delay_rel_sd": config.connectivity.delay_rel_sd.tolist(),
        },
        "experiment": {
            "dt_ms": config.experiment.dt_ms,
            "duration_ms": config.experiment.duration_ms,
            "transient_ms": config.experiment.transient_ms,
            "seed": config.experiment.seed,
        },
    }
    if config.expected_total_neurons is not None:
        data["expected_total_neurons"] = config.expected_total_neurons
    return data


def load_config(path) -> ModelConfig:
    """Load and validate a configuration file.

    Raises ConfigError on parse errors or invariant violations; the message
    names the failing invariant and field.
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(config: ModelConfig, path):
    """Write a config as JSON; load_config(path) restores it exactly."""
    with open(path, "w") as f:
        json.dump(config_to_dict(config), f, indent=2)
        f.write("\n")


def canonical_config() -> ModelConfig:
    """The shipped full-scale parameter set (77,169 neurons)."""
    text = resources.files("microcircuit").joinpath(
        f"data/{CANONICAL_RESOURCE}").read_text()
    return config_from_dict(json.loads(text))


def canonical_path() -> str:
    """Filesystem path of the shipped canonical parameter file."""
    return str(resources.files("microcircuit").joinpath(f"data/{CANONICAL_RESOURCE}"))
