"""Single-parameter network rescaling.

A scale factor k maps the full-scale network to a resized one:

1. neuron counts and external in-degrees are multiplied by k,
2. pair synapse totals are multiplied by k**2 (connection probabilities
   between populations are untouched),
3. synaptic weights are divided by sqrt(k),
4. every neuron receives an extra DC current equal to the mean input
   lost to the first three steps.

Steps 1-3 preserve the network proportions, step 4 the mean input, so
the per-population rate, irregularity and synchrony statistics carry
over between sizes.

All scaled counts are floored.  Floors are computed on exact rational
arithmetic: a float k is first normalized to the decimal it prints as
(0.3 -> 3/10), because e.g. floor(0.3 * 4850) must be 1455, not the
1454 binary-float multiplication would give.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from decimal import Decimal
from fractions import Fraction

import numpy as np

from .build import mean_current_pa, synapse_count_matrix
from .params import ModelConfig


def as_scale_factor(k) -> Fraction:
    """Normalize a scale factor to an exact positive rational.

    Accepts Fraction, int, decimal strings ("0.3", "3/10") and floats;
    floats are interpreted through their shortest decimal representation.
    """
    if isinstance(k, Fraction):
        frac = k
    elif isinstance(k, (int, np.integer)):
        frac = Fraction(int(k))
    elif isinstance(k, str):
        frac = Fraction(k)
    elif isinstance(k, (float, np.floating)):
        frac = Fraction(Decimal(str(float(k))))
    else:
        raise TypeError(f"scale factor must be a number or string, got {type(k)}")
    if frac <= 0:
        raise ValueError(f"scale factor must be > 0, got {frac}")
    return frac


def _floor_scaled(values, factor: Fraction) -> np.ndarray:
    flat = np.asarray(values, dtype=np.int64)
    out = np.array([math.floor(factor * int(v)) for v in flat.ravel()],
                   dtype=np.int64)
    return out.reshape(flat.shape)


def scale_population_sizes(sizes, k) -> np.ndarray:
    """floor(k * N) per population; warns if a population empties out."""
    k = as_scale_factor(k)
    scaled = _floor_scaled(sizes, k)
    if np.any(scaled == 0):
        import warnings
        empty = [i for i, v in enumerate(scaled) if v == 0]
        warnings.warn(f"scale factor {float(k)} empties population(s) {empty}; "
                      "their statistics are undefined", stacklevel=2)
    return scaled


def scale_external_indegrees(indegrees, k) -> np.ndarray:
    """floor(k * I) per population."""
    return _floor_scaled(indegrees, as_scale_factor(k))


def scale_pair_synapse_counts(counts, k) -> np.ndarray:
    """floor(k**2 * C) for every population pair."""
    k = as_scale_factor(k)
    return _floor_scaled(counts, k * k)


def scale_weights(weights, k):
    """Divide weights by sqrt(k); sign is preserved."""
    k = as_scale_factor(k)
    return np.asarray(weights, dtype=float) / math.sqrt(float(k))


def full_scale_mean_input_pa(config: ModelConfig,
                             mode: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Full-scale analytic mean input per neuron, split into
    (recurrent, external) per-population components in pA.

    Recurrent in-degrees are the exact pair totals divided by the target
    population size; each pair contributes with its own weight.
    """
    counts = synapse_count_matrix(config)
    sizes = config.sizes.astype(float)
    indegree = counts / sizes[:, None]
    tau_syn = config.neuron.tau_syn_ms
    rates = config.full_scale_rates_hz
    recurrent = mean_current_pa(indegree * config.connectivity.weight_mean_pa,
                                1.0, 1.0, tau_syn) @ rates
    external = mean_current_pa(config.ext_indegrees(mode).astype(float),
                               config.external.rate_per_input_hz,
                               config.external.weight_pa, tau_syn)
    return recurrent, external


def dc_compensation(config: ModelConfig, k, mode: str | None = None) -> np.ndarray:
    """Per-population compensation current (pA) for scale factor k.

    Equals (1 - sqrt(k)) times the full-scale mean input (recurrent plus
    external); exactly zero at k = 1.
    """
    k = as_scale_factor(k)
    recurrent, external = full_scale_mean_input_pa(config, mode)
    return (1.0 - math.sqrt(float(k))) * (recurrent + external)


def analytic_mean_input_pa(config: ModelConfig, k,
                           mode: str | None = None) -> np.ndarray:
    """Mean input per neuron at scale k: sqrt(k) x (recurrent + external)
    plus the compensation current.  Independent of k by construction."""
    k = as_scale_factor(k)
    recurrent, external = full_scale_mean_input_pa(config, mode)
    s = math.sqrt(float(k))
    return s * recurrent + s * external + dc_compensation(config, k, mode)


@dataclass(frozen=True)
class ScaleTransform:
    """All derived quantities of one rescaling step, for audit and reuse.

    ``scaled_ext_indegrees`` holds the in-degree column of the configured
    input mode; the rescaled config carries both columns.
    """

    k: Fraction
    scaled_sizes: np.ndarray
    scaled_ext_indegrees: np.ndarray
    scaled_pair_synapses: np.ndarray
    weight_factor: float
    dc_compensation_pa: np.ndarray
    full_pair_synapses: np.ndarray

    @property
    def k_float(self) -> float:
        return float(self.k)

    @property
    def total_neurons(self) -> int:
        return int(self.scaled_sizes.sum())

    @property
    def total_synapses(self) -> int:
        return int(self.scaled_pair_synapses.sum())

    def to_dict(self) -> dict:
        return {
            "scale": str(self.k),
            "scale_float": self.k_float,
            "weight_factor": self.weight_factor,
            "total_neurons": self.total_neurons,
            "total_synapses": self.total_synapses,
            "scaled_sizes": self.scaled_sizes.tolist(),
            "scaled_ext_indegrees": self.scaled_ext_indegrees.tolist(),
            "dc_compensation_pa": self.dc_compensation_pa.tolist(),
            "scaled_pair_synapses": self.scaled_pair_synapses.tolist(),
            "full_pair_synapses": self.full_pair_synapses.tolist(),
        }


def make_transform(config: ModelConfig, k) -> ScaleTransform:
    """Compute the ScaleTransform for k without touching the config."""
    k = as_scale_factor(k)
    full_counts = synapse_count_matrix(config)
    return ScaleTransform(
        k=k,
        scaled_sizes=scale_population_sizes(config.sizes, k),
        scaled_ext_indegrees=scale_external_indegrees(config.ext_indegrees(), k),
        scaled_pair_synapses=scale_pair_synapse_counts(full_counts, k),
        weight_factor=1.0 / math.sqrt(float(k)),
        dc_compensation_pa=dc_compensation(config, k),
        full_pair_synapses=full_counts,
    )


def apply_transform(config: ModelConfig, k) -> tuple[ModelConfig, ScaleTransform]:
    """Rescale a config by k; returns (scaled config, transform).

    The original config is untouched.  k = 1 returns a config equal to the
    input and an all-zero compensation.  k > 1 (upscaling) uses the same
    formulas; only the structural invariants, not the activity statistics,
    are guaranteed there.
    """
    k = as_scale_factor(k)
    transform = make_transform(config, k)
    factor = transform.weight_factor

    scaled_balanced = scale_external_indegrees(
        [p.ext_indegree_balanced for p in config.populations], k)
    scaled_unbalanced = scale_external_indegrees(
        [p.ext_indegree_unbalanced for p in config.populations], k)
    populations = tuple(
        replace(p,
                size=int(transform.scaled_sizes[i]),
                ext_indegree_balanced=int(scaled_balanced[i]),
                ext_indegree_unbalanced=int(scaled_unbalanced[i]))
        for i, p in enumerate(config.populations)
    )
    connectivity = replace(
        config.connectivity,
        weight_mean_pa=config.connectivity.weight_mean_pa * factor,
    )
    external = replace(config.external,
                       weight_pa=config.external.weight_pa * factor)
    scaled = replace(
        config,
        populations=populations,
        connectivity=connectivity,
        external=external,
        expected_total_neurons=config.expected_total_neurons if k == 1 else None,
    )
    return scaled, transform
