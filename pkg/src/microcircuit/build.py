"""Network materialization: ids, positions, synapses, external drive.

Connectivity uses the fixed-total-number scheme: between two populations
exactly C synapses are realized, with source and target of every synapse
drawn uniformly with replacement (multapses and autapses permitted).
C comes from the exact formula

    C = round( ln(1 - p) / ln(1 - 1/(N_pre * N_post)) )

so that the probability that a given ordered pair is connected by at
least one synapse equals p.  Using the exact count, not the p*N*N
approximation, matters for reproducing the reference firing rates.

Synapses are stored per source in a compressed layout, sorted by
(source, delay); contiguous equal-delay runs per source are indexed so
the propagation loop can schedule whole runs at once.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ._streams import TAG_POSITIONS, TAG_SYNAPSES, stream
from .params import ModelConfig, ConnectionSpec

MAX_DELAY_STEPS = 32767  # delays are stored as int16


def mean_current_pa(indegree, rate_hz, weight_pa, tau_syn_ms) -> float:
    """Mean current of a Poisson bombardment: K * rate * W * tau_syn.

    The charge injected per presynaptic spike is W * tau_syn, so the
    stationary mean current is in-degree x rate x W x tau_syn (the 1e-3
    converts Hz * ms to a dimensionless count).
    """
    return indegree * rate_hz * weight_pa * tau_syn_ms * 1e-3


def exact_synapse_count(p: float, n_pre: int, n_post: int) -> int:
    """Exact total number of synapses realizing pair-connection probability p."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"connection probability must lie in [0, 1), got {p}")
    if n_pre < 1 or n_post < 1:
        raise ValueError("population sizes must be >= 1")
    if p == 0.0:
        return 0
    m = n_pre * n_post
    return int(round(math.log1p(-p) / math.log1p(-1.0 / m)))


def synapse_count_matrix(config: ModelConfig) -> np.ndarray:
    """8x8 exact pair totals, indexed [post, pre]."""
    sizes = config.sizes
    prob = config.connectivity.probability
    counts = np.zeros_like(prob, dtype=np.int64)
    for i in range(len(sizes)):
        for j in range(len(sizes)):
            counts[i, j] = exact_synapse_count(prob[i, j], int(sizes[j]),
                                               int(sizes[i]))
    return counts


def draw_synapses(count: int, pre_range: tuple[int, int],
                  post_range: tuple[int, int],
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw exactly `count` (source, target) pairs uniformly with replacement."""
    if count < 0:
        raise ValueError("synapse count must be >= 0")
    if count == 0:
        return (np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32))
    if pre_range[1] <= pre_range[0] or post_range[1] <= post_range[0]:
        raise ValueError("cannot draw synapses from an empty id range")
    sources = rng.integers(pre_range[0], pre_range[1], count, dtype=np.int32)
    targets = rng.integers(post_range[0], post_range[1], count, dtype=np.int32)
    return sources, targets


def draw_weight_delay(rule: ConnectionSpec, count: int, dt_ms: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw `count` weights (pA, float32) and delays (integer steps).

    Weights are normal around the rule mean and clipped so they cannot
    change sign.  Delays are normal in ms, clipped below at one step,
    then rounded to the grid.
    """
    w = rng.normal(rule.weight_mean_pa,
                   rule.weight_rel_sd * abs(rule.weight_mean_pa), count)
    if rule.weight_mean_pa >= 0:
        np.maximum(w, 0.0, out=w)
    else:
        np.minimum(w, 0.0, out=w)
    d_ms = rng.normal(rule.delay_mean_ms, rule.delay_rel_sd * rule.delay_mean_ms,
                      count)
    np.maximum(d_ms, dt_ms, out=d_ms)
    steps = np.rint(d_ms / dt_ms).astype(np.int32)
    return w.astype(np.float32), steps


def place_neurons(config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """Positions (x, y, z) in um; y is depth.  Uniform in the cylinder
    cross-section and in each population's depth band."""
    radius = config.geometry.radius_um
    chunks = []
    for pop in config.populations:
        n = pop.size
        r = radius * np.sqrt(rng.random(n))
        angle = rng.uniform(0.0, 2.0 * np.pi, n)
        lo, hi = pop.depth_range_um
        y = rng.uniform(lo, hi, n)
        chunks.append(np.column_stack((r * np.cos(angle), y, r * np.sin(angle))))
    return np.concatenate(chunks, axis=0)


@dataclass
class NetworkInstance:
    """A concrete network ready for simulation.

    Synapse arrays are CSR-like per source, sorted by (source, delay);
    run arrays index the contiguous equal-delay blocks of each source.
    External drive is either a Poisson in-degree per neuron (poisson
    modes) or an equivalent DC current (dc mode); dc_comp_pa carries the
    rescaling compensation.
    """

    labels: tuple
    pop_slices: tuple          # (start, stop) per population
    neuron: object             # NeuronModelSpec
    dt_ms: float
    seed: int

    syn_indptr: np.ndarray     # int64[N+1]
    syn_targets: np.ndarray    # int32[S]
    syn_weights: np.ndarray    # float32[S]
    syn_delays: np.ndarray     # int16[S], steps

    run_ptr: np.ndarray        # int64[N+1], runs per source
    run_offsets: np.ndarray    # int64[R+1], synapse span of each run
    run_delays: np.ndarray     # int32[R]

    ext_mode: str
    ext_indegree: np.ndarray   # int32[N]
    ext_rate_hz: float
    ext_weight_pa: float
    ext_dc_pa: np.ndarray      # float64[N], dc-mode equivalent drive
    dc_comp_pa: np.ndarray     # float64[N], rescaling compensation

    positions_um: np.ndarray   # float64[N, 3]

    @property
    def n_neurons(self) -> int:
        return len(self.syn_indptr) - 1

    @property
    def n_synapses(self) -> int:
        return len(self.syn_targets)

    @property
    def max_delay_steps(self) -> int:
        return int(self.syn_delays.max()) if self.n_synapses else 1

    @property
    def bytes_per_synapse(self) -> float:
        if self.n_synapses == 0:
            return 0.0
        return (self.syn_targets.nbytes + self.syn_weights.nbytes
                + self.syn_delays.nbytes) / self.n_synapses

    def population_ids(self, label) -> np.ndarray:
        start, stop = self.pop_slices[self.labels.index(label)]
        return np.arange(start, stop, dtype=np.int32)

    def pair_synapse_counts(self) -> np.ndarray:
        """Recount realized synapses per (post, pre) pair from the arrays."""
        n_pop = len(self.labels)
        starts = np.array([s for s, _ in self.pop_slices] + [self.pop_slices[-1][1]])
        src = np.repeat(np.arange(self.n_neurons), np.diff(self.syn_indptr))
        src_pop = np.searchsorted(starts, src, side="right") - 1
        tgt_pop = np.searchsorted(starts, self.syn_targets, side="right") - 1
        counts = np.zeros((n_pop, n_pop), dtype=np.int64)
        np.add.at(counts, (tgt_pop, src_pop), 1)
        return counts


def _pair_list(config: ModelConfig, counts: np.ndarray):
    n_pop = len(config.populations)
    return [(i, j) for i in range(n_pop) for j in range(n_pop)
            if counts[i, j] > 0]


def build(config: ModelConfig, transform=None, seed: int = 0,
          workers: int = 1) -> NetworkInstance:
    """Materialize a NetworkInstance from a (possibly rescaled) config.

    `transform` is the ScaleTransform that produced `config` (None for an
    unscaled build).  Every population pair draws from its own stream
    keyed by (seed, pre, post), so the result is independent of the order
    or parallelism of pair realization.
    """
    sizes = config.sizes
    if transform is not None:
        if not np.array_equal(transform.scaled_sizes, sizes):
            raise ValueError("config/transform mismatch: transform sizes "
                             f"{transform.scaled_sizes.tolist()} != config sizes "
                             f"{sizes.tolist()} (pass the rescaled config)")
        counts = transform.scaled_pair_synapses
        dc_comp_pop = transform.dc_compensation_pa
    else:
        counts = synapse_count_matrix(config)
        dc_comp_pop = np.zeros(len(sizes))

    n = int(sizes.sum())
    starts = np.concatenate(([0], np.cumsum(sizes)))
    pop_slices = tuple((int(starts[i]), int(starts[i + 1]))
                       for i in range(len(sizes)))
    dt_ms = config.experiment.dt_ms

    def realize(pair):
        i, j = pair  # post, pre
        rng = stream(seed, TAG_SYNAPSES, j, i)
        c = int(counts[i, j])
        src, tgt = draw_synapses(c, (starts[j], starts[j + 1]),
                                 (starts[i], starts[i + 1]), rng)
        w, d = draw_weight_delay(config.connectivity.rule(j, i), c, dt_ms, rng)
        return src, tgt, w, d

    pairs = _pair_list(config, counts)
    if workers > 1 and len(pairs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(realize, pairs))
    else:
        parts = [realize(p) for p in pairs]

    if parts:
        sources = np.concatenate([p[0] for p in parts])
        targets = np.concatenate([p[1] for p in parts])
        weights = np.concatenate([p[2] for p in parts])
        delays = np.concatenate([p[3] for p in parts])
    else:
        sources = np.empty(0, dtype=np.int32)
        targets = np.empty(0, dtype=np.int32)
        weights = np.empty(0, dtype=np.float32)
        delays = np.empty(0, dtype=np.int32)
    del parts

    if delays.size and delays.max() > MAX_DELAY_STEPS:
        raise ValueError(f"delay of {delays.max()} steps exceeds the int16 "
                         f"storage limit ({MAX_DELAY_STEPS}); increase dt")

    # Canonical order: (source, delay, draw order).  The stable sort makes
    # the layout, and therefore all downstream float accumulation orders,
    # a pure function of (config, seed).
    order = np.lexsort((delays, sources))
    sources = sources[order]
    targets = targets[order]
    weights = weights[order]
    delays = delays[order]

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(sources, minlength=n), out=indptr[1:])

    if sources.size:
        change = (sources[1:] != sources[:-1]) | (delays[1:] != delays[:-1])
        run_starts = np.concatenate(([0], np.flatnonzero(change) + 1))
        run_offsets = np.concatenate((run_starts, [sources.size]))
        run_delays = delays[run_starts].astype(np.int32)
        runs_per_source = np.bincount(sources[run_starts], minlength=n)
    else:
        run_offsets = np.zeros(1, dtype=np.int64)
        run_delays = np.empty(0, dtype=np.int32)
        runs_per_source = np.zeros(n, dtype=np.int64)
    run_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(runs_per_source, out=run_ptr[1:])

    ext_mode = config.external.mode
    indegree_pop = config.ext_indegrees(ext_mode)
    ext_indegree = np.repeat(indegree_pop, sizes).astype(np.int32)
    if ext_mode == "dc_balanced":
        dc_pop = np.array([
            mean_current_pa(int(indegree_pop[i]), config.external.rate_per_input_hz,
                            config.external.weight_pa, config.neuron.tau_syn_ms)
            for i in range(len(sizes))
        ])
        ext_dc = np.repeat(dc_pop, sizes)
    else:
        ext_dc = np.zeros(n)

    return NetworkInstance(
        labels=config.labels,
        pop_slices=pop_slices,
        neuron=config.neuron,
        dt_ms=dt_ms,
        seed=seed,
        syn_indptr=indptr,
        syn_targets=targets,
        syn_weights=weights,
        syn_delays=delays.astype(np.int16),
        run_ptr=run_ptr,
        run_offsets=run_offsets.astype(np.int64),
        run_delays=run_delays,
        ext_mode=ext_mode,
        ext_indegree=ext_indegree,
        ext_rate_hz=config.external.rate_per_input_hz,
        ext_weight_pa=config.external.weight_pa,
        ext_dc_pa=ext_dc,
        dc_comp_pa=np.repeat(dc_comp_pop, sizes),
        positions_um=place_neurons(config, stream(seed, TAG_POSITIONS)),
    )


# ---------------------------------------------------------------------------
# binary adjacency dump
#
# Layout (little-endian):
#   magic   b"MCNET01\n"
#   uvarint n_neurons
#   uvarint n_synapses
#   per source, in id order:
#     uvarint out_degree
#     out_degree x (uvarint target, float32 weight, uvarint delay_steps)
# uvarint = LEB128 (7 data bits per byte, high bit = continuation).

_MAGIC = b"MCNET01\n"


def _write_uvarint(buf: bytearray, value: int):
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.append(byte | 0x80)
        else:
            buf.append(byte)
            return


def _read_uvarint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def dump_network(instance: NetworkInstance, path):
    """Write the adjacency structure as a binary audit dump."""
    buf = bytearray(_MAGIC)
    _write_uvarint(buf, instance.n_neurons)
    _write_uvarint(buf, instance.n_synapses)
    indptr = instance.syn_indptr
    targets = instance.syn_targets
    weights = instance.syn_weights
    delays = instance.syn_delays
    pack = struct.pack
    for s in range(instance.n_neurons):
        lo, hi = int(indptr[s]), int(indptr[s + 1])
        _write_uvarint(buf, hi - lo)
        for idx in range(lo, hi):
            _write_uvarint(buf, int(targets[idx]))
            buf += pack("<f", float(weights[idx]))
            _write_uvarint(buf, int(delays[idx]))
    with open(path, "wb") as f:
        f.write(buf)


def load_network_dump(path) -> dict:
    """Parse a dump back into arrays (for audits and round-trip tests)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a network dump (bad magic)")
    pos = len(_MAGIC)
    n_neurons, pos = _read_uvarint(data, pos)
    n_synapses, pos = _read_uvarint(data, pos)
    indptr = np.zeros(n_neurons + 1, dtype=np.int64)
    targets = np.empty(n_synapses, dtype=np.int32)
    weights = np.empty(n_synapses, dtype=np.float32)
    delays = np.empty(n_synapses, dtype=np.int32)
    k = 0
    for s in range(n_neurons):
        degree, pos = _read_uvarint(data, pos)
        indptr[s + 1] = indptr[s] + degree
        for _ in range(degree):
            targets[k], pos = _read_uvarint(data, pos)
            weights[k] = struct.unpack_from("<f", data, pos)[0]
            pos += 4
            delays[k], pos = _read_uvarint(data, pos)
            k += 1
    return {"n_neurons": n_neurons, "indptr": indptr, "targets": targets,
            "weights": weights, "delays": delays}
