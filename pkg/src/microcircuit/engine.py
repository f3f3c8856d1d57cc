"""Clock-driven LIF simulation with exact integration.

The membrane/synapse system is linear,

    tau_m dV/dt = -(V - V_rest) + R * (I_syn + I_dc),   R = tau_m / C_m
    tau_syn dI_syn/dt = -I_syn,

so one step of width dt is advanced with closed-form propagators rather
than a numerical scheme; for piecewise-constant input the state is exact
to machine precision at every grid point.  Spikes are constrained to the
grid: a neuron crossing threshold at the end of a step fires, is reset,
and stays clamped at V_reset for t_ref.  Presynaptic spikes are queued
in a per-delay ring of buckets and folded into I_syn on arrival.

Parallelism is bulk-synchronous: within a step, worker threads advance
disjoint neuron ranges; spike exchange, background sampling and
recording happen between steps on the main thread.  All accumulation
orders are fixed, so the spike output is a pure function of
(network, duration, dt, seed) for any worker count.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from ._streams import TAG_BACKGROUND, TAG_MEMBRANE_INIT, stream
from .build import mean_current_pa


class ExactPropagator:
    """Per-step propagators of the membrane/synapse system.

    alpha decays I_syn, beta decays (V - V_rest), p_vi maps the current
    I_syn onto the next membrane potential, dc_gain = R*(1 - beta) maps a
    constant current onto its per-step membrane contribution.
    """

    def __init__(self, neuron, dt_ms: float):
        if neuron.tau_m_ms == neuron.tau_syn_ms:
            raise ValueError("tau_m == tau_syn: propagator is degenerate; "
                             "use distinct time constants")
        if dt_ms <= 0:
            raise ValueError("dt must be > 0")
        self.neuron = neuron
        self.dt_ms = dt_ms
        r = neuron.r_mohm_gohm  # GOhm; pA * GOhm = mV
        self.alpha = math.exp(-dt_ms / neuron.tau_syn_ms)
        self.beta = math.exp(-dt_ms / neuron.tau_m_ms)
        self.p_vi = (r * neuron.tau_syn_ms / (neuron.tau_m_ms - neuron.tau_syn_ms)
                     * (self.beta - self.alpha))
        self.dc_gain = r * (1.0 - self.beta)
        self.ref_steps = int(round(neuron.t_ref_ms / dt_ms))

    def step(self, v, i_syn, dc=0.0):
        """Advance (V, I_syn) by one dt under constant current dc.

        Arrival increments are added to I_syn by the caller afterwards.
        Subthreshold dynamics only; no spike/reset handling.
        """
        nm = self.neuron
        v_next = (nm.v_rest_mv + self.beta * (v - nm.v_rest_mv)
                  + self.p_vi * i_syn + self.dc_gain * dc)
        return v_next, self.alpha * i_syn


def init_membrane(neuron, n: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian initial potentials (no clipping)."""
    return rng.normal(neuron.v_init_mean_mv, neuron.v_init_sd_mv, n)


def poisson_drive(indegree: int, rate_hz: float, weight_pa: float, dt_ms: float,
                  rng: np.random.Generator, steps: int = 1) -> np.ndarray:
    """Per-step current increments from `indegree` independent Poisson trains.

    The superposition is sampled as one Poisson count per step
    (statistically identical to indegree separate generators).
    """
    if indegree < 0:
        raise ValueError("in-degree must be >= 0")
    lam = indegree * rate_hz * dt_ms * 1e-3
    return weight_pa * rng.poisson(lam, size=steps).astype(float)


def dc_drive_equivalent(indegree: int, rate_hz: float, weight_pa: float,
                        tau_syn_ms: float) -> float:
    """DC current with the same mean as the corresponding Poisson drive."""
    return mean_current_pa(indegree, rate_hz, weight_pa, tau_syn_ms)


class _PoissonBackground:
    """Pooled background sampler.

    Instead of one Poisson count per neuron per step, draws the total
    arrival count of each equal-in-degree group and scatters it uniformly
    over the group's neurons.  By Poisson splitting this is exactly the
    same process, at a fraction of the sampling cost.  All draws come
    from one stream keyed by (seed, background tag), in step order, so
    the drive is independent of how neuron updates are partitioned.
    """

    def __init__(self, indegree, rate_hz, dt_ms, rng):
        self._rng = rng
        self._groups = []
        for value in np.unique(indegree):
            if value <= 0:
                continue
            members = np.flatnonzero(indegree == value).astype(np.int32)
            lam = members.size * float(value) * rate_hz * dt_ms * 1e-3
            self._groups.append((lam, members))

    @property
    def active(self) -> bool:
        return bool(self._groups)

    def arrivals(self) -> np.ndarray:
        """Target ids of this step's background spikes (one entry per spike)."""
        rng = self._rng
        parts = []
        for lam, members in self._groups:
            count = rng.poisson(lam)
            if count:
                parts.append(members[rng.integers(0, members.size, count)])
        if not parts:
            return np.empty(0, dtype=np.int32)
        return np.concatenate(parts)


class _SpikeSink:
    """Accumulates (time, id) events; spills to disk above a threshold."""

    _DTYPE = np.dtype([("t", "<f8"), ("id", "<i4")])

    def __init__(self, max_events_in_memory: int, spool_dir=None):
        self._limit = max_events_in_memory
        self._spool_dir = spool_dir
        self._chunks_t = []
        self._chunks_i = []
        self._in_memory = 0
        self._spool = None
        self._spooled = 0

    def append(self, t: float, ids: np.ndarray):
        self._chunks_t.append(np.full(ids.size, t))
        self._chunks_i.append(np.asarray(ids, dtype=np.int32))
        self._in_memory += ids.size
        if self._in_memory > self._limit:
            self._flush()

    def _flush(self):
        if self._spool is None:
            fd, path = tempfile.mkstemp(suffix=".spikes", dir=self._spool_dir)
            self._spool = (os.fdopen(fd, "wb"), path)
        rec = np.empty(self._in_memory, dtype=self._DTYPE)
        rec["t"] = np.concatenate(self._chunks_t)
        rec["id"] = np.concatenate(self._chunks_i)
        rec.tofile(self._spool[0])
        self._spooled += self._in_memory
        self._chunks_t.clear()
        self._chunks_i.clear()
        self._in_memory = 0

    def finalize(self) -> tuple[np.ndarray, np.ndarray]:
        if self._spool is not None:
            self._flush()
            handle, path = self._spool
            handle.close()
            rec = np.fromfile(path, dtype=self._DTYPE)
            os.unlink(path)
            return rec["t"].copy(), rec["id"].copy()
        if not self._chunks_t:
            return np.empty(0), np.empty(0, dtype=np.int32)
        return np.concatenate(self._chunks_t), np.concatenate(self._chunks_i)


@dataclass
class SpikeRecord:
    """Time-ordered spike events plus the population index of the run.

    The first `transient_ms` of activity are recorded but flagged, so
    statistics exclude them by default.
    """

    times_ms: np.ndarray
    ids: np.ndarray
    n_neurons: int
    labels: tuple
    pop_slices: tuple
    duration_ms: float
    dt_ms: float
    transient_ms: float

    @property
    def n_events(self) -> int:
        return len(self.times_ms)

    def population_ids(self, label) -> np.ndarray:
        start, stop = self.pop_slices[self.labels.index(label)]
        return np.arange(start, stop, dtype=np.int32)

    def meta_dict(self) -> dict:
        return {
            "n_neurons": self.n_neurons,
            "labels": list(self.labels),
            "pop_slices": [list(s) for s in self.pop_slices],
            "duration_ms": self.duration_ms,
            "dt_ms": self.dt_ms,
            "transient_ms": self.transient_ms,
        }

    @staticmethod
    def _time_decimals(dt_ms: float) -> int:
        exponent = Decimal(str(dt_ms)).normalize().as_tuple().exponent
        return max(1, -int(exponent))

    def write_text(self, path):
        """One event per line, "time_ms<TAB>neuron_id", sorted by time."""
        dec = self._time_decimals(self.dt_ms)
        fmt = f"%.{dec}f\t%d\n"
        with open(path, "w") as f:
            chunk = 1 << 20
            for k in range(0, self.n_events, chunk):
                t = self.times_ms[k:k + chunk].tolist()
                i = self.ids[k:k + chunk].tolist()
                f.writelines(fmt % pair for pair in zip(t, i))

    def write_npz(self, path):
        np.savez_compressed(path, times_ms=self.times_ms, ids=self.ids,
                            meta=json.dumps(self.meta_dict()))

    @classmethod
    def from_meta(cls, times_ms, ids, meta: dict) -> "SpikeRecord":
        return cls(
            times_ms=np.asarray(times_ms, dtype=float),
            ids=np.asarray(ids, dtype=np.int32),
            n_neurons=int(meta["n_neurons"]),
            labels=tuple(meta["labels"]),
            pop_slices=tuple((int(a), int(b)) for a, b in meta["pop_slices"]),
            duration_ms=float(meta["duration_ms"]),
            dt_ms=float(meta["dt_ms"]),
            transient_ms=float(meta["transient_ms"]),
        )

    @classmethod
    def read_npz(cls, path) -> "SpikeRecord":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            return cls.from_meta(data["times_ms"], data["ids"], meta)

    @classmethod
    def read_text(cls, path, meta: dict) -> "SpikeRecord":
        raw = np.loadtxt(path, delimiter="\t", ndmin=2)
        if raw.size == 0:
            raw = raw.reshape(0, 2)
        return cls.from_meta(raw[:, 0], raw[:, 1].astype(np.int32), meta)


def run(network, duration_ms: float, dt_ms: float = None, seed: int = 0,
        transient_ms: float = 100.0, workers: int = 1,
        max_events_in_memory: int = 20_000_000, spool_dir=None) -> SpikeRecord:
    """Simulate a NetworkInstance and return its SpikeRecord.

    dt is fixed at network build time (delays are already gridded); a
    dt_ms argument is accepted only as a consistency check.  The output
    is bit-identical for any `workers` value.
    """
    if dt_ms is not None and dt_ms != network.dt_ms:
        raise ValueError(f"dt {dt_ms} differs from the network's build dt "
                         f"{network.dt_ms}; rebuild the network to change dt")
    dt = network.dt_ms
    if duration_ms <= transient_ms:
        raise ValueError(f"duration {duration_ms} ms must exceed the "
                         f"transient ({transient_ms} ms)")
    if network.syn_delays.size and network.syn_delays.min() < 1:
        raise ValueError("synaptic delays must be at least one step")
    n = network.n_neurons
    n_steps = int(round(duration_ms / dt))

    def _record(times, ids):
        return SpikeRecord(times_ms=times, ids=ids, n_neurons=n,
                           labels=network.labels, pop_slices=network.pop_slices,
                           duration_ms=duration_ms, dt_ms=dt,
                           transient_ms=transient_ms)

    if n == 0:
        return _record(np.empty(0), np.empty(0, dtype=np.int32))

    prop = ExactPropagator(network.neuron, dt)
    nm = network.neuron
    alpha, beta, p_vi = prop.alpha, prop.beta, prop.p_vi
    theta, v_reset = nm.v_theta_mv, nm.v_reset_mv
    ref_steps = prop.ref_steps

    v = init_membrane(nm, n, stream(seed, TAG_MEMBRANE_INIT))
    i_syn = np.zeros(n)
    refr = np.zeros(n, dtype=np.int32)
    scratch = np.empty(n)
    scratch2 = np.empty(n)
    # Constant per-step membrane drive: v_rest plus the DC propagator
    # applied to (external DC + rescaling compensation).
    a_const = nm.v_rest_mv + prop.dc_gain * (network.ext_dc_pa
                                             + network.dc_comp_pa)

    background = None
    if network.ext_mode in ("poisson_balanced", "poisson_unbalanced"):
        background = _PoissonBackground(network.ext_indegree,
                                        network.ext_rate_hz, dt,
                                        stream(seed, TAG_BACKGROUND))
        if not background.active:
            background = None
    w_ext = float(network.ext_weight_pa)
    w_ext_buf = np.full(1024, w_ext)

    ring_len = network.max_delay_steps + 1
    bucket_t = [[] for _ in range(ring_len)]
    bucket_w = [[] for _ in range(ring_len)]

    targets = network.syn_targets
    weights = network.syn_weights
    run_ptr = network.run_ptr
    run_offsets = network.run_offsets
    run_delays = network.run_delays

    deliv = None

    def advance(lo, hi):
        vv = v[lo:hi]
        ii = i_syn[lo:hi]
        sc = scratch[lo:hi]
        sc2 = scratch2[lo:hi]
        # V(t+dt) = v_rest + beta*(V - v_rest) + p_vi*I_syn + dc_gain*dc
        np.subtract(vv, nm.v_rest_mv, out=sc)
        sc *= beta
        np.multiply(ii, p_vi, out=sc2)
        sc += sc2
        sc += a_const[lo:hi]
        vv[:] = sc
        # I_syn(t+dt) = alpha*I_syn + arrivals(t+dt)
        ii *= alpha
        if deliv is not None:
            ii += deliv[lo:hi]
        rr = refr[lo:hi]
        clamped = rr > 0
        if clamped.any():
            vv[clamped] = v_reset
            rr[clamped] -= 1
        fired = np.nonzero(vv >= theta)[0]
        if fired.size:
            vv[fired] = v_reset
            rr[fired] = ref_steps
            fired = fired + lo
        return fired

    pool = None
    bounds = [(0, n)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        edges = np.linspace(0, n, min(workers, n) + 1).astype(int)
        bounds = [(int(edges[i]), int(edges[i + 1]))
                  for i in range(len(edges) - 1) if edges[i] < edges[i + 1]]
        if len(bounds) > 1:
            pool = ThreadPoolExecutor(max_workers=len(bounds))

    sink = _SpikeSink(max_events_in_memory, spool_dir)
    try:
        for step_idx in range(n_steps):
            slot = (step_idx + 1) % ring_len
            t_parts = bucket_t[slot]
            w_parts = bucket_w[slot]
            bucket_t[slot] = []
            bucket_w[slot] = []
            if background is not None:
                pos = background.arrivals()
                if pos.size:
                    if pos.size > w_ext_buf.size:
                        w_ext_buf = np.full(pos.size, w_ext)
                    t_parts.append(pos)
                    w_parts.append(w_ext_buf[:pos.size])
            if t_parts:
                deliv = np.bincount(np.concatenate(t_parts),
                                    weights=np.concatenate(w_parts),
                                    minlength=n)
            else:
                deliv = None

            if pool is None:
                spikes = advance(0, n)
            else:
                parts = list(pool.map(lambda b: advance(*b), bounds))
                spikes = np.concatenate(parts) if len(parts) > 1 else parts[0]

            if spikes.size:
                sink.append((step_idx + 1) * dt, spikes)
                for s in spikes.tolist():
                    for r in range(run_ptr[s], run_ptr[s + 1]):
                        b = (step_idx + 1 + run_delays[r]) % ring_len
                        lo_r, hi_r = run_offsets[r], run_offsets[r + 1]
                        bucket_t[b].append(targets[lo_r:hi_r])
                        bucket_w[b].append(weights[lo_r:hi_r])
    finally:
        if pool is not None:
            pool.shutdown()

    times, ids = sink.finalize()
    return _record(times, ids)
