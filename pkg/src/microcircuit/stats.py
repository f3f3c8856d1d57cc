"""Spike-train statistics: rate, irregularity, synchrony, and sampling.

Irregularity is the coefficient of variation of a neuron's interspike
intervals (population standard deviation over mean), averaged over
sampled neurons with at least two spikes.  Synchrony is the Fano factor
of the pooled spike-count histogram at 3 ms resolution: variance of the
bin counts over their mean.  Both are ~1 for independent Poisson firing.

Synchrony depends strongly on how many neurons enter the pool, so a
report always carries its SamplingPlan: a fixed fraction of every
population (e.g. 8000 total), a fixed count per population, or all
neurons.  Everything here is a pure function of (record, plan).
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._streams import TAG_SAMPLING, stream

SYNCHRONY_BIN_MS = 3.0

STRATEGIES = ("fixed_fraction_total", "fixed_per_population", "all")


@dataclass(frozen=True)
class SamplingPlan:
    """Which neurons per population enter the statistics."""

    strategy: str
    n: int | None = None
    clamp: bool = False     # fixed_per_population: take min(n, size) instead of failing
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.strategy!r}")
        if self.strategy != "all" and (self.n is None or self.n <= 0):
            raise ValueError(f"strategy {self.strategy} needs a positive n")

    @classmethod
    def fraction_total(cls, n_total: int, seed: int = 0) -> "SamplingPlan":
        """Fixed fraction of each population, ~n_total neurons overall."""
        return cls("fixed_fraction_total", n=n_total, seed=seed)

    @classmethod
    def per_population(cls, n: int, clamp: bool = False,
                       seed: int = 0) -> "SamplingPlan":
        return cls("fixed_per_population", n=n, clamp=clamp, seed=seed)

    @classmethod
    def everything(cls) -> "SamplingPlan":
        return cls("all")

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "n": self.n, "clamp": self.clamp,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingPlan":
        return cls(strategy=data["strategy"], n=data.get("n"),
                   clamp=bool(data.get("clamp", False)),
                   seed=int(data.get("seed", 0)))


def resolve_counts(plan: SamplingPlan, sizes, labels=None) -> np.ndarray:
    """Per-population sample sizes implied by the plan."""
    sizes = np.asarray(sizes, dtype=np.int64)
    if plan.strategy == "all":
        return sizes.copy()
    if plan.strategy == "fixed_fraction_total":
        counts = np.rint(plan.n * sizes / sizes.sum()).astype(np.int64)
        return np.minimum(counts, sizes)
    counts = np.full(len(sizes), plan.n, dtype=np.int64)
    over = counts > sizes
    if over.any():
        if not plan.clamp:
            idx = int(np.flatnonzero(over)[0])
            name = labels[idx] if labels else f"population {idx}"
            raise ValueError(f"sampling plan requests {plan.n} neurons from "
                             f"{name}, which has only {int(sizes[idx])}")
        counts = np.minimum(counts, sizes)
    return counts


def resolve_sampling(plan: SamplingPlan, sizes, starts=None,
                     labels=None) -> list[np.ndarray]:
    """Sorted global-id sample per population, deterministic under plan.seed.

    `starts` are the global id offsets of the populations (default:
    contiguous layout, cumulative over sizes).
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    if starts is None:
        starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    counts = resolve_counts(plan, sizes, labels)
    out = []
    for p, (size, count) in enumerate(zip(sizes, counts)):
        if count >= size:
            local = np.arange(size, dtype=np.int64)
        else:
            rng = stream(plan.seed, TAG_SAMPLING, p)
            local = np.sort(rng.choice(size, int(count), replace=False))
        out.append((local + int(starts[p])).astype(np.int32))
    return out


def _window(record, transient_ms=None, window_ms=None) -> tuple[float, float]:
    t0 = record.transient_ms if transient_ms is None else transient_ms
    t1 = record.duration_ms
    if window_ms is not None:
        t1 = min(t1, t0 + window_ms)
    return t0, t1


def _select(record, ids, t0: float, t1: float):
    member = np.zeros(record.n_neurons, dtype=bool)
    member[ids] = True
    keep = member[record.ids] & (record.times_ms > t0) & (record.times_ms <= t1)
    return record.times_ms[keep], record.ids[keep]


def mean_rate(record, ids, duration_ms=None, transient_ms=None) -> float:
    """Mean single-unit rate (Hz) of the id set over (transient, duration]."""
    ids = np.asarray(ids)
    if ids.size == 0:
        return math.nan
    t0 = record.transient_ms if transient_ms is None else transient_ms
    t1 = record.duration_ms if duration_ms is None else duration_ms
    times, _ = _select(record, ids, t0, t1)
    return times.size / (ids.size * (t1 - t0) * 1e-3)


def cv_isi(record, ids, transient_ms=None) -> float:
    """Mean coefficient of variation of per-neuron interspike intervals.

    Neurons with fewer than two spikes are excluded; returns NaN when no
    neuron qualifies ("absent", not zero).
    """
    t0, t1 = _window(record, transient_ms)
    times, eids = _select(record, np.asarray(ids), t0, t1)
    if times.size == 0:
        return math.nan
    order = np.argsort(eids, kind="stable")  # times stay ascending per neuron
    eids = eids[order]
    times = times[order]
    group_starts = np.concatenate(([0], np.flatnonzero(eids[1:] != eids[:-1]) + 1))
    counts = np.diff(np.concatenate((group_starts, [eids.size])))
    qualified = counts >= 2
    if not qualified.any():
        return math.nan
    # gap j connects events j and j+1; gaps crossing neurons are masked out,
    # and a zero sentinel keeps reduceat segments in range
    raw_gaps = np.diff(times)
    same = eids[1:] == eids[:-1]
    isi_sum = np.add.reduceat(np.append(raw_gaps * same, 0.0), group_starts)
    n_isi = np.maximum(counts - 1, 1)
    mean = isi_sum / n_isi
    # two-pass (centered) variance; the textbook E[x^2]-E[x]^2 form cancels
    # catastrophically for near-periodic trains
    gap_group = np.searchsorted(group_starts, np.arange(raw_gaps.size),
                                side="right") - 1
    centered = (raw_gaps - mean[gap_group]) * same
    sq_sum = np.add.reduceat(np.append(centered ** 2, 0.0), group_starts)
    var = sq_sum[qualified] / n_isi[qualified]
    return float(np.mean(np.sqrt(var) / mean[qualified]))


def synchrony(record, ids, bin_ms: float = SYNCHRONY_BIN_MS,
              transient_ms=None, window_ms=None) -> float:
    """Fano factor of the pooled spike-count histogram of the id set.

    Counts are taken in full `bin_ms` bins over the analysis window;
    returns NaN when the pool has no spikes.
    """
    t0, t1 = _window(record, transient_ms, window_ms)
    times, _ = _select(record, np.asarray(ids), t0, t1)
    n_bins = int((t1 - t0) // bin_ms)
    if times.size == 0 or n_bins == 0:
        return math.nan
    idx = ((times - t0) / bin_ms).astype(np.int64)
    idx = idx[idx < n_bins]
    counts = np.bincount(idx, minlength=n_bins)
    mean = counts.mean()
    if mean == 0:
        return math.nan
    return float(counts.var() / mean)


@dataclass
class StatsReport:
    """Per-population rate / irregularity / synchrony with full metadata."""

    labels: tuple
    n_sampled: np.ndarray
    rate_hz: np.ndarray
    irregularity: np.ndarray
    synchrony: np.ndarray
    duration_ms: float
    transient_ms: float
    bin_ms: float
    sync_window_ms: float | None
    plan: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(values):
            return [None if math.isnan(v) else float(v) for v in values]
        return {
            "populations": list(self.labels),
            "n_sampled": [int(v) for v in self.n_sampled],
            "rate_hz": clean(self.rate_hz),
            "irregularity_cv_isi": clean(self.irregularity),
            "synchrony": clean(self.synchrony),
            "duration_ms": self.duration_ms,
            "transient_ms": self.transient_ms,
            "bin_ms": self.bin_ms,
            "sync_window_ms": self.sync_window_ms,
            "sampling": self.plan,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["population", "n_sampled", "rate_hz",
                         "irregularity_cv_isi", "synchrony"])
        for i, label in enumerate(self.labels):
            row = [label, int(self.n_sampled[i])]
            for values in (self.rate_hz, self.irregularity, self.synchrony):
                v = values[i]
                row.append("" if math.isnan(v) else f"{v:.6g}")
            writer.writerow(row)
        return buf.getvalue()


def report(record, plan: SamplingPlan, bin_ms: float = SYNCHRONY_BIN_MS,
           transient_ms=None, sync_window_ms=None) -> StatsReport:
    """Compose the three statistics over one record and sampling plan."""
    sizes = np.array([stop - start for start, stop in record.pop_slices],
                     dtype=np.int64)
    starts = np.array([start for start, _ in record.pop_slices], dtype=np.int64)
    samples = resolve_sampling(plan, sizes, starts, record.labels)
    t0 = record.transient_ms if transient_ms is None else transient_ms
    n_pop = len(record.labels)
    rates = np.full(n_pop, math.nan)
    cvs = np.full(n_pop, math.nan)
    syncs = np.full(n_pop, math.nan)
    for p, ids in enumerate(samples):
        if ids.size == 0:
            continue
        rates[p] = mean_rate(record, ids, transient_ms=t0)
        cvs[p] = cv_isi(record, ids, transient_ms=t0)
        syncs[p] = synchrony(record, ids, bin_ms=bin_ms, transient_ms=t0,
                             window_ms=sync_window_ms)
    return StatsReport(
        labels=record.labels,
        n_sampled=np.array([ids.size for ids in samples], dtype=np.int64),
        rate_hz=rates,
        irregularity=cvs,
        synchrony=syncs,
        duration_ms=record.duration_ms,
        transient_ms=t0,
        bin_ms=bin_ms,
        sync_window_ms=sync_window_ms,
        plan=plan.to_dict(),
    )
