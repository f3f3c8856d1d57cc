"""Build, simulate and analyze a downscaled network end to end.

A 5%-scale network (3,854 neurons, ~750k synapses) is simulated for ten
seconds of biological time with balanced Poisson input, then analyzed:
raster plot of a fixed neuron sample, and per-population firing rate,
irregularity (CV of the interspike interval) and synchrony (Fano factor
of the 3 ms binned population spike count).

Takes roughly a minute on a laptop.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from microcircuit import (SamplingPlan, apply_transform, build,
                          canonical_config, report, resolve_sampling, run)

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

SEED = 7
config = canonical_config()
scaled, transform = apply_transform(config, "0.05")
print(f"building: {transform.total_neurons} neurons, "
      f"{transform.total_synapses:,} synapses")
network = build(scaled, transform, seed=SEED)

print("simulating 10 s ...")
record = run(network, duration_ms=10_000.0, seed=SEED)
print(f"recorded {record.n_events:,} spikes")

stats = report(record, SamplingPlan.fraction_total(1000, seed=SEED))
print(stats.to_csv())

# raster of ~400 sampled neurons over 500 ms
sizes = np.array([b - a for a, b in record.pop_slices])
starts = np.array([a for a, _ in record.pop_slices])
sample = np.concatenate(resolve_sampling(
    SamplingPlan.fraction_total(400, seed=SEED), sizes, starts))
member = np.zeros(record.n_neurons, dtype=bool)
member[sample] = True
view = member[record.ids] & (record.times_ms > 500) & (record.times_ms <= 1000)
# compress sampled ids to consecutive rows, preserving depth order
row_of = np.cumsum(member) - 1

fig, axes = plt.subplots(1, 2, figsize=(11, 4), width_ratios=[2, 1])
axes[0].scatter(record.times_ms[view], row_of[record.ids[view]], s=1.5,
                c="black")
for start, stop in record.pop_slices[1:]:
    axes[0].axhline(row_of[start] - 0.5, color="grey", lw=0.4)
axes[0].set_xlabel("time (ms)")
axes[0].set_ylabel("sampled neuron (by population)")
axes[0].invert_yaxis()
axes[0].set_title("raster, 500 ms, 400-neuron sample")

x = np.arange(8)
colors = ["tab:red" if lab.endswith("i") else "tab:blue"
          for lab in record.labels]
axes[1].bar(x, stats.rate_hz, color=colors)
axes[1].set_xticks(x, record.labels, rotation=45)
axes[1].set_ylabel("rate (Hz)")
axes[1].set_title("population rates")
fig.tight_layout()
fig.savefig(OUT / "03_activity.png", dpi=150)
print(f"wrote {OUT / '03_activity.png'}")
