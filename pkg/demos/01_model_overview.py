"""Tour of the full-scale model parameterization.

The canonical configuration describes eight populations (excitatory and
inhibitory pairs for layers 2/3, 4, 5 and 6) totalling 77,169 neurons,
connected by 55 nonzero probability rules realized as exact synapse
totals, plus per-population Poisson background.  This script prints the
headline numbers and renders the connectivity maps.

Run:  python demos/01_model_overview.py        (writes PNGs next to it)
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from microcircuit import canonical_config, synapse_count_matrix

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

config = canonical_config()

print(f"populations ({config.total_neurons} neurons):")
for pop in config.populations:
    print(f"  {pop.name}: {pop.size:6d} cells, "
          f"{pop.ext_indegree_balanced} background inputs, "
          f"depth {pop.depth_range_um[0]:7.1f}-{pop.depth_range_um[1]:7.1f} um")

counts = synapse_count_matrix(config)
print(f"\ntotal synapses (exact counts): {counts.sum():,}")
indegree = counts / config.sizes[:, None]
print("in-degree matrix (rows = target population):")
for i, label in enumerate(config.labels):
    print(f"  {label}: " + " ".join(f"{indegree[i, j]:7.1f}" for j in range(8)))

fig, axes = plt.subplots(1, 2, figsize=(11, 4.2))
for ax, matrix, title in [
        (axes[0], config.connectivity.probability, "connection probability"),
        (axes[1], indegree, "in-degree (synapses per target cell)")]:
    im = ax.imshow(matrix, cmap="viridis")
    ax.set_xticks(range(8), config.labels, rotation=45)
    ax.set_yticks(range(8), config.labels)
    ax.set_xlabel("source")
    ax.set_ylabel("target")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.85)
fig.tight_layout()
fig.savefig(OUT / "01_connectivity.png", dpi=150)
print(f"\nwrote {OUT / '01_connectivity.png'}")
