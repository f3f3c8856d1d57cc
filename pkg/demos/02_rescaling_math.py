"""The single-parameter rescaling, audited step by step.

One factor k shrinks neuron counts and external in-degrees (x k), pair
synapse totals (x k^2), boosts weights (x 1/sqrt(k)), and adds a DC
current worth the lost mean input.  This script tabulates the transform
over a range of k and verifies the two load-bearing properties:

  * connection probabilities are preserved up to integer truncation,
  * the analytic mean input per neuron is the same at every k.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from microcircuit import (analytic_mean_input_pa, apply_transform,
                          canonical_config)

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

config = canonical_config()
scales = ["1", "0.8", "0.6", "0.5", "0.4", "0.3", "0.2", "0.1", "0.05",
          "0.02", "0.01"]

print("scale   neurons      synapses  weight_x   dc[L2e] pA  dc[L5e] pA")
rows = []
for k in scales:
    _, tr = apply_transform(config, k)
    rows.append((float(k), tr.total_neurons, tr.total_synapses,
                 tr.weight_factor, tr.dc_compensation_pa[0],
                 tr.dc_compensation_pa[4]))
    print(f"{k:>5}  {tr.total_neurons:8d}  {tr.total_synapses:12,}  "
          f"{tr.weight_factor:7.3f}  {tr.dc_compensation_pa[0]:10.2f}  "
          f"{tr.dc_compensation_pa[4]:10.2f}")

full = analytic_mean_input_pa(config, 1)
worst = max(float(np.max(np.abs(analytic_mean_input_pa(config, k) - full)
                         / np.abs(full))) for k in scales)
print(f"\nmean-input conservation: max relative deviation {worst:.2e} "
      "(analytic, all scales)")

rows = np.array(rows)
fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
axes[0].loglog(rows[:, 0], rows[:, 1], "o-", label="neurons")
axes[0].loglog(rows[:, 0], rows[:, 2], "s-", label="synapses")
axes[0].set_xlabel("scale factor k")
axes[0].legend()
axes[0].set_title("network size")
axes[1].semilogx(rows[:, 0], rows[:, 3], "o-")
axes[1].set_xlabel("scale factor k")
axes[1].set_title(r"weight factor $1/\sqrt{k}$")
axes[2].semilogx(rows[:, 0], rows[:, 4], "o-", label="L2e")
axes[2].semilogx(rows[:, 0], rows[:, 5], "s-", label="L5e")
axes[2].set_xlabel("scale factor k")
axes[2].set_ylabel("compensation current (pA)")
axes[2].legend()
axes[2].set_title("DC compensation")
fig.tight_layout()
fig.savefig(OUT / "02_rescaling.png", dpi=150)
print(f"wrote {OUT / '02_rescaling.png'}")
