"""Acceptance suite.

Every test here implements one numbered acceptance criterion at its
stated tolerance and prints one PASS/FAIL line (run with -s to see them
live).  The simulation-backed criteria share four 10%- and 30%-scale
runs; the whole module takes on the order of 10-15 minutes.
"""

import math
import time

import numpy as np
import pytest

from microcircuit import (SamplingPlan, analytic_mean_input_pa, apply_transform,
                          build, canonical_config, dc_drive_equivalent,
                          poisson_drive, report, run)
from microcircuit.cli import execute_manifest, _resolve_manifest
from microcircuit.engine import ExactPropagator
from microcircuit.params import NeuronModelSpec
from microcircuit.stats import resolve_counts

SEED = 12345
LABELS = ("L2e", "L2i", "L4e", "L4i", "L5e", "L5i", "L6e", "L6i")

# Reference full-scale excitatory rates: mean +- sd over 100 trials of the
# original implementation.
NEST_BANDS = {"L2e": (1.11, 0.8), "L4e": (4.8, 1.1), "L5e": (11.0, 6.1),
              "L6e": (0.56, 0.9)}
# Reported 10%-scale rates (Poisson input); the L6i column is affected by a
# typo in the source tables and is excluded from band checks.
RATES_10PCT = [0.75, 3.28, 4.76, 6.20, 6.55, 8.97, 1.10]


def _criterion(num: int, ok: bool, detail: str):
    print(f"\ncriterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def _simulate(config, scale, mode, duration_ms):
    scaled, transform = apply_transform(config.with_mode(mode), scale)
    network = build(scaled, transform, seed=SEED)
    return run(network, duration_ms=duration_ms, seed=SEED)


@pytest.fixture(scope="module")
def cfg():
    return canonical_config()


@pytest.fixture(scope="module")
def poisson_k01(cfg):
    return _simulate(cfg, "0.1", "poisson_balanced", 60_000.0)


@pytest.fixture(scope="module")
def dc_k01(cfg):
    return _simulate(cfg, "0.1", "dc_balanced", 60_000.0)


@pytest.fixture(scope="module")
def unbalanced_k01(cfg):
    return _simulate(cfg, "0.1", "poisson_unbalanced", 10_000.0)


@pytest.fixture(scope="module")
def poisson_k03(cfg):
    return _simulate(cfg, "0.3", "poisson_balanced", 60_000.0)


def test_criterion_01_rescaled_totals(cfg):
    t0 = time.perf_counter()
    totals = {k: apply_transform(cfg, k)[1].total_neurons
              for k in ("1", "0.3", "0.1")}
    elapsed = time.perf_counter() - t0
    ok = (totals == {"1": 77169, "0.3": 23147, "0.1": 7713}
          and elapsed < 1.0)
    _criterion(1, ok, f"totals {totals} in {elapsed * 1e3:.0f} ms")


def test_criterion_02_sampling_resolution(cfg):
    t0 = time.perf_counter()
    counts = resolve_counts(SamplingPlan.fraction_total(8000), cfg.sizes)
    elapsed = time.perf_counter() - t0
    expected = [2144, 605, 2272, 568, 503, 110, 1492, 306]
    ok = counts.tolist() == expected and elapsed < 1.0
    _criterion(2, ok, f"fixed_fraction_total(8000) -> {counts.tolist()}")


def test_criterion_03_mean_input_conservation(cfg):
    t0 = time.perf_counter()
    full = analytic_mean_input_pa(cfg, 1)
    worst = 0.0
    for k in ("0.01", "0.02", "0.05", "0.1", "0.2", "0.3", "0.5", "0.8", "1"):
        at_k = analytic_mean_input_pa(cfg, k)
        worst = max(worst, float(np.max(np.abs(at_k - full) / np.abs(full))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and elapsed < 1.0
    _criterion(3, ok, f"max relative deviation {worst:.2e} over k grid")


def test_criterion_04_rates_in_reference_bands(poisson_k01):
    rep = report(poisson_k01, SamplingPlan.fraction_total(8000, seed=SEED))
    rates = rep.rate_hz
    in_nest = all(
        abs(rates[LABELS.index(pop)] - mean) <= sd
        for pop, (mean, sd) in NEST_BANDS.items())
    in_30pct = all(
        abs(rates[i] - ref) <= 0.30 * ref
        for i, ref in enumerate(RATES_10PCT))  # L6i excluded
    ok = in_nest and in_30pct
    _criterion(4, ok, "k=0.1 Poisson 60 s rates "
               f"{np.round(rates, 2).tolist()} (NEST bands: {in_nest}, "
               f"10% row +-30%: {in_30pct})")


def test_criterion_05_rate_ordering(poisson_k01):
    rep = report(poisson_k01, SamplingPlan.fraction_total(8000, seed=SEED))
    r = dict(zip(LABELS, rep.rate_hz))
    ok = r["L5e"] > r["L4e"] > max(r["L2e"], r["L6e"])
    _criterion(5, ok, f"L5e {r['L5e']:.2f} > L4e {r['L4e']:.2f} > "
               f"max(L2e {r['L2e']:.2f}, L6e {r['L6e']:.2f})")


def test_criterion_06_irregularity_band(poisson_k01, poisson_k03):
    plan = SamplingPlan.per_population(1000, clamp=True, seed=SEED)
    cv01 = report(poisson_k01, plan).irregularity
    cv03 = report(poisson_k03, plan).irregularity
    in_band = bool(np.all((cv01 >= 0.75) & (cv01 <= 0.95)))
    rel_dev = np.abs(cv01 - cv03) / cv03
    stable = bool(np.all(rel_dev < 0.05))
    ok = in_band and stable
    _criterion(6, ok, f"CV {np.round(cv01, 3).tolist()} in [0.75, 0.95]: "
               f"{in_band}; max dev vs k=0.3 {rel_dev.max() * 100:.1f}%")


def test_criterion_07_unbalanced_silences_l6e(unbalanced_k01):
    ids = unbalanced_k01.population_ids("L6e")
    from microcircuit import mean_rate
    rate = mean_rate(unbalanced_k01, ids)
    ok = rate < 0.05
    _criterion(7, ok, f"k=0.1 unbalanced Poisson: L6e rate {rate:.4f} Hz")


def test_criterion_08_dc_synchrony_blowup(poisson_k01, dc_k01):
    plan = SamplingPlan.per_population(1000, clamp=True, seed=SEED)
    sync_poisson = report(poisson_k01, plan).synchrony
    sync_dc = report(dc_k01, plan).synchrony
    i2e, i4e = LABELS.index("L2e"), LABELS.index("L4e")
    ok = (sync_dc[i2e] >= 2.0 * sync_poisson[i2e]
          and sync_dc[i4e] >= 2.0 * sync_poisson[i4e])
    _criterion(8, ok, f"k=0.1 dc vs Poisson synchrony: "
               f"L2e {sync_dc[i2e]:.1f} vs {sync_poisson[i2e]:.2f}, "
               f"L4e {sync_dc[i4e]:.1f} vs {sync_poisson[i4e]:.2f}")


def test_criterion_09_sampling_size_effect(poisson_k03):
    rep_all = report(poisson_k03, SamplingPlan.everything())
    rep_frac = report(poisson_k03, SamplingPlan.fraction_total(8000, seed=SEED))
    i2e, i4e = LABELS.index("L2e"), LABELS.index("L4e")
    sync_up = (rep_all.synchrony[i2e] > rep_frac.synchrony[i2e]
               and rep_all.synchrony[i4e] > rep_frac.synchrony[i4e])
    rate_dev = np.abs(rep_all.rate_hz - rep_frac.rate_hz) / rep_all.rate_hz
    rates_agree = bool(np.all(rate_dev < 0.05))
    ok = sync_up and rates_agree
    _criterion(9, ok, f"k=0.3 sync all-vs-8000: L2e "
               f"{rep_all.synchrony[i2e]:.1f}/{rep_frac.synchrony[i2e]:.1f}, "
               f"L4e {rep_all.synchrony[i4e]:.1f}/{rep_frac.synchrony[i4e]:.1f}; "
               f"max rate dev {rate_dev.max() * 100:.1f}%")


def test_criterion_10_engine_oracles():
    nm = NeuronModelSpec(tau_m_ms=10.0, tau_syn_ms=0.5, c_m_pf=250.0,
                         v_rest_mv=-65.0, v_reset_mv=-65.0, v_theta_mv=-50.0,
                         t_ref_ms=2.0, v_init_mean_mv=-65.0, v_init_sd_mv=0.0)
    r = nm.r_mohm_gohm
    # (a) constant-current ISI within one dt of the closed form
    from test_engine import tiny_net
    current = 600.0
    rec = run(tiny_net(1, dc=current, neuron=nm), duration_ms=2000.0,
              transient_ms=0.0, seed=0)
    isis = np.diff(rec.times_ms)
    theory = nm.t_ref_ms + nm.tau_m_ms * math.log(
        (r * current + nm.v_rest_mv - nm.v_reset_mv)
        / (r * current + nm.v_rest_mv - nm.v_theta_mv))
    isi_ok = bool(np.all(np.abs(isis - theory) <= 0.1 + 1e-9))
    # (b) single-PSC trajectory within 1e-6 mV of a 1000x finer integration
    w = 87.8
    coarse, fine = ExactPropagator(nm, 0.1), ExactPropagator(nm, 0.0001)
    v_c, i_c, v_f, i_f = nm.v_rest_mv, 0.0, nm.v_rest_mv, 0.0
    max_err = 0.0
    fine_values = []
    for step in range(100 * 1000):
        v_f, i_f = fine.step(v_f, i_f)
        if step == 999:
            i_f += w
        if (step + 1) % 1000 == 0:
            fine_values.append(v_f)
    for step in range(100):
        v_c, i_c = coarse.step(v_c, i_c)
        if step == 0:
            i_c += w
        max_err = max(max_err, abs(v_c - fine_values[step]))
    psc_ok = max_err < 1e-6
    # (c) Poisson-drive long-run mean current within 1% of K*rate*W*tau_syn
    rng = np.random.default_rng(4)
    inc = poisson_drive(2000, 8.0, w, 0.1, rng, 500_000)
    alpha = math.exp(-0.1 / nm.tau_syn_ms)
    i_syn, integral = 0.0, 0.0
    for value in inc:
        i_syn = i_syn * alpha + value
        integral += i_syn
    mean_current = integral * nm.tau_syn_ms * (1 - alpha) / (inc.size * 0.1)
    expected = dc_drive_equivalent(2000, 8.0, w, nm.tau_syn_ms)
    drive_ok = abs(mean_current - expected) / expected < 0.01
    ok = isi_ok and psc_ok and drive_ok
    _criterion(10, ok, f"ISI within dt: {isi_ok}; PSC max err "
               f"{max_err:.1e} mV; mean drive {mean_current:.1f} vs "
               f"{expected:.1f} pA")


def test_criterion_11_worker_determinism(tmp_path):
    import argparse
    args = argparse.Namespace(
        manifest=None, config=None, scale="0.05", input_mode="poisson-balanced",
        duration=600.0, dt=None, seed=SEED, transient=100.0, sampling=None,
        sync_window=None, spike_format="text", workers=None)
    manifest = _resolve_manifest(args)
    blobs = []
    for workers in (1, 2, 8):
        outdir = tmp_path / f"w{workers}"
        execute_manifest(manifest, outdir, workers=workers, quiet=True)
        blobs.append((outdir / "spikes.txt").read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2] and len(blobs[0]) > 0
    _criterion(11, ok, f"spike files byte-identical across 1/2/8 workers "
               f"({len(blobs[0])} bytes)")


@pytest.mark.skipif("MICROCIRCUIT_FULL_SCALE" not in __import__("os").environ,
                    reason="optional full-scale target: ~10 GB RAM and hours; "
                           "set MICROCIRCUIT_FULL_SCALE=1 to enable")
def test_optional_full_scale_rates(cfg):
    """Not required at desk scale: the k=1, 60 s run with the same band
    test as criterion 4."""
    record = _simulate(cfg, "1", "poisson_balanced", 60_000.0)
    rates = report(record, SamplingPlan.fraction_total(8000, seed=SEED)).rate_hz
    ok = all(abs(rates[LABELS.index(pop)] - mean) <= sd
             for pop, (mean, sd) in NEST_BANDS.items())
    _criterion(0, ok, f"full-scale 60 s rates {np.round(rates, 2).tolist()}")
