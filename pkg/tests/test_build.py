import math

import numpy as np
import pytest
from scipy import stats as sps

from microcircuit import (apply_transform, build, dump_network,
                          exact_synapse_count, load_network_dump,
                          synapse_count_matrix)
from microcircuit.build import draw_synapses, draw_weight_delay, place_neurons
from microcircuit.params import ConnectionSpec


class TestExactSynapseCount:
    def test_zero_probability(self):
        assert exact_synapse_count(0.0, 100, 100) == 0

    def test_small_network_example(self):
        # ln(0.5)/ln(0.75) = 2.409 -> 2
        assert exact_synapse_count(0.5, 2, 2) == 2

    def test_rejects_p_one_and_negative(self):
        with pytest.raises(ValueError):
            exact_synapse_count(1.0, 10, 10)
        with pytest.raises(ValueError):
            exact_synapse_count(-0.1, 10, 10)
        with pytest.raises(ValueError):
            exact_synapse_count(0.5, 0, 10)

    def test_first_order_expansion(self):
        # for small p and large N*N the count approaches p*N_pre*N_post;
        # the leading correction (multapses) is p/2 relative, plus at most
        # half a count of integer rounding
        for p in (0.001, 0.005, 0.01):
            for n in (1000, 4000):
                m = n * n
                c = exact_synapse_count(p, n, n)
                bound = p / 2 + p ** 2 + 0.5 / (p * m)
                assert abs(c - p * m) / (p * m) <= bound
                assert bound < 0.006  # ~0.5% for p <= 0.01, N*N >= 1e6

    def test_monte_carlo_connection_probability(self):
        # drawing C synapses with replacement must connect a fraction ~p of
        # ordered pairs; C is large enough here that integer rounding is
        # negligible
        rng = np.random.default_rng(7)
        n_pre = n_post = 50
        p = 0.3
        c = exact_synapse_count(p, n_pre, n_post)
        trials = 400
        connected = np.zeros(trials)
        for t in range(trials):
            src = rng.integers(0, n_pre, c)
            tgt = rng.integers(0, n_post, c)
            connected[t] = len(set(zip(src.tolist(), tgt.tolist())))
        frac = connected.mean() / (n_pre * n_post)
        # analytic fraction for the rounded C
        expected = 1.0 - (1.0 - 1.0 / (n_pre * n_post)) ** c
        assert abs(expected - p) < 5e-4
        assert abs(frac - expected) < 3 * connected.std() / math.sqrt(trials) / (n_pre * n_post) + 1e-3

    def test_matrix_shape_and_symmetry_of_zero(self, canonical):
        counts = synapse_count_matrix(canonical)
        assert counts.shape == (8, 8)
        assert np.all((counts == 0) == (canonical.connectivity.probability == 0))


class TestDrawSynapses:
    def test_zero_count(self):
        rng = np.random.default_rng(0)
        src, tgt = draw_synapses(0, (0, 10), (10, 20), rng)
        assert src.size == 0 and tgt.size == 0

    def test_exact_count_and_ranges(self):
        rng = np.random.default_rng(0)
        src, tgt = draw_synapses(5000, (0, 100), (100, 300), rng)
        assert src.size == 5000 and tgt.size == 5000
        assert src.min() >= 0 and src.max() < 100
        assert tgt.min() >= 100 and tgt.max() < 300

    def test_empty_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            draw_synapses(10, (5, 5), (0, 10), rng)

    def test_determinism(self):
        a = draw_synapses(1000, (0, 50), (0, 50), np.random.default_rng(42))
        b = draw_synapses(1000, (0, 50), (0, 50), np.random.default_rng(42))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_indegree_distribution_binomial(self):
        # per-target in-degree of C=1e6 draws over 1000 targets is
        # Binomial(1e6, 1e-3); chi-square goodness of fit at alpha=0.01
        rng = np.random.default_rng(3)
        c, n = 1_000_000, 1000
        _, tgt = draw_synapses(c, (0, 1000), (0, n), rng)
        indeg = np.bincount(tgt, minlength=n)
        dist = sps.binom(c, 1.0 / n)
        edges = dist.ppf(np.linspace(0.0, 1.0, 21))
        edges[0], edges[-1] = -0.5, c + 0.5
        observed, _ = np.histogram(indeg, bins=edges)
        expected = np.diff(dist.cdf(edges)) * n
        keep = expected > 1
        chi2 = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
        pvalue = sps.chi2.sf(chi2, keep.sum() - 1)
        assert pvalue > 0.01


EXC_RULE = ConnectionSpec(pre="L2e", post="L2e", probability=0.1,
                          weight_mean_pa=87.8, weight_rel_sd=0.1,
                          delay_mean_ms=1.5, delay_rel_sd=0.5)
INH_RULE = ConnectionSpec(pre="L2i", post="L2e", probability=0.1,
                          weight_mean_pa=-351.2, weight_rel_sd=0.1,
                          delay_mean_ms=0.75, delay_rel_sd=0.5)


class TestDrawWeightDelay:
    def test_zero_spread_is_exact(self):
        import dataclasses
        rule = dataclasses.replace(EXC_RULE, weight_rel_sd=0.0, delay_rel_sd=0.0)
        w, d = draw_weight_delay(rule, 100, 0.1, np.random.default_rng(0))
        assert np.all(w == np.float32(87.8))
        assert np.all(d == 15)

    def test_excitatory_statistics(self):
        w, _ = draw_weight_delay(EXC_RULE, 1_000_000, 0.1,
                                 np.random.default_rng(1))
        assert abs(w.mean() - 87.8) / 87.8 < 0.01
        assert w.min() >= 0.0

    def test_inhibitory_clipped_at_zero(self):
        w, _ = draw_weight_delay(INH_RULE, 1_000_000, 0.1,
                                 np.random.default_rng(2))
        assert abs(w.mean() - (-351.2)) / 351.2 < 0.01
        assert w.max() <= 0.0

    def test_delays_at_least_one_step(self):
        _, d = draw_weight_delay(INH_RULE, 1_000_000, 0.1,
                                 np.random.default_rng(3))
        assert d.min() >= 1
        assert abs(d.mean() * 0.1 - 0.75) < 0.02  # clipping shifts mean < 1%


class TestPlaceNeurons:
    def test_inside_cylinder_and_bands(self, canonical):
        scaled, _ = apply_transform(canonical, "0.02")
        pos = place_neurons(scaled, np.random.default_rng(0))
        assert pos.shape == (scaled.total_neurons, 3)
        radius2 = pos[:, 0] ** 2 + pos[:, 2] ** 2
        assert radius2.max() <= 150.0 ** 2 * (1 + 1e-12)
        offset = 0
        for pop in scaled.populations:
            lo, hi = pop.depth_range_um
            y = pos[offset:offset + pop.size, 1]
            assert y.min() >= lo and y.max() <= hi
            offset += pop.size

    def test_depth_uniform_within_band(self, canonical):
        scaled, _ = apply_transform(canonical, "0.1")
        pos = place_neurons(scaled, np.random.default_rng(1))
        offset = 0
        for pop in scaled.populations:
            lo, hi = pop.depth_range_um
            y = pos[offset:offset + pop.size, 1]
            stat = sps.kstest(y, sps.uniform(loc=lo, scale=hi - lo).cdf)
            assert stat.pvalue > 0.01, pop.name
            offset += pop.size


class TestBuild:
    @pytest.fixture(scope="class")
    def small(self, canonical):
        scaled, transform = apply_transform(canonical, "0.02")
        net = build(scaled, transform, seed=11)
        return scaled, transform, net

    def test_neuron_count(self, small):
        scaled, transform, net = small
        assert net.n_neurons == transform.total_neurons == scaled.total_neurons

    def test_exact_pair_counts(self, small):
        _, transform, net = small
        assert np.array_equal(net.pair_synapse_counts(),
                              transform.scaled_pair_synapses)

    def test_memory_bound(self, small):
        _, _, net = small
        assert net.bytes_per_synapse <= 16.0

    def test_deterministic_rebuild(self, small, canonical):
        scaled, transform, net = small
        again = build(scaled, transform, seed=11)
        for attr in ("syn_indptr", "syn_targets", "syn_weights", "syn_delays",
                     "run_ptr", "run_offsets", "run_delays", "positions_um",
                     "ext_indegree", "ext_dc_pa", "dc_comp_pa"):
            assert np.array_equal(getattr(net, attr), getattr(again, attr)), attr

    def test_worker_count_does_not_change_build(self, small):
        scaled, transform, net = small
        par = build(scaled, transform, seed=11, workers=4)
        assert np.array_equal(net.syn_targets, par.syn_targets)
        assert np.array_equal(net.syn_weights, par.syn_weights)
        assert np.array_equal(net.syn_delays, par.syn_delays)

    def test_different_seed_differs(self, small):
        scaled, transform, net = small
        other = build(scaled, transform, seed=12)
        assert not np.array_equal(net.syn_targets, other.syn_targets)

    def test_weight_signs_after_build(self, small):
        _, _, net = small
        src = np.repeat(np.arange(net.n_neurons), np.diff(net.syn_indptr))
        starts = np.array([s for s, _ in net.pop_slices] + [net.n_neurons])
        src_pop = np.searchsorted(starts, src, side="right") - 1
        inhibitory = src_pop % 2 == 1
        assert np.all(net.syn_weights[inhibitory] <= 0.0)
        assert np.all(net.syn_weights[~inhibitory] >= 0.0)
        assert net.syn_delays.min() >= 1

    def test_mismatched_transform_rejected(self, small, canonical):
        _, transform, _ = small
        with pytest.raises(ValueError, match="mismatch"):
            build(canonical, transform, seed=0)

    def test_runs_cover_synapses(self, small):
        _, _, net = small
        # run spans tile the synapse arrays exactly, sorted by delay per source
        assert net.run_offsets[0] == 0
        assert net.run_offsets[-1] == net.n_synapses
        assert np.all(np.diff(net.run_offsets) > 0)
        for s in (0, net.n_neurons // 2, net.n_neurons - 1):
            lo, hi = net.run_ptr[s], net.run_ptr[s + 1]
            d = net.run_delays[lo:hi]
            assert np.all(np.diff(d) > 0)  # strictly increasing delay runs

    def test_dc_mode_fills_equivalent_current(self, canonical):
        scaled, transform = apply_transform(
            canonical.with_mode("dc_balanced"), "0.02")
        net = build(scaled, transform, seed=5)
        # L2e at k=0.02: floor(0.02*1600)=32 inputs,
        # weight 87.8/sqrt(0.02), tau_syn 0.5 ms, 8 Hz
        expected = 32 * 8.0 * (87.8 / math.sqrt(0.02)) * 0.5e-3
        assert net.ext_dc_pa[0] == pytest.approx(expected)
        assert np.all(net.ext_dc_pa > 0)

    def test_poisson_mode_has_zero_dc_drive(self, small):
        _, _, net = small
        assert np.all(net.ext_dc_pa == 0.0)
        assert net.ext_indegree[0] == 32  # floor(0.02 * 1600)


class TestNetworkDump:
    def test_round_trip(self, canonical, tmp_path):
        scaled, transform = apply_transform(canonical, "0.01")
        net = build(scaled, transform, seed=3)
        path = tmp_path / "net.bin"
        dump_network(net, path)
        loaded = load_network_dump(path)
        assert loaded["n_neurons"] == net.n_neurons
        assert np.array_equal(loaded["indptr"], net.syn_indptr)
        assert np.array_equal(loaded["targets"], net.syn_targets)
        assert np.array_equal(loaded["weights"], net.syn_weights)
        assert np.array_equal(loaded["delays"], net.syn_delays)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a dump")
        with pytest.raises(ValueError, match="magic"):
            load_network_dump(path)
