"""DD channel assembly: path sampling, delay/Doppler factors, Kronecker model."""

import numpy as np
import pytest

from mpdd_sim import (ConfigurationError, CpPhaseRule, FrameDims, MimoLink, PathConfig,
                      RisPanel, ZERO_CP_RULE, apply_channel, assemble_hbar, build_g,
                      delay_shift_matrix, doppler_phase_diag, sample_paths,
                      spatial_factor)
from mpdd_sim.rng import spawn_rng

from conftest import td_reference


class TestSamplePaths:
    def test_deterministic(self):
        cfg = PathConfig(num_paths=4, max_delay=9, max_doppler=2.0,
                         num_ris=1, ris_inbound_paths=2, ris_outbound_paths=2)
        a = sample_paths(123, cfg)
        b = sample_paths(123, cfg)
        assert a == b
        assert sample_paths(124, cfg) != a

    def test_fixed_delay_doppler_config(self):
        cfg = PathConfig(num_paths=3, max_delay=14, delays=(0, 5, 14), dopplers=(0.0, -2.0, 1.0))
        paths = sample_paths(0, cfg)
        assert [p.delay_taps for p in paths.direct] == [0, 5, 14]
        assert [p.doppler_norm for p in paths.direct] == [0.0, -2.0, 1.0]

    def test_single_static_path(self):
        paths = sample_paths(5, PathConfig(num_paths=1, max_delay=0, max_doppler=0.0))
        assert paths.direct[0].delay_taps == 0
        assert paths.direct[0].doppler_norm == 0.0

    def test_bounds_respected(self):
        cfg = PathConfig(num_paths=200, max_delay=6, max_doppler=1.5)
        paths = sample_paths(17, cfg)
        assert all(0 <= p.delay_taps <= 6 for p in paths.direct)
        assert all(abs(p.doppler_norm) <= 1.5 for p in paths.direct)
        assert all(0 <= p.angles.elevation_in <= np.pi for p in paths.direct)
        assert all(abs(p.angles.azimuth_out) <= np.pi / 2 for p in paths.direct)

    def test_no_ris_yields_empty_legs(self):
        paths = sample_paths(1, PathConfig(num_paths=2))
        assert paths.ris_legs == ()
        assert paths.max_composite_delay() == max(p.delay_taps for p in paths.direct)


class TestBuildG:
    def test_identity_case(self):
        np.testing.assert_array_equal(build_g(0, 0.0, 8), np.eye(8))

    def test_pure_delay_is_permutation(self):
        g = build_g(5, 0.0, 16)
        assert np.all((g == 0) | (g == 1))
        x = np.arange(16.0)
        np.testing.assert_array_equal(g @ x, np.roll(x, 5))

    def test_against_per_sample_evaluation(self):
        n, delay, doppler = 256, 5, -2.0
        g = build_g(delay, doppler, n)
        nz = np.abs(g) > 0
        assert np.count_nonzero(nz) == n
        np.testing.assert_allclose(np.abs(g[nz]), 1.0, atol=1e-14)
        rng = np.random.default_rng(2)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        want = np.array([np.exp(-2j * np.pi * doppler * i / n) * x[(i - delay) % n]
                         for i in range(n)])
        np.testing.assert_allclose(g @ x, want, atol=1e-12)

    def test_shift_composition_and_wraparound(self):
        n = 12
        p5, p9 = delay_shift_matrix(n, 5), delay_shift_matrix(n, 9)
        np.testing.assert_array_equal(p5 @ p9, delay_shift_matrix(n, (5 + 9) % n))
        np.testing.assert_array_equal(np.linalg.matrix_power(delay_shift_matrix(n, 1), n),
                                      np.eye(n))

    def test_doppler_diag_unitary(self):
        for f in (0.3, -1.7, 4.0):
            d = doppler_phase_diag(64, f)
            np.testing.assert_allclose(np.abs(d), 1.0, atol=1e-14)

    def test_g_unitary_under_zero_rule(self):
        g = build_g(7, 1.234, 64)
        np.testing.assert_allclose(g.conj().T @ g, np.eye(64), atol=1e-10)

    def test_delay_out_of_range(self):
        with pytest.raises(ConfigurationError):
            build_g(16, 0.0, 16)


class TestCpPhaseRule:
    def test_zero_rule_identity(self):
        assert np.all(ZERO_CP_RULE.theta_diag(9, 16) == 1.0)

    def test_zero_delay_identity_for_any_rate(self):
        assert np.all(CpPhaseRule(0.0625).theta_diag(0, 16) == 1.0)

    def test_prefix_entries_match_scalar_formula(self):
        rule = CpPhaseRule(1.0 / 16.0)
        n, delay = 8, 2
        got = rule.theta_diag(delay, n)
        want = np.ones(n, dtype=complex)
        for i in range(delay):
            phi = (1.0 / 16.0) * (n**2 - 2 * n * (delay - i))
            want[i] = np.exp(-2j * np.pi * phi)
        np.testing.assert_allclose(got, want, atol=1e-14)
        assert np.all(got[delay:] == 1.0)


class TestAssembleHbar:
    def test_trivial_identity(self):
        # one gain-1 path with no delay/Doppler through a 1x1 link: Hbar = h * I
        paths = sample_paths(0, PathConfig(num_paths=1, max_delay=0, max_doppler=0.0))
        link = MimoLink(n_tx=1, n_rx=1)
        dims = FrameDims(num_symbols=8, num_streams=1)
        chan = assemble_hbar(paths, link, dims)
        scalar = chan.spatial[0][0, 0]
        np.testing.assert_allclose(chan.hbar, scalar * np.eye(8), atol=1e-14)

    def test_kron_block_extraction(self, toy_link):
        paths = sample_paths(3, PathConfig(num_paths=3, max_delay=5, max_doppler=1.0))
        dims = FrameDims(num_symbols=8, num_streams=2)
        chan = assemble_hbar(paths, toy_link, dims)
        n = dims.num_symbols
        for v in range(2):
            for u in range(2):
                block = chan.hbar[v * n:(v + 1) * n, u * n:(u + 1) * n]
                want = sum(s[v, u] * g for s, g in zip(chan.spatial, chan.gmats))
                np.testing.assert_allclose(block, want, atol=1e-13)

    def test_direct_only_when_no_ris(self, toy_link):
        paths = sample_paths(4, PathConfig(num_paths=2, max_delay=3))
        dims = FrameDims(num_symbols=8, num_streams=2)
        chan = assemble_hbar(paths, toy_link, dims)
        assert len(chan.spatial) == 2

    def test_occupied_shift_diagonals(self):
        paths = sample_paths(0, PathConfig(num_paths=3, delays=(0, 5, 14),
                                           dopplers=(0.0, -2.0, 1.0), max_delay=14))
        link = MimoLink(n_tx=1, n_rx=1)
        chan = assemble_hbar(paths, link, FrameDims(num_symbols=64, num_streams=1))
        nz_rows, nz_cols = np.nonzero(np.abs(chan.hbar) > 1e-12)
        diagonals = {(r - c) % 64 for r, c in zip(nz_rows, nz_cols)}
        assert diagonals == {0, 5, 14}

    def test_cp_overflow_rejected(self):
        paths = sample_paths(0, PathConfig(num_paths=1, delays=(9,), max_delay=9))
        link = MimoLink(n_tx=1, n_rx=1)
        dims = FrameDims(num_symbols=16, num_streams=1, cp_length=5)
        with pytest.raises(ConfigurationError):
            assemble_hbar(paths, link, dims)

    def test_stream_count_mismatch_rejected(self, toy_link):
        paths = sample_paths(0, PathConfig(num_paths=1))
        with pytest.raises(ConfigurationError):
            assemble_hbar(paths, toy_link, FrameDims(num_symbols=16, num_streams=1))

    def test_rescaled_keeps_invariant(self, toy_link):
        paths = sample_paths(9, PathConfig(num_paths=2, max_delay=4))
        chan = assemble_hbar(paths, toy_link, FrameDims(num_symbols=8, num_streams=2))
        scaled = chan.rescaled(0.25)
        rebuilt = sum(np.kron(s, g) for s, g in zip(scaled.spatial, scaled.gmats))
        np.testing.assert_allclose(scaled.hbar, rebuilt, atol=1e-13)
        assert scaled.frobenius_norm == pytest.approx(0.25 * chan.frobenius_norm)


class TestSpatialFactor:
    def test_rank_one_frobenius_factorization(self, toy_stacks):
        tx, rx = toy_stacks
        link = MimoLink(n_tx=2, n_rx=2, tx_stack=tx, rx_stack=rx)
        path = sample_paths(2, PathConfig(num_paths=1)).direct[0]
        scale = 0.7 - 0.2j
        factor = spatial_factor(path, link, scale)
        assert np.linalg.matrix_rank(factor, tol=1e-12) == 1
        left = link.rx_chain() @ link.rx_response(path.angles)
        right = link.tx_response(path.angles).conj() @ link.tx_chain()
        want = abs(scale) * np.linalg.norm(left) * np.linalg.norm(right)
        assert np.linalg.norm(factor) == pytest.approx(want, rel=1e-12)

    def test_no_sim_mode_degenerates_to_ula_outer_product(self):
        # conventional DD-MIMO: sqrt(Nt*Nr/P) * h * a_r(az_in) a_t(az_out)^H
        from mpdd_sim import UlaSpec, ula_response
        link = MimoLink(n_tx=3, n_rx=3)
        paths = sample_paths(6, PathConfig(num_paths=2))
        path = paths.direct[0]
        scale = np.sqrt(3 * 3 / 2) * path.gain
        got = spatial_factor(path, link, scale)
        a_r = ula_response(UlaSpec(3), path.angles.azimuth_in)
        a_t = ula_response(UlaSpec(3), path.angles.azimuth_out)
        np.testing.assert_allclose(got, scale * np.outer(a_r, a_t.conj()), atol=1e-14)

    def test_ris_global_phase_leaves_frobenius_norm(self, toy_stacks):
        from mpdd_sim import ris_spatial_factor
        tx, rx = toy_stacks
        paths = sample_paths(8, PathConfig(num_paths=1, num_ris=1,
                                           ris_inbound_paths=1, ris_outbound_paths=1))
        inbound = paths.ris_legs[0].inbound[0]
        outbound = paths.ris_legs[0].outbound[0]
        norms = []
        for alpha in (0.0, 1.234):
            panel = RisPanel(2, 2, np.full(4, alpha))
            link = MimoLink(n_tx=2, n_rx=2, tx_stack=tx, rx_stack=rx, ris=(panel,))
            norms.append(np.linalg.norm(
                ris_spatial_factor(outbound, inbound, panel, link, 1.0)))
        assert norms[0] == pytest.approx(norms[1], rel=1e-12)


class TestOracleEquivalence:
    def test_direct_and_ris_against_sampled_sum(self, toy_stacks):
        tx, rx = toy_stacks
        rng = np.random.default_rng(11)
        panel = RisPanel(2, 2, rng.uniform(0, 2 * np.pi, 4))
        link = MimoLink(n_tx=2, n_rx=2, tx_stack=tx, rx_stack=rx, ris=(panel,))
        cfg = PathConfig(num_paths=3, max_delay=6, max_doppler=1.7,
                         num_ris=1, ris_inbound_paths=2, ris_outbound_paths=2)
        dims = FrameDims(num_symbols=16, num_streams=2)
        for seed in range(4):
            paths = sample_paths(seed, cfg)
            for rule in (ZERO_CP_RULE, CpPhaseRule(0.11)):
                chan = assemble_hbar(paths, link, dims, rule)
                s = rng.standard_normal(32) + 1j * rng.standard_normal(32)
                want = td_reference(paths, link, dims, s, rule)
                got = chan.hbar @ s
                assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)

    def test_cp_prefix_linear_convolution_matches_circular(self):
        # physically prefix the frame, run a linear time-varying convolution,
        # strip the prefix, and compare with the circular model
        n, n_cp = 32, 10
        link = MimoLink(n_tx=1, n_rx=1)
        dims = FrameDims(num_symbols=n, num_streams=1)
        rng = np.random.default_rng(21)
        s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        for chirp in (0.0, 5.0 / (2 * n)):
            rule = CpPhaseRule(chirp)
            paths = sample_paths(3, PathConfig(num_paths=3, max_delay=n_cp, max_doppler=1.3))
            chan = assemble_hbar(paths, link, dims, rule)

            pre_idx = np.arange(-n_cp, 0)
            if chirp == 0.0:
                prefix = s[pre_idx % n]
            else:
                prefix = s[pre_idx % n] * np.exp(-2j * np.pi * chirp * (n**2 + 2 * n * pre_idx))
            ext = np.concatenate([prefix, s])
            tx, rx = link.tx_chain(), link.rx_chain()
            out = np.zeros(n, dtype=complex)
            for path in paths.direct:
                scale = np.sqrt(1.0 / len(paths.direct)) * path.gain
                h = spatial_factor(path, link, scale, tx_chain=tx, rx_chain=rx)[0, 0]
                for i in range(n):
                    out[i] += (h * np.exp(-2j * np.pi * path.doppler_norm * i / n)
                               * ext[n_cp + i - path.delay_taps])
            np.testing.assert_allclose(chan.hbar @ s, out, atol=1e-12)


class TestApplyChannel:
    def test_noiseless_identity(self):
        s = np.arange(6.0) + 0j
        np.testing.assert_array_equal(apply_channel(np.eye(6), s, 0.0), s)

    def test_seeded_reproducibility(self):
        h = np.eye(16)
        s = np.ones(16, dtype=complex)
        a = apply_channel(h, s, 0.5, spawn_rng(42))
        b = apply_channel(h, s, 0.5, spawn_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_noise_variance_statistics(self):
        # empirical per-entry variance within 3 sigma over 1e4 draws
        var = 0.73
        draws = 10_000
        rng = spawn_rng(7)
        h = np.zeros((4, 4))
        s = np.zeros(4, dtype=complex)
        total = 0.0
        for _ in range(draws):
            w = apply_channel(h, s, var, rng)
            total += float(np.sum(np.abs(w) ** 2))
        est = total / (draws * 4)
        # |w|^2 has variance var^2 per entry; the mean estimator spreads accordingly
        sigma = var / np.sqrt(draws * 4)
        assert abs(est - var) <= 3 * sigma

    def test_negative_variance_rejected(self):
        with pytest.raises(ConfigurationError):
            apply_channel(np.eye(2), np.zeros(2, dtype=complex), -1.0)

    def test_noise_requires_rng(self):
        with pytest.raises(ConfigurationError):
            apply_channel(np.eye(2), np.zeros(2, dtype=complex), 0.1)
