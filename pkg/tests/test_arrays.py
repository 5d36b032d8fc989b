"""Array response vectors: frozen cases, norms, and Kronecker ordering."""

import cmath

import numpy as np
import pytest

from mpdd_sim import ConfigurationError, UlaSpec, UpaSpec, ula_response, upa_response


def scalar_ula(num, spacing, angle):
    """Independent element-by-element evaluation."""
    return np.array([cmath.exp(-1j * 2 * cmath.pi * spacing * n * cmath.sin(angle))
                     for n in range(num)]) / cmath.sqrt(num)


def scalar_upa(nx, nz, dx, dz, azimuth, elevation):
    out = []
    for ix in range(nx):
        for iz in range(nz):
            phase = (-2 * cmath.pi * dx * ix * cmath.sin(azimuth) * cmath.sin(elevation)
                     - 2 * cmath.pi * dz * iz * cmath.cos(elevation))
            out.append(cmath.exp(1j * phase))
    return np.array(out) / cmath.sqrt(nx * nz)


class TestUlaResponse:
    def test_single_element_is_one(self):
        assert ula_response(UlaSpec(1), 1.234) == pytest.approx(1.0)

    def test_broadside_constant(self):
        np.testing.assert_allclose(ula_response(UlaSpec(4), 0.0), np.full(4, 0.5), atol=1e-15)

    def test_endfire_half_wavelength(self):
        # sin(pi/2) = 1 with lambda/2 spacing alternates the sign
        got = ula_response(UlaSpec(4, 0.5), np.pi / 2)
        np.testing.assert_allclose(got, [0.5, -0.5, 0.5, -0.5], atol=1e-12)

    @pytest.mark.parametrize("num,spacing,angle", [(3, 0.5, 0.7), (8, 0.25, 2.1), (5, 1.0, 1.3)])
    def test_matches_scalar_formula(self, num, spacing, angle):
        np.testing.assert_allclose(ula_response(UlaSpec(num, spacing), angle),
                                   scalar_ula(num, spacing, angle), atol=1e-14)

    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            spec = UlaSpec(int(rng.integers(1, 40)), float(rng.uniform(0.1, 2.0)))
            angle = float(rng.uniform(0, np.pi))
            assert abs(np.linalg.norm(ula_response(spec, angle)) - 1.0) <= 1e-12

    def test_invalid_spec_rejected(self):
        with pytest.raises(ConfigurationError):
            UlaSpec(0)
        with pytest.raises(ConfigurationError):
            UlaSpec(4, spacing=-0.5)


class TestUpaResponse:
    def test_single_element_is_one(self):
        assert upa_response(UpaSpec(1, 1), 0.3, 0.9) == pytest.approx(1.0)

    def test_phase_arguments_vanish(self):
        # azimuth 0 kills the x phases, elevation pi/2 kills the z phases
        got = upa_response(UpaSpec(2, 2), 0.0, np.pi / 2)
        np.testing.assert_allclose(got, np.full(4, 0.5), atol=1e-15)

    def test_matches_scalar_formula(self):
        got = upa_response(UpaSpec(3, 2), np.pi / 4, np.pi / 3)
        np.testing.assert_allclose(got, scalar_upa(3, 2, 0.5, 0.5, np.pi / 4, np.pi / 3),
                                   atol=1e-14)

    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            spec = UpaSpec(int(rng.integers(1, 8)), int(rng.integers(1, 8)))
            got = upa_response(spec, float(rng.uniform(-np.pi / 2, np.pi / 2)),
                               float(rng.uniform(0, np.pi)))
            assert abs(np.linalg.norm(got) - 1.0) <= 1e-12

    def test_kron_ordering_detects_swap(self):
        # element m = ix*nz + iz; the swapped ordering differs whenever both
        # axes carry non-trivial phases
        spec = UpaSpec(3, 2)
        azimuth, elevation = 0.6, 1.1
        got = upa_response(spec, azimuth, elevation)
        bx = np.exp(-2j * np.pi * 0.5 * np.arange(3) * np.sin(azimuth) * np.sin(elevation))
        bz = np.exp(-2j * np.pi * 0.5 * np.arange(2) * np.cos(elevation))
        right = np.kron(bx, bz) / np.sqrt(6)
        swapped = np.kron(bz, bx) / np.sqrt(6)
        np.testing.assert_allclose(got, right, atol=1e-14)
        assert np.abs(got - swapped).max() > 1e-3

    def test_degenerates_to_ula(self):
        # one z element and broadside elevation reduce to the linear array
        spec = UpaSpec(5, 1, dx=0.5)
        angle = 0.8
        got = upa_response(spec, angle, np.pi / 2)
        np.testing.assert_allclose(got, ula_response(UlaSpec(5, 0.5), angle), atol=1e-12)

    def test_invalid_spec_rejected(self):
        with pytest.raises(ConfigurationError):
            UpaSpec(0, 2)
        with pytest.raises(ConfigurationError):
            UpaSpec(2, 2, dx=0.0)
