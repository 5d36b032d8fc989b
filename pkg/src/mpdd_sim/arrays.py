"""Antenna-array steering/response vectors for ULAs and UPAs.

All lengths are expressed in carrier wavelengths and all angles in
radians.  Responses are unit-norm by construction.  Element indexing is
0-based internally; the phase of element ``n`` therefore carries a factor
``n`` where textbook 1-based formulas carry ``n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import require

__all__ = ["UlaSpec", "UpaSpec", "PathAngles", "ula_response", "upa_response"]


@dataclass(frozen=True)
class UlaSpec:
    """Uniform linear array: `num_elements` antennas at `spacing` wavelengths."""

    num_elements: int
    spacing: float = 0.5

    def __post_init__(self) -> None:
        require(int(self.num_elements) == self.num_elements and self.num_elements >= 1,
                f"ULA needs at least one element, got {self.num_elements}")
        require(self.spacing > 0, f"ULA element spacing must be positive, got {self.spacing}")


@dataclass(frozen=True)
class UpaSpec:
    """Uniform planar array with `nx * nz` elements in the x-z plane."""

    nx: int
    nz: int
    dx: float = 0.5
    dz: float = 0.5

    def __post_init__(self) -> None:
        require(int(self.nx) == self.nx and self.nx >= 1, f"UPA nx must be >= 1, got {self.nx}")
        require(int(self.nz) == self.nz and self.nz >= 1, f"UPA nz must be >= 1, got {self.nz}")
        require(self.dx > 0 and self.dz > 0,
                f"UPA spacings must be positive, got dx={self.dx}, dz={self.dz}")

    @property
    def num_elements(self) -> int:
        return self.nx * self.nz


@dataclass(frozen=True)
class PathAngles:
    """Arrival/departure direction of one propagation path.

    Elevations live in [0, pi].  Azimuths are in [-pi/2, pi/2] for planar
    arrays; linear arrays use a single angle in [0, pi] and read the
    azimuth fields directly.  Both ranges are accepted as-is.
    """

    azimuth_in: float
    elevation_in: float
    azimuth_out: float
    elevation_out: float


def ula_response(spec: UlaSpec, angle: float) -> np.ndarray:
    """Response vector of a ULA for a path at `angle` radians.

    Element ``n`` is ``exp(-2j*pi*spacing*n*sin(angle)) / sqrt(A)``, so the
    result has unit Euclidean norm.

    Parameters
    ----------
    spec : UlaSpec
    angle : float
        Angle of arrival/departure in radians.

    Returns
    -------
    np.ndarray
        Complex vector of shape ``(spec.num_elements,)``.
    """
    n = np.arange(spec.num_elements)
    phase = -2.0 * np.pi * spec.spacing * n * np.sin(angle)
    return np.exp(1j * phase) / np.sqrt(spec.num_elements)


def upa_response(spec: UpaSpec, azimuth: float, elevation: float) -> np.ndarray:
    """Response vector of a UPA for a path at (`azimuth`, `elevation`).

    The result is ``kron(b_x, b_z) / sqrt(nx*nz)`` where the x-axis steering
    phases go like ``sin(azimuth)*sin(elevation)`` and the z-axis phases like
    ``cos(elevation)``.  Element ``m = ix*nz + iz`` pairs x-index ``ix`` with
    z-index ``iz``; the Kronecker order is part of the contract.

    Returns
    -------
    np.ndarray
        Complex unit-norm vector of shape ``(spec.num_elements,)``.
    """
    ix = np.arange(spec.nx)
    iz = np.arange(spec.nz)
    bx = np.exp(-2j * np.pi * spec.dx * ix * np.sin(azimuth) * np.sin(elevation))
    bz = np.exp(-2j * np.pi * spec.dz * iz * np.cos(elevation))
    return np.kron(bx, bz) / np.sqrt(spec.num_elements)
