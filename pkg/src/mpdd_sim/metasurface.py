"""Stacked-metasurface (SIM) and RIS building blocks.

Covers per-layer phase matrices, Rayleigh-Sommerfeld diffraction couplings
between layers (and between the feed array and the innermost layer), the
TX/RX stack transfer functions, outermost-layer spatial correlation roots,
and reflective RIS panels.

All geometry is expressed in wavelengths, so the free-space wavelength is
1 everywhere below.  Meta-atom grids lie in x-z planes stacked along +y:
the feed ULA sits on the x-axis at y=0 and layer ``q`` (1-based) sits at
``y = feed_spacing + (q-1)*layer_spacing``.  Grids are centered on the
y-axis; the centering is a modeling choice, not dictated by physics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .arrays import UpaSpec
from .errors import ConfigurationError, GeometryError, require

__all__ = [
    "SimLayerGeometry",
    "SimStack",
    "RisPanel",
    "phase_layer_matrix",
    "diffraction_matrix",
    "sim_transfer",
    "correlation_matrix",
    "correlation_root",
    "build_sim_stack",
]


@dataclass(frozen=True)
class SimLayerGeometry:
    """Per-layer meta-atom layout shared by every layer of one stack.

    `atom_area` is the square measure occupied by one meta-atom in units of
    wavelength^2 (lambda/2 pitch gives lambda^2/4).  `feed_spacing` is the
    distance from the antenna array to the innermost layer and defaults to
    `layer_spacing`.
    """

    atoms_x: int
    atoms_z: int
    layer_spacing: float = 5.0
    atom_spacing: float = 0.5
    atom_area: float = 0.25
    feed_spacing: float | None = None

    def __post_init__(self) -> None:
        require(self.atoms_x >= 1 and self.atoms_z >= 1,
                f"meta-atom counts must be >= 1, got {self.atoms_x}x{self.atoms_z}")
        require(self.layer_spacing > 0 and self.atom_spacing > 0 and self.atom_area > 0,
                "layer_spacing, atom_spacing, and atom_area must be positive")
        if self.feed_spacing is not None:
            require(self.feed_spacing > 0, "feed_spacing must be positive")

    @property
    def num_atoms(self) -> int:
        return self.atoms_x * self.atoms_z

    @property
    def feed_distance(self) -> float:
        return self.layer_spacing if self.feed_spacing is None else self.feed_spacing

    @property
    def upa_spec(self) -> UpaSpec:
        """Planar-array view of one layer, used for path response vectors."""
        return UpaSpec(self.atoms_x, self.atoms_z, self.atom_spacing, self.atom_spacing)

    def atom_positions(self, y: float = 0.0) -> np.ndarray:
        """(num_atoms, 3) centered meta-atom coordinates for a layer at `y`.

        Atom m = ix*atoms_z + iz, matching the UPA response element order.
        """
        ix = (np.arange(self.atoms_x) - (self.atoms_x - 1) / 2.0) * self.atom_spacing
        iz = (np.arange(self.atoms_z) - (self.atoms_z - 1) / 2.0) * self.atom_spacing
        xs = np.repeat(ix, self.atoms_z)
        zs = np.tile(iz, self.atoms_x)
        ys = np.full(self.num_atoms, float(y))
        return np.column_stack([xs, ys, zs])


def ula_positions(num_elements: int, spacing: float = 0.5, y: float = 0.0) -> np.ndarray:
    """(A, 3) coordinates of a centered ULA on the x-axis at height `y`."""
    xs = (np.arange(num_elements) - (num_elements - 1) / 2.0) * spacing
    return np.column_stack([xs, np.full(num_elements, float(y)), np.zeros(num_elements)])


def phase_layer_matrix(phases: Sequence[float] | np.ndarray) -> np.ndarray:
    """Diagonal unit-modulus matrix diag(exp(1j*phases)).

    Shared constructor for SIM layer phase matrices and RIS phase
    configuration matrices.
    """
    phases = np.asarray(phases, dtype=float)
    require(phases.ndim == 1, "phase vector must be one-dimensional")
    if not np.all(np.isfinite(phases)):
        raise ConfigurationError("phase vector contains non-finite entries")
    return np.diag(np.exp(1j * phases))


def diffraction_matrix(
    geometry: SimLayerGeometry,
    src_positions: np.ndarray,
    dst_positions: np.ndarray,
    *,
    assume_normal_incidence: bool = False,
) -> np.ndarray:
    """Rayleigh-Sommerfeld coupling matrix from source points to destination points.

    Entry (m, m') couples source point m' to destination point m:

        (rho * cos(eps) / d) * (1/(2*pi*d) - 1j) * exp(2j*pi*d)

    with ``d`` the Euclidean distance in wavelengths, ``rho`` the meta-atom
    area, and ``eps`` the angle between the propagation vector and the
    source layer's +y normal.  ``assume_normal_incidence`` forces
    cos(eps)=1, reproducing the aligned-setup simplification used when
    feeds and atoms are treated as broadside pairs.

    Raises
    ------
    GeometryError
        If any source/destination pair coincides (zero distance).
    """
    src = np.asarray(src_positions, dtype=float)
    dst = np.asarray(dst_positions, dtype=float)
    diff = dst[:, None, :] - src[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist <= 0.0):
        raise GeometryError("coincident source/destination points in diffraction geometry")
    if assume_normal_incidence:
        cos_eps = 1.0
    else:
        cos_eps = np.abs(diff[:, :, 1]) / dist
    amp = geometry.atom_area * cos_eps / dist
    return amp * (1.0 / (2.0 * np.pi * dist) - 1j) * np.exp(2j * np.pi * dist)


def correlation_matrix(geometry: SimLayerGeometry) -> np.ndarray:
    """sinc-law spatial correlation over one layer's meta-atom grid.

    Entry (m, m') is sinc(2*d) with d the atom distance in wavelengths and
    sinc(a) = sin(pi*a)/(pi*a); the diagonal is exactly 1.
    """
    pos = geometry.atom_positions()
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    return np.sinc(2.0 * dist)


def correlation_root(geometry: SimLayerGeometry) -> np.ndarray:
    """Principal square root S of the layer correlation matrix, S @ S = R.

    R is Hermitian by construction but can be numerically indefinite at
    scale; negative eigenvalues are clamped to zero (with a warning) before
    taking the root.
    """
    corr = correlation_matrix(geometry)
    eigval, eigvec = np.linalg.eigh(corr)
    if np.any(eigval < 0.0):
        worst = float(eigval.min())
        if worst < -1e-12 * max(float(eigval.max()), 1.0):
            warnings.warn(
                f"correlation matrix indefinite (min eigenvalue {worst:.3e}); clamping to 0",
                RuntimeWarning,
                stacklevel=2,
            )
        eigval = np.clip(eigval, 0.0, None)
    return (eigvec * np.sqrt(eigval)) @ eigvec.conj().T


@dataclass(frozen=True)
class SimStack:
    """One TX- or RX-side stacked metasurface.

    `phases` is (num_layers, num_atoms); layer 1 (innermost, feed side) is
    row 0.  `couplings[0]` is the feed coupling -- (M, n_antennas) on the
    TX side, (n_antennas, M) on the RX side -- and `couplings[q]` for
    q >= 1 is the (M, M) layer-(q) to layer-(q+1) diffraction matrix
    (read toward the outer layer on TX, toward the feed on RX).
    """

    side: str
    phases: np.ndarray
    couplings: tuple[np.ndarray, ...]
    correlation_root: np.ndarray
    geometry: SimLayerGeometry

    def __post_init__(self) -> None:
        require(self.side in ("tx", "rx"), f"side must be 'tx' or 'rx', got {self.side!r}")
        require(self.phases.ndim == 2, "phases must be (num_layers, num_atoms)")
        require(len(self.couplings) == self.num_layers,
                "need one coupling matrix per layer (feed coupling first)")
        m = self.num_atoms
        feed = self.couplings[0]
        if self.side == "tx":
            require(feed.shape[0] == m, f"TX feed coupling must have {m} rows")
        else:
            require(feed.shape[1] == m, f"RX feed coupling must have {m} columns")
        for gamma in self.couplings[1:]:
            require(gamma.shape == (m, m), "inter-layer couplings must be (M, M)")
        require(self.correlation_root.shape == (m, m), "correlation root must be (M, M)")

    @property
    def num_layers(self) -> int:
        return self.phases.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.phases.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.couplings[0].shape[1] if self.side == "tx" else self.couplings[0].shape[0]

    def with_phases(self, phases: np.ndarray) -> "SimStack":
        """Copy of this stack with a new phase configuration."""
        phases = np.asarray(phases, dtype=float)
        require(phases.shape == self.phases.shape,
                f"phases must have shape {self.phases.shape}, got {phases.shape}")
        return replace(self, phases=phases)

    def transfer(self) -> np.ndarray:
        return sim_transfer(self)


def sim_transfer(stack: SimStack) -> np.ndarray:
    """Cascade transfer function of a stack.

    TX side: Psi_Q Gamma_Q ... Psi_1 Gamma_1, shape (M, n_antennas) -- the
    wave enters at the feed, is phase-shifted at each layer, and exits at
    the outermost layer.  RX side: Xi_1 Delta_1 Xi_2 Delta_2 ... Xi_Q
    Delta_Q, shape (n_antennas, M) -- the rightmost factor acts on the
    outermost layer where the wave arrives.
    """
    shifts = np.exp(1j * stack.phases)
    if stack.side == "tx":
        out = shifts[0][:, None] * stack.couplings[0]
        for q in range(1, stack.num_layers):
            out = shifts[q][:, None] * (stack.couplings[q] @ out)
        return out
    out = stack.couplings[0] * shifts[0][None, :]
    for q in range(1, stack.num_layers):
        out = (out @ stack.couplings[q]) * shifts[q][None, :]
    return out


def build_sim_stack(
    side: str,
    num_layers: int,
    geometry: SimLayerGeometry,
    num_antennas: int,
    *,
    phases: np.ndarray | None = None,
    antenna_spacing: float = 0.5,
    assume_normal_incidence: bool = False,
) -> SimStack:
    """Construct a SimStack with geometry-derived couplings.

    Zero phases (the unoptimized configuration) are used when `phases` is
    None.  Layer q sits at y = feed_distance + (q-1)*layer_spacing; the
    feed ULA sits at y = 0 along x with `antenna_spacing` pitch.
    """
    require(side in ("tx", "rx"), f"side must be 'tx' or 'rx', got {side!r}")
    require(num_layers >= 1, f"stack needs at least one layer, got {num_layers}")
    require(num_antennas >= 1, f"stack needs at least one antenna, got {num_antennas}")

    antennas = ula_positions(num_antennas, antenna_spacing)
    layer_y = [geometry.feed_distance + q * geometry.layer_spacing for q in range(num_layers)]
    layers = [geometry.atom_positions(y) for y in layer_y]

    feed = diffraction_matrix(geometry, antennas, layers[0],
                              assume_normal_incidence=assume_normal_incidence)
    couplings: list[np.ndarray] = [feed if side == "tx" else feed.T]
    for q in range(1, num_layers):
        couplings.append(
            diffraction_matrix(geometry, layers[q - 1], layers[q],
                               assume_normal_incidence=assume_normal_incidence)
        )

    if phases is None:
        phases = np.zeros((num_layers, geometry.num_atoms))
    else:
        phases = np.asarray(phases, dtype=float)
        require(phases.shape == (num_layers, geometry.num_atoms),
                f"phases must have shape {(num_layers, geometry.num_atoms)}, got {phases.shape}")

    return SimStack(
        side=side,
        phases=phases,
        couplings=tuple(couplings),
        correlation_root=correlation_root(geometry),
        geometry=geometry,
    )


@dataclass(frozen=True)
class RisPanel:
    """A reflective metasurface panel with a fixed phase configuration."""

    atoms_x: int
    atoms_z: int
    phases: np.ndarray
    atom_spacing: float = 0.5

    def __post_init__(self) -> None:
        require(self.atoms_x >= 1 and self.atoms_z >= 1,
                f"RIS atom counts must be >= 1, got {self.atoms_x}x{self.atoms_z}")
        require(self.phases.shape == (self.num_atoms,),
                f"RIS phases must have shape ({self.num_atoms},), got {self.phases.shape}")

    @property
    def num_atoms(self) -> int:
        return self.atoms_x * self.atoms_z

    @property
    def upa_spec(self) -> UpaSpec:
        return UpaSpec(self.atoms_x, self.atoms_z, self.atom_spacing, self.atom_spacing)

    def phase_matrix(self) -> np.ndarray:
        return phase_layer_matrix(self.phases)
