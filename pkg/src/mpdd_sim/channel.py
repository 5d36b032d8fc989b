"""Doubly-dispersive MIMO channel assembly.

Random delay/Doppler path generation, per-path spatial factors through the
optional TX/RX metasurface stacks and ambient RIS panels, per-path
delay-Doppler matrices ``G = Theta * Omega^f * Pi^l``, and the Kronecker
assembly of the ``N*d_s x N*d_s`` time-domain effective channel.

Doppler sign convention: the per-sample Doppler phase is
``exp(-2j*pi*f*n/N)``, i.e. the diagonal Doppler matrix raised to the
normalized shift ``f``.  Path Dopplers are sampled from a sign-symmetric
Jakes spectrum, so the convention is a pure relabeling; it is applied
consistently here and in every reference oracle.

The cyclic-prefix length never enters the N-sample frame algebra (the
model is circular); it only bounds the admissible composite path delays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .arrays import PathAngles, UlaSpec, ula_response, upa_response
from .errors import ConfigurationError, require
from .metasurface import RisPanel, SimStack
from .rng import as_rng

__all__ = [
    "FrameDims",
    "DdPath",
    "RisLegPaths",
    "PathSet",
    "PathConfig",
    "sample_paths",
    "CpPhaseRule",
    "ZERO_CP_RULE",
    "delay_shift_matrix",
    "doppler_phase_diag",
    "build_g",
    "MimoLink",
    "spatial_factor",
    "ris_spatial_factor",
    "EffectiveChannel",
    "assemble_hbar",
    "apply_channel",
]


def _near_square_split(n: int) -> tuple[int, int]:
    """Largest divisor pair (rows, cols) of n with rows <= sqrt(n)."""
    rows = 1
    for d in range(1, int(np.sqrt(n)) + 1):
        if n % d == 0:
            rows = d
    return rows, n // rows


@dataclass(frozen=True)
class FrameDims:
    """Frame bookkeeping: symbols per frame, streams, CP, and OTFS grid.

    `cp_length` of None means "as long as the worst composite path delay",
    resolved when a channel is assembled.  The OTFS grid defaults to the
    most square factorization of `num_symbols`.
    """

    num_symbols: int
    num_streams: int = 1
    cp_length: int | None = None
    otfs_rows: int | None = None
    otfs_cols: int | None = None

    def __post_init__(self) -> None:
        require(self.num_symbols >= 1, f"need at least one symbol per frame, got {self.num_symbols}")
        require(self.num_streams >= 1, f"need at least one stream, got {self.num_streams}")
        if self.cp_length is not None:
            require(self.cp_length >= 0, "cp_length must be non-negative")
        if (self.otfs_rows is None) != (self.otfs_cols is None):
            raise ConfigurationError("otfs_rows and otfs_cols must be given together")
        if self.otfs_rows is None:
            rows, cols = _near_square_split(self.num_symbols)
            object.__setattr__(self, "otfs_rows", rows)
            object.__setattr__(self, "otfs_cols", cols)
        require(self.otfs_rows * self.otfs_cols == self.num_symbols,
                f"OTFS grid {self.otfs_rows}x{self.otfs_cols} does not tile {self.num_symbols} symbols")

    @property
    def frame_size(self) -> int:
        return self.num_symbols * self.num_streams


@dataclass(frozen=True)
class DdPath:
    """One delay-Doppler propagation path."""

    gain: complex
    delay_taps: int
    doppler_norm: float
    angles: PathAngles

    def __post_init__(self) -> None:
        require(int(self.delay_taps) == self.delay_taps and self.delay_taps >= 0,
                f"delay must be a non-negative integer tap count, got {self.delay_taps}")


@dataclass(frozen=True)
class RisLegPaths:
    """Paths of one RIS relay: inbound = TX side -> RIS, outbound = RIS -> RX side."""

    inbound: tuple[DdPath, ...]
    outbound: tuple[DdPath, ...]


@dataclass(frozen=True)
class PathSet:
    """Direct paths plus per-RIS relay legs."""

    direct: tuple[DdPath, ...]
    ris_legs: tuple[RisLegPaths, ...] = ()

    def composites(self) -> Iterator[tuple[int, DdPath, DdPath]]:
        """Yield (ris index, outbound path, inbound path) for every relayed pair."""
        for k, legs in enumerate(self.ris_legs):
            for outbound in legs.outbound:
                for inbound in legs.inbound:
                    yield k, outbound, inbound

    def max_composite_delay(self) -> int:
        delays = [p.delay_taps for p in self.direct]
        delays += [o.delay_taps + i.delay_taps for _, o, i in self.composites()]
        return max(delays, default=0)


@dataclass(frozen=True)
class PathConfig:
    """Path-count and delay/Doppler bounds for random channel draws.

    `delays`/`dopplers`, when given, pin the direct paths to fixed values
    instead of drawing them (the RIS legs always draw).  Doppler shifts are
    normalized to the frame (cycles per N samples) and may be fractional.
    """

    num_paths: int
    max_delay: int = 14
    max_doppler: float = 2.0
    num_ris: int = 0
    ris_inbound_paths: int = 0
    ris_outbound_paths: int = 0
    delays: tuple[int, ...] | None = None
    dopplers: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        require(self.num_paths >= 0, "num_paths must be >= 0")
        require(self.max_delay >= 0 and self.max_doppler >= 0, "delay/Doppler bounds must be >= 0")
        require(self.num_ris >= 0, "num_ris must be >= 0")
        require(self.ris_inbound_paths >= 0 and self.ris_outbound_paths >= 0,
                "RIS path counts must be >= 0")
        if self.delays is not None:
            require(len(self.delays) == self.num_paths,
                    f"fixed delays must list {self.num_paths} entries")
        if self.dopplers is not None:
            require(len(self.dopplers) == self.num_paths,
                    f"fixed dopplers must list {self.num_paths} entries")


def _draw_angles(rng: np.random.Generator) -> PathAngles:
    azimuths = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
    elevations = rng.uniform(0.0, np.pi, size=2)
    return PathAngles(azimuth_in=float(azimuths[0]), elevation_in=float(elevations[0]),
                      azimuth_out=float(azimuths[1]), elevation_out=float(elevations[1]))


def _draw_paths(rng: np.random.Generator, count: int, max_delay: int, max_doppler: float,
                delays=None, dopplers=None) -> tuple[DdPath, ...]:
    paths = []
    for p in range(count):
        if delays is None:
            delay = int(rng.integers(0, max_delay + 1))
        else:
            delay = int(delays[p])
        if dopplers is None:
            # Jakes spectrum: f = f_max * cos(theta), theta uniform on [-pi, pi].
            doppler = max_doppler * float(np.cos(rng.uniform(-np.pi, np.pi)))
        else:
            doppler = float(dopplers[p])
        re, im = rng.standard_normal(2)
        paths.append(DdPath(gain=complex(re, im) / np.sqrt(2.0), delay_taps=delay,
                            doppler_norm=doppler, angles=_draw_angles(rng)))
    return tuple(paths)


def sample_paths(seed: int | np.random.Generator, config: PathConfig) -> PathSet:
    """Draw a PathSet: uniform integer delays, Jakes Dopplers, CN(0,1) gains.

    The per-path-set power normalization (sqrt(M*Mtilde/P) factors) is not
    baked into the gains; it is applied by the spatial factors.
    """
    rng = as_rng(seed)
    direct = _draw_paths(rng, config.num_paths, config.max_delay, config.max_doppler,
                         config.delays, config.dopplers)
    legs = []
    for _ in range(config.num_ris):
        inbound = _draw_paths(rng, config.ris_inbound_paths, config.max_delay, config.max_doppler)
        outbound = _draw_paths(rng, config.ris_outbound_paths, config.max_delay, config.max_doppler)
        legs.append(RisLegPaths(inbound=inbound, outbound=outbound))
    return PathSet(direct=direct, ris_legs=tuple(legs))


# ---------------------------------------------------------------------------
# Delay / Doppler / CP-phase factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CpPhaseRule:
    """Waveform-dependent phase picked up by prefix samples.

    The phase function is ``phi(k) = chirp_rate * (N^2 - 2*N*k)``; the zero
    rule (chirp_rate = 0) leaves prefix samples untouched and yields an
    identity Theta for every delay.
    """

    chirp_rate: float = 0.0

    def __post_init__(self) -> None:
        require(np.isfinite(self.chirp_rate), "chirp rate must be finite")

    @property
    def is_zero(self) -> bool:
        return self.chirp_rate == 0.0

    def theta_diag(self, delay: int, num_symbols: int) -> np.ndarray:
        """Diagonal of Theta for one path: prefix phases on the first `delay` samples."""
        diag = np.ones(num_symbols, dtype=complex)
        if delay and not self.is_zero:
            n = np.arange(delay)
            phi = self.chirp_rate * (num_symbols**2 - 2.0 * num_symbols * (delay - n))
            diag[:delay] = np.exp(-2j * np.pi * phi)
        return diag


ZERO_CP_RULE = CpPhaseRule(0.0)


def delay_shift_matrix(num_symbols: int, delay: int) -> np.ndarray:
    """Forward cyclic shift Pi^delay: (Pi^d x)[n] = x[(n - d) mod N]."""
    require(0 <= delay < num_symbols, f"delay {delay} out of range for N={num_symbols}")
    pi = np.zeros((num_symbols, num_symbols))
    rows = np.arange(num_symbols)
    pi[rows, (rows - delay) % num_symbols] = 1.0
    return pi


def doppler_phase_diag(num_symbols: int, doppler: float) -> np.ndarray:
    """Diagonal of Omega^f: exp(-2j*pi*f*n/N) for n = 0..N-1."""
    n = np.arange(num_symbols)
    return np.exp(-2j * np.pi * doppler * n / num_symbols)


def build_g(delay: int, doppler: float, num_symbols: int,
            cp_rule: CpPhaseRule = ZERO_CP_RULE) -> np.ndarray:
    """Per-path time factor G = Theta * Omega^doppler * Pi^delay (N x N).

    `delay` must be an integer tap in [0, N); `doppler` may be fractional.
    """
    delay = int(delay)
    require(0 <= delay < num_symbols,
            f"delay {delay} out of range for frame of {num_symbols} symbols")
    require(np.isfinite(doppler), "doppler must be finite")
    rows = np.arange(num_symbols)
    values = cp_rule.theta_diag(delay, num_symbols) * doppler_phase_diag(num_symbols, doppler)
    g = np.zeros((num_symbols, num_symbols), dtype=complex)
    g[rows, (rows - delay) % num_symbols] = values
    return g


# ---------------------------------------------------------------------------
# Spatial factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MimoLink:
    """End-to-end MIMO hop: antenna counts, optional SIM stacks, RIS panels, beamformers.

    Either stack may be None, which removes the corresponding metasurface
    chain and swaps the UPA path responses for plain ULA responses (the
    conventional DD-MIMO special case).  `precoder`/`combiner` default to
    the first d_s columns of the identity.
    """

    n_tx: int
    n_rx: int
    tx_stack: SimStack | None = None
    rx_stack: SimStack | None = None
    ris: tuple[RisPanel, ...] = ()
    precoder: np.ndarray | None = None
    combiner: np.ndarray | None = None

    def __post_init__(self) -> None:
        require(self.n_tx >= 1 and self.n_rx >= 1, "antenna counts must be >= 1")
        if self.tx_stack is not None:
            require(self.tx_stack.side == "tx", "tx_stack must be built with side='tx'")
            require(self.tx_stack.num_antennas == self.n_tx,
                    f"tx_stack feeds {self.tx_stack.num_antennas} antennas, link has {self.n_tx}")
        if self.rx_stack is not None:
            require(self.rx_stack.side == "rx", "rx_stack must be built with side='rx'")
            require(self.rx_stack.num_antennas == self.n_rx,
                    f"rx_stack feeds {self.rx_stack.num_antennas} antennas, link has {self.n_rx}")
        for bf, n, name in ((self.precoder, self.n_tx, "precoder"),
                            (self.combiner, self.n_rx, "combiner")):
            if bf is not None:
                require(bf.shape == (n, self.d_s),
                        f"{name} must have shape {(n, self.d_s)}, got {bf.shape}")

    @property
    def d_s(self) -> int:
        return min(self.n_tx, self.n_rx)

    @property
    def tx_aperture_size(self) -> int:
        return self.tx_stack.num_atoms if self.tx_stack is not None else self.n_tx

    @property
    def rx_aperture_size(self) -> int:
        return self.rx_stack.num_atoms if self.rx_stack is not None else self.n_rx

    def tx_response(self, angles: PathAngles) -> np.ndarray:
        """Departure-side aperture response (outer SIM layer UPA, or TX ULA)."""
        if self.tx_stack is not None:
            return upa_response(self.tx_stack.geometry.upa_spec,
                                angles.azimuth_out, angles.elevation_out)
        return ula_response(UlaSpec(self.n_tx), angles.azimuth_out)

    def rx_response(self, angles: PathAngles) -> np.ndarray:
        """Arrival-side aperture response (outer SIM layer UPA, or RX ULA)."""
        if self.rx_stack is not None:
            return upa_response(self.rx_stack.geometry.upa_spec,
                                angles.azimuth_in, angles.elevation_in)
        return ula_response(UlaSpec(self.n_rx), angles.azimuth_in)

    def tx_chain(self) -> np.ndarray:
        """R_TX^(1/2) Upsilon_T V, or just V without a TX stack; shape (aperture, d_s)."""
        v = self.precoder if self.precoder is not None else np.eye(self.n_tx, self.d_s)
        if self.tx_stack is None:
            return v.astype(complex)
        return self.tx_stack.correlation_root @ (self.tx_stack.transfer() @ v)

    def rx_chain(self) -> np.ndarray:
        """U^H Upsilon_R R_RX^(1/2), or just U^H without an RX stack; shape (d_s, aperture)."""
        u = self.combiner if self.combiner is not None else np.eye(self.n_rx, self.d_s)
        if self.rx_stack is None:
            return u.conj().T.astype(complex)
        return (u.conj().T @ self.rx_stack.transfer()) @ self.rx_stack.correlation_root


def spatial_factor(path: DdPath, link: MimoLink, scale: complex, *,
                   tx_chain: np.ndarray | None = None,
                   rx_chain: np.ndarray | None = None) -> np.ndarray:
    """Direct-path d_s x d_s factor: scale * U^H Y_R R^(1/2) B_p R^(1/2) Y_T V.

    `scale` carries the path gain and aperture normalization.  The chains
    may be precomputed once per link and passed in.
    """
    tx = link.tx_chain() if tx_chain is None else tx_chain
    rx = link.rx_chain() if rx_chain is None else rx_chain
    left = rx @ link.rx_response(path.angles)
    right = link.tx_response(path.angles).conj() @ tx
    return scale * np.outer(left, right)


def ris_spatial_factor(outbound: DdPath, inbound: DdPath, panel: RisPanel,
                       link: MimoLink, scale: complex, *,
                       tx_chain: np.ndarray | None = None,
                       rx_chain: np.ndarray | None = None) -> np.ndarray:
    """RIS-relayed d_s x d_s factor with the panel phase matrix in the middle.

    The rank-one response matrices collapse the panel to the scalar
    b_out^H Phi_k b_in, so the result is still an outer product.
    """
    tx = link.tx_chain() if tx_chain is None else tx_chain
    rx = link.rx_chain() if rx_chain is None else rx_chain
    left = rx @ link.rx_response(outbound.angles)
    right = link.tx_response(inbound.angles).conj() @ tx
    b_in = upa_response(panel.upa_spec, inbound.angles.azimuth_in, inbound.angles.elevation_in)
    b_out = upa_response(panel.upa_spec, outbound.angles.azimuth_out, outbound.angles.elevation_out)
    through = np.vdot(b_out, np.exp(1j * panel.phases) * b_in)
    return (scale * through) * np.outer(left, right)


# ---------------------------------------------------------------------------
# Effective channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveChannel:
    """Assembled N*d_s x N*d_s channel plus the per-path factors behind it.

    Invariant: ``hbar == sum(kron(spatial[i], gmats[i]))`` where the left
    Kronecker factor indexes streams and the right indexes time.  `taps`
    records the (delay, doppler) pair behind each term.
    """

    hbar: np.ndarray
    spatial: tuple[np.ndarray, ...]
    gmats: tuple[np.ndarray, ...]
    taps: tuple[tuple[int, float], ...]
    dims: FrameDims
    cp_rule: CpPhaseRule
    domain: str = "td"

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.hbar))

    def rescaled(self, factor: float) -> "EffectiveChannel":
        """Uniformly scaled copy (spatial factors scaled to keep the invariant)."""
        return replace(self, hbar=self.hbar * factor,
                       spatial=tuple(s * factor for s in self.spatial))


def assemble_hbar(pathset: PathSet, link: MimoLink, dims: FrameDims,
                  cp_rule: CpPhaseRule = ZERO_CP_RULE) -> EffectiveChannel:
    """Sum of per-path Kronecker terms over direct and RIS-relayed paths.

    Raises
    ------
    ConfigurationError
        If stream counts disagree, a composite delay exceeds the CP length,
        a delay reaches the frame length, or a RIS leg refers to a missing
        panel.
    """
    require(dims.num_streams == link.d_s,
            f"frame has {dims.num_streams} streams but link supports d_s={link.d_s}")
    require(len(pathset.ris_legs) <= len(link.ris),
            f"path set references {len(pathset.ris_legs)} RIS panels, link has {len(link.ris)}")

    n = dims.num_symbols
    cp_len = dims.cp_length if dims.cp_length is not None else pathset.max_composite_delay()
    worst = pathset.max_composite_delay()
    if worst > cp_len:
        raise ConfigurationError(
            f"composite path delay {worst} exceeds cyclic prefix length {cp_len}")
    require(worst < n, f"composite path delay {worst} must be below the frame length {n}")

    tx = link.tx_chain()
    rx = link.rx_chain()
    p = len(pathset.direct)

    spatial: list[np.ndarray] = []
    gmats: list[np.ndarray] = []
    taps: list[tuple[int, float]] = []

    direct_norm = np.sqrt(link.tx_aperture_size * link.rx_aperture_size / p) if p else 0.0
    for path in pathset.direct:
        spatial.append(spatial_factor(path, link, direct_norm * path.gain,
                                      tx_chain=tx, rx_chain=rx))
        gmats.append(build_g(path.delay_taps, path.doppler_norm, n, cp_rule))
        taps.append((path.delay_taps, path.doppler_norm))

    for k, legs in enumerate(pathset.ris_legs):
        if not (legs.inbound and legs.outbound):
            continue
        panel = link.ris[k]
        relay_norm = panel.num_atoms * np.sqrt(
            link.tx_aperture_size * link.rx_aperture_size
            / (len(legs.outbound) * len(legs.inbound)))
        for outbound in legs.outbound:
            for inbound in legs.inbound:
                scale = relay_norm * outbound.gain * inbound.gain
                spatial.append(ris_spatial_factor(outbound, inbound, panel, link, scale,
                                                  tx_chain=tx, rx_chain=rx))
                delay = outbound.delay_taps + inbound.delay_taps
                doppler = outbound.doppler_norm + inbound.doppler_norm
                gmats.append(build_g(delay, doppler, n, cp_rule))
                taps.append((delay, doppler))

    size = dims.frame_size
    hbar = np.zeros((size, size), dtype=complex)
    for check, g in zip(spatial, gmats):
        hbar += np.kron(check, g)

    return EffectiveChannel(hbar=hbar, spatial=tuple(spatial), gmats=tuple(gmats),
                            taps=tuple(taps), dims=dims, cp_rule=cp_rule, domain="td")


def apply_channel(channel: EffectiveChannel | np.ndarray, signal: np.ndarray,
                  noise_var: float, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """r = Hbar s + w with i.i.d. circular complex Gaussian noise.

    `noise_var` is the per-entry complex variance, split evenly across real
    and imaginary parts.  A generator (or seed) is required when it is
    positive.
    """
    hbar = channel.hbar if isinstance(channel, EffectiveChannel) else channel
    signal = np.asarray(signal)
    require(signal.shape == (hbar.shape[1],),
            f"signal must have shape ({hbar.shape[1]},), got {signal.shape}")
    require(noise_var >= 0.0, f"noise variance must be non-negative, got {noise_var}")
    received = hbar @ signal
    if noise_var > 0.0:
        if rng is None:
            raise ConfigurationError("apply_channel needs an rng when noise_var > 0")
        gen = as_rng(rng)
        scale = np.sqrt(noise_var / 2.0)
        noise = gen.standard_normal(received.shape) + 1j * gen.standard_normal(received.shape)
        received = received + scale * noise
    return received
