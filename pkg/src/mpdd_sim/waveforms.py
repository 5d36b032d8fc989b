"""OFDM / OTFS / AFDM modems and their effective-channel transforms.

Every modem is characterized by one unitary N x N demodulation matrix T:
modulation maps symbols to time-domain samples via ``s = T^H x`` and
demodulation maps received samples back via ``y = T r``.  The waveform's
effective channel is the conjugation ``T G T^H`` of each per-path
time-domain factor, which preserves Frobenius norms.

Modems follow the scikit-learn transformer protocol (`transform` ==
modulate, `inverse_transform` == demodulate, stateless `fit`) so they plug
into pipelines; `get_params` works on all of them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .channel import ZERO_CP_RULE, CpPhaseRule, EffectiveChannel, FrameDims
from .errors import ConfigurationError, require

__all__ = [
    "OfdmModem",
    "OtfsModem",
    "AfdmModem",
    "modem_for",
    "afdm_chirp_rate",
    "cpp_phase_rule",
    "effective_channel",
    "qpsk_map",
    "qpsk_demap",
]


def dft_matrix(n: int) -> np.ndarray:
    """Normalized N-point DFT matrix (unitary)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


class _Modem(BaseEstimator, TransformerMixin):
    """Shared per-stream transform plumbing; subclasses provide `demod_matrix`."""

    domain: str = "td"

    def demod_matrix(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def cp_rule(self) -> CpPhaseRule:
        return ZERO_CP_RULE

    def fit(self, X=None, y=None):
        return self

    def _blockwise(self, signal: np.ndarray, matrix: np.ndarray) -> np.ndarray:
        signal = np.asarray(signal, dtype=complex)
        n = self.num_symbols
        require(signal.ndim == 1 and signal.size % n == 0 and signal.size > 0,
                f"signal length must be a positive multiple of {n}, got shape {signal.shape}")
        out = matrix @ signal.reshape(-1, n).T
        return out.T.reshape(-1)

    def modulate(self, symbols: np.ndarray) -> np.ndarray:
        """Symbols -> time-domain samples, stream block by stream block."""
        return self._blockwise(symbols, self.demod_matrix().conj().T)

    def demodulate(self, samples: np.ndarray) -> np.ndarray:
        """Time-domain samples -> symbol-domain observations."""
        return self._blockwise(samples, self.demod_matrix())

    def transform(self, X):
        return self.modulate(X)

    def inverse_transform(self, X):
        return self.demodulate(X)


class OfdmModem(_Modem):
    """Plain multicarrier modem: s = F^H x, y = F r."""

    domain = "ofdm"

    def __init__(self, num_symbols: int):
        self.num_symbols = num_symbols

    def demod_matrix(self) -> np.ndarray:
        return dft_matrix(self.num_symbols)


class OtfsModem(_Modem):
    """Delay-Doppler modem built on the discrete Zak transform.

    Symbols live on a `rows x cols` grid with ``rows*cols == num_symbols``;
    modulation is ``s = vec(X F_cols^H)`` via the Kronecker identity
    ``(F_cols^H kron I_rows) vec(X)``.  With rows=1 the transform collapses
    to the plain DFT.
    """

    domain = "otfs"

    def __init__(self, num_symbols: int, rows: int | None = None, cols: int | None = None):
        self.num_symbols = num_symbols
        self.rows = rows
        self.cols = cols

    def _grid(self) -> tuple[int, int]:
        dims = FrameDims(self.num_symbols, otfs_rows=self.rows, otfs_cols=self.cols)
        return dims.otfs_rows, dims.otfs_cols

    def demod_matrix(self) -> np.ndarray:
        rows, cols = self._grid()
        return np.kron(dft_matrix(cols), np.eye(rows))


def afdm_chirp_rate(max_doppler: float, num_symbols: int) -> float:
    """Delay-Doppler separating first chirp rate, (2*ceil(f_max) + 1) / (2N)."""
    require(max_doppler >= 0, "max_doppler must be >= 0")
    return (2.0 * np.ceil(max_doppler) + 1.0) / (2.0 * num_symbols)


def cpp_phase_rule(chirp_rate: float) -> CpPhaseRule:
    """Chirp-periodic-prefix phase rule; the zero rate gives the plain-CP rule."""
    require(np.isfinite(chirp_rate), "chirp rate must be finite")
    return CpPhaseRule(float(chirp_rate))


class AfdmModem(_Modem):
    """Chirp-domain modem: s = L1^H F^H L2^H x, y = L2 F L1 r.

    ``L_i = diag(exp(-2j*pi*c_i*n^2))``.  `chirp_rate` (c1) controls
    delay-Doppler separability (see `afdm_chirp_rate`); `chirp_rate2` (c2)
    is free.  Both at zero reduce the modem to OFDM.
    """

    domain = "afdm"

    def __init__(self, num_symbols: int, chirp_rate: float = 0.0, chirp_rate2: float = 0.0):
        self.num_symbols = num_symbols
        self.chirp_rate = chirp_rate
        self.chirp_rate2 = chirp_rate2

    @property
    def cp_rule(self) -> CpPhaseRule:
        return cpp_phase_rule(self.chirp_rate)

    def demod_matrix(self) -> np.ndarray:
        n = np.arange(self.num_symbols)
        chirp1 = np.exp(-2j * np.pi * self.chirp_rate * n**2)
        chirp2 = np.exp(-2j * np.pi * self.chirp_rate2 * n**2)
        return chirp2[:, None] * dft_matrix(self.num_symbols) * chirp1[None, :]


def modem_for(kind: str, dims: FrameDims, *, chirp_rate: float | None = None,
              chirp_rate2: float = 0.0, max_doppler: float = 0.0) -> _Modem:
    """Modem factory keyed by waveform name ('ofdm' | 'otfs' | 'afdm').

    For AFDM, a missing chirp rate is derived from `max_doppler`.
    """
    kind = kind.lower()
    if kind == "ofdm":
        return OfdmModem(dims.num_symbols)
    if kind == "otfs":
        return OtfsModem(dims.num_symbols, rows=dims.otfs_rows, cols=dims.otfs_cols)
    if kind == "afdm":
        if chirp_rate is None:
            chirp_rate = afdm_chirp_rate(max_doppler, dims.num_symbols)
        return AfdmModem(dims.num_symbols, chirp_rate=chirp_rate, chirp_rate2=chirp_rate2)
    raise ConfigurationError(f"unknown waveform kind {kind!r}")


def effective_channel(modem: _Modem, td: EffectiveChannel) -> EffectiveChannel:
    """Per-path conjugation of a time-domain channel into the modem's domain.

    Spatial factors are untouched; each G becomes T G T^H.  The TD channel
    must have been assembled under the modem's own CP phase rule.
    """
    require(td.domain == "td", f"expected a time-domain channel, got domain {td.domain!r}")
    require(td.dims.num_symbols == modem.num_symbols,
            f"modem frame ({modem.num_symbols}) != channel frame ({td.dims.num_symbols})")
    if modem.cp_rule != td.cp_rule:
        raise ConfigurationError(
            f"channel assembled with CP rule {td.cp_rule}, but {modem.domain} needs {modem.cp_rule}")

    t = modem.demod_matrix()
    gmats = tuple(t @ g @ t.conj().T for g in td.gmats)
    size = td.dims.frame_size
    hbar = np.zeros((size, size), dtype=complex)
    for check, g in zip(td.spatial, gmats):
        hbar += np.kron(check, g)
    return EffectiveChannel(hbar=hbar, spatial=td.spatial, gmats=gmats, taps=td.taps,
                            dims=td.dims, cp_rule=td.cp_rule, domain=modem.domain)


# ---------------------------------------------------------------------------
# QPSK mapping
# ---------------------------------------------------------------------------

def qpsk_map(bits: np.ndarray, symbol_energy: float = 1.0) -> np.ndarray:
    """Gray-mapped QPSK: bit pair (b0, b1) -> c*(1-2*b0) + 1j*c*(1-2*b1).

    c = sqrt(symbol_energy / 2), so 00 maps to c*(1+1j) and every symbol
    has energy `symbol_energy`.
    """
    bits = np.asarray(bits)
    require(bits.ndim == 1 and bits.size % 2 == 0, "bit vector length must be even")
    require(bool(np.all((bits == 0) | (bits == 1))), "bits must be 0/1 valued")
    c = np.sqrt(symbol_energy / 2.0)
    pairs = bits.reshape(-1, 2)
    return c * ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1]))


def qpsk_demap(symbols: np.ndarray) -> np.ndarray:
    """Sign-slicing demapper, inverse of `qpsk_map` for any positive energy."""
    symbols = np.asarray(symbols)
    bits = np.empty(symbols.size * 2, dtype=np.int64)
    bits[0::2] = symbols.real < 0
    bits[1::2] = symbols.imag < 0
    return bits
