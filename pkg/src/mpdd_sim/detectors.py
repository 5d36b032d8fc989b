"""Symbol detectors for the generic model y = Hbar x + w.

`GabpDetector` runs Gaussian belief propagation with a Jacobi schedule:
every (observation, symbol) pair keeps a soft replica and its variance;
each iteration performs soft interference cancellation, extrinsic
combining, QPSK tanh denoising, and damping of both means and variances,
with a final consensus readout over all observations.  `LmmseDetector`
and `ZfDetector` are the linear baselines.

All detectors follow the scikit-learn estimator protocol: configure in
``__init__``, bind a channel with ``fit``, then ``predict`` received
vectors.  Exclusion sums (over all-but-one entry) are evaluated as
full-sum-minus-term, recomputed from scratch every iteration, which keeps
the per-iteration work linear in the channel size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .channel import EffectiveChannel
from .errors import ConfigurationError, NumericalFailure, require

__all__ = ["GabpDetector", "GabpResult", "LmmseDetector", "ZfDetector"]

# Floor for variances/precisions before division (a zero extrinsic variance
# is a perfect belief; the floor keeps the update finite).
VARIANCE_FLOOR = 1e-12


def _channel_matrix(channel: EffectiveChannel | np.ndarray) -> np.ndarray:
    hbar = channel.hbar if isinstance(channel, EffectiveChannel) else np.asarray(channel)
    require(hbar.ndim == 2, "channel must be a matrix")
    return hbar


@dataclass(frozen=True)
class GabpResult:
    """Detector output: consensus estimates plus per-iteration diagnostics."""

    estimates: np.ndarray
    iterations: int
    residual_trace: np.ndarray
    variance_trace: np.ndarray
    ops_per_iteration: float | None = None


class GabpDetector(BaseEstimator):
    """Gaussian belief propagation detector for QPSK symbols.

    Parameters
    ----------
    noise_var : float
        Per-entry complex noise variance; must be positive.
    symbol_energy : float
        Average constellation energy E_S; the denoiser amplitude is
        sqrt(E_S / 2).
    max_iters : int
        Message-passing iterations.
    damping : float
        Convex damping weight on the new means/variances, in (0, 1].
    count_ops : bool
        When set, tally the elementwise work per iteration (used by the
        linear-complexity regression check).
    """

    def __init__(self, noise_var: float = 1e-2, symbol_energy: float = 1.0,
                 max_iters: int = 24, damping: float = 0.5, count_ops: bool = False):
        self.noise_var = noise_var
        self.symbol_energy = symbol_energy
        self.max_iters = max_iters
        self.damping = damping
        self.count_ops = count_ops

    def fit(self, channel: EffectiveChannel | np.ndarray, y=None) -> "GabpDetector":
        if self.noise_var <= 0:
            raise ConfigurationError(f"GaBP needs a positive noise variance, got {self.noise_var}")
        require(self.symbol_energy > 0, "symbol_energy must be positive")
        require(self.max_iters >= 1, "max_iters must be >= 1")
        require(0.0 < self.damping <= 1.0, "damping must lie in (0, 1]")
        self.channel_ = _channel_matrix(channel).astype(complex)
        self.abs2_ = np.abs(self.channel_) ** 2
        return self

    def detect(self, y: np.ndarray) -> GabpResult:
        """Full detection pass returning estimates and iteration diagnostics."""
        h = self.channel_
        abs2 = self.abs2_
        n_obs, n_sym = h.shape
        y = np.asarray(y, dtype=complex)
        require(y.shape == (n_obs,), f"observation must have shape ({n_obs},), got {y.shape}")

        es = self.symbol_energy
        beta = self.damping
        amp = np.sqrt(es / 2.0)
        hconj = h.conj()

        means = np.zeros((n_obs, n_sym), dtype=complex)
        variances = np.full((n_obs, n_sym), es)

        residual_trace = np.empty(self.max_iters)
        variance_trace = np.empty(self.max_iters)
        ops = 0
        sic = np.empty(0)
        sic_var = np.empty(0)

        for it in range(self.max_iters):
            # Soft interference cancellation (sum over e != m as full sum minus term)
            contrib = h * means
            sic = (y - contrib.sum(axis=1))[:, None] + contrib
            weighted = abs2 * variances
            sic_var = (weighted.sum(axis=1) + self.noise_var)[:, None] - weighted
            np.clip(sic_var, VARIANCE_FLOOR, None, out=sic_var)

            # Extrinsic combining over all observations but the current one
            precision = abs2 / sic_var
            ratio = hconj * sic / sic_var
            ext_precision = precision.sum(axis=0)[None, :] - precision
            np.clip(ext_precision, VARIANCE_FLOOR, None, out=ext_precision)
            ext_var = 1.0 / ext_precision
            ext_mean = ext_var * (ratio.sum(axis=0)[None, :] - ratio)

            # QPSK tanh denoiser on the extrinsic beliefs
            gain = 2.0 * amp / ext_var
            denoised = amp * (np.tanh(gain * ext_mean.real) + 1j * np.tanh(gain * ext_mean.imag))
            if not np.all(np.isfinite(denoised)):
                raise NumericalFailure(f"non-finite GaBP beliefs at iteration {it}")

            # Damp means, then refresh and damp variances from the damped means
            means = beta * denoised + (1.0 - beta) * means
            fresh_var = es - np.abs(means) ** 2
            variances = beta * fresh_var + (1.0 - beta) * variances

            residual_trace[it] = float(np.mean(np.abs(y - (h * means).sum(axis=1))))
            variance_trace[it] = float(np.mean(variances))
            if self.count_ops:
                for block in (contrib, sic, weighted, sic_var, precision, ratio,
                              ext_precision, ext_var, ext_mean, denoised, means,
                              fresh_var, variances):
                    ops += block.size

        # Consensus over all observations from the final sIC signals
        weight = abs2 / sic_var
        numer = (hconj * sic / sic_var).sum(axis=0)
        denom = np.clip(weight.sum(axis=0), VARIANCE_FLOOR, None)
        estimates = numer / denom

        return GabpResult(estimates=estimates, iterations=self.max_iters,
                          residual_trace=residual_trace, variance_trace=variance_trace,
                          ops_per_iteration=ops / self.max_iters if self.count_ops else None)

    def predict(self, y: np.ndarray) -> np.ndarray:
        return self.detect(y).estimates


class LmmseDetector(BaseEstimator):
    """Linear MMSE detector: (H^H H + noise_var I)^-1 H^H y.

    The regularizer is the plain noise variance; set
    `scale_by_symbol_energy` for the noise_var / E_S variant.
    """

    def __init__(self, noise_var: float = 1e-2, scale_by_symbol_energy: bool = False,
                 symbol_energy: float = 1.0):
        self.noise_var = noise_var
        self.scale_by_symbol_energy = scale_by_symbol_energy
        self.symbol_energy = symbol_energy

    def fit(self, channel: EffectiveChannel | np.ndarray, y=None) -> "LmmseDetector":
        require(self.noise_var >= 0, f"noise variance must be >= 0, got {self.noise_var}")
        h = _channel_matrix(channel).astype(complex)
        reg = self.noise_var
        if self.scale_by_symbol_energy:
            require(self.symbol_energy > 0, "symbol_energy must be positive")
            reg = reg / self.symbol_energy
        gram = h.conj().T @ h + reg * np.eye(h.shape[1])
        try:
            self.filter_ = np.linalg.solve(gram, h.conj().T)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"LMMSE normal equations are singular: {exc}") from exc
        return self

    def predict(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        require(y.shape == (self.filter_.shape[1],), "observation length mismatch")
        return self.filter_ @ y


class ZfDetector(BaseEstimator):
    """Zero-forcing detector: (H^H H)^-1 H^H y.

    Refuses rank-deficient channels, reporting the Gram condition estimate.
    """

    def __init__(self, max_condition: float = 1e15):
        self.max_condition = max_condition

    def fit(self, channel: EffectiveChannel | np.ndarray, y=None) -> "ZfDetector":
        h = _channel_matrix(channel).astype(complex)
        gram = h.conj().T @ h
        condition = float(np.linalg.cond(gram))
        if not np.isfinite(condition) or condition > self.max_condition:
            raise NumericalFailure(
                f"channel is rank deficient for ZF (Gram condition ~ {condition:.3e})")
        self.condition_ = condition
        self.filter_ = np.linalg.solve(gram, h.conj().T)
        return self

    def predict(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        require(y.shape == (self.filter_.shape[1],), "observation length mismatch")
        return self.filter_ @ y
