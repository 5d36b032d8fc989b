"""Receive-power maximization over SIM phases by normalized gradient ascent.

The objective is the total receive power summed over the direct paths,

    O = sum_p || h_p * Y_R R_RX^(1/2) B_p R_TX^(1/2) Y_T ||_F^2,

with identity digital beamformers and no RIS relays.  Per-layer gradients
are closed-form: with the cascade split around layer q, the objective is
linear in that layer's phasor vector and the gradient reduces to
``2*Im{conj(psi_q) * (chain^H @ o)}`` terms accumulated over paths and feed
antennas.  Prefix/suffix cascades are cached per iteration, and the
rank-one structure of each B_p keeps the per-path cost at O(M^2).

Updates follow steepest ascent with a decaying step and a per-side
normalization that caps the largest single phase move at pi per iteration.
Phases are wrapped to [0, 2*pi) after every update.

Per-iteration cost: rebuilding the cascade caches is O(Q * M^3) per side,
the transfer products add O(P * M^2 * N_T), and each (path, layer) pair
contributes O(M^2 + M * N_T) on top -- so the dominant terms scale as
P*M^2*N_T + Q*M^3 + P*Q*N_T*M^2 per gradient evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from .arrays import upa_response
from .channel import DdPath
from .errors import ConfigurationError, NumericalFailure, require
from .metasurface import SimStack

__all__ = [
    "ObjectiveContext",
    "AscentConfig",
    "AscentResult",
    "objective_value",
    "grad_tx",
    "grad_rx",
    "ascend",
    "SimPhaseOptimizer",
]


@dataclass(frozen=True)
class ObjectiveContext:
    """Frozen problem data for the phase optimization.

    `gains` are the aperture-normalized path gains h_p * sqrt(M*Mtilde/P).
    `tx_corr_responses` / `rx_corr_responses` hold the correlation-root
    weighted aperture responses R^(1/2) b_p, cached once since they do not
    depend on the phases.  Delay/Doppler parameters never enter.
    """

    tx_stack: SimStack
    rx_stack: SimStack
    gains: np.ndarray
    tx_corr_responses: np.ndarray
    rx_corr_responses: np.ndarray

    @classmethod
    def from_paths(cls, paths: tuple[DdPath, ...], tx_stack: SimStack,
                   rx_stack: SimStack) -> "ObjectiveContext":
        require(tx_stack.side == "tx" and rx_stack.side == "rx",
                "context needs a TX stack and an RX stack")
        num = len(paths)
        gains = np.zeros(num, dtype=complex)
        tx_resp = np.zeros((num, tx_stack.num_atoms), dtype=complex)
        rx_resp = np.zeros((num, rx_stack.num_atoms), dtype=complex)
        norm = np.sqrt(tx_stack.num_atoms * rx_stack.num_atoms / num) if num else 0.0
        for p, path in enumerate(paths):
            gains[p] = norm * path.gain
            bt = upa_response(tx_stack.geometry.upa_spec,
                              path.angles.azimuth_out, path.angles.elevation_out)
            br = upa_response(rx_stack.geometry.upa_spec,
                              path.angles.azimuth_in, path.angles.elevation_in)
            tx_resp[p] = tx_stack.correlation_root @ bt
            rx_resp[p] = rx_stack.correlation_root @ br
        return cls(tx_stack=tx_stack, rx_stack=rx_stack, gains=gains,
                   tx_corr_responses=tx_resp, rx_corr_responses=rx_resp)

    @property
    def num_paths(self) -> int:
        return self.gains.size

    def with_phases(self, tx_phases: np.ndarray, rx_phases: np.ndarray) -> "ObjectiveContext":
        return replace(self, tx_stack=self.tx_stack.with_phases(tx_phases),
                       rx_stack=self.rx_stack.with_phases(rx_phases))


def _tx_cascade(stack: SimStack) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Prefix chains, feed-side partial products, and the full TX transfer.

    prefixes[q-1] multiplies everything outward of layer q (identity for
    the outermost layer); s_mats[q-1] is the field arriving at layer q from
    each feed antenna, before that layer's phase shift.
    """
    q_total = stack.num_layers
    shifts = np.exp(1j * stack.phases)
    s_mats = [stack.couplings[0]]
    for q in range(1, q_total):
        s_mats.append(stack.couplings[q] @ (shifts[q - 1][:, None] * s_mats[q - 1]))
    prefixes = [np.eye(stack.num_atoms, dtype=complex)]
    for q in range(q_total - 1, 0, -1):
        # prefix for layer q = prefix for layer q+1 times (Psi Gamma) of layer q+1
        prefixes.append(prefixes[-1] @ (shifts[q][:, None] * stack.couplings[q]))
    prefixes.reverse()
    transfer = shifts[q_total - 1][:, None] * s_mats[q_total - 1]
    return prefixes, s_mats, transfer


def _rx_cascade(stack: SimStack) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Antenna-side prefixes, outer-side suffixes, and the full RX transfer.

    prefixes[q-1] maps layer-q fields to the antennas (phase of layer q not
    included); suffixes[q-1] maps the correlated outer-layer field into
    layer q.
    """
    q_total = stack.num_layers
    shifts = np.exp(1j * stack.phases)
    prefixes = [stack.couplings[0]]
    for q in range(1, q_total):
        prefixes.append((prefixes[q - 1] * shifts[q - 1][None, :]) @ stack.couplings[q])
    suffixes = [np.eye(stack.num_atoms, dtype=complex)]
    for q in range(q_total - 1, 0, -1):
        suffixes.append(stack.couplings[q] @ (shifts[q][:, None] * suffixes[-1]))
    suffixes.reverse()
    transfer = prefixes[q_total - 1] * shifts[q_total - 1][None, :]
    return prefixes, suffixes, transfer


def _path_vectors(ctx: ObjectiveContext, tx_transfer: np.ndarray,
                  rx_transfer: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-path receive vectors (P, N_R) and feed rows (P, N_T)."""
    lefts = ctx.rx_corr_responses @ rx_transfer.T
    rights = ctx.tx_corr_responses.conj() @ tx_transfer
    return lefts, rights


def objective_value(ctx: ObjectiveContext) -> float:
    """Total receive power over the direct paths for the current phases."""
    if ctx.num_paths == 0:
        return 0.0
    _, _, tx_transfer = _tx_cascade(ctx.tx_stack)
    _, _, rx_transfer = _rx_cascade(ctx.rx_stack)
    lefts, rights = _path_vectors(ctx, tx_transfer, rx_transfer)
    left_sq = np.sum(np.abs(lefts) ** 2, axis=1)
    right_sq = np.sum(np.abs(rights) ** 2, axis=1)
    return float(np.sum(np.abs(ctx.gains) ** 2 * left_sq * right_sq))


def _all_gradients(ctx: ObjectiveContext) -> tuple[np.ndarray, np.ndarray]:
    """Gradients for every TX layer (Q, M) and every RX layer (Qr, Mr)."""
    tx_prefixes, tx_smats, tx_transfer = _tx_cascade(ctx.tx_stack)
    rx_prefixes, rx_suffixes, rx_transfer = _rx_cascade(ctx.rx_stack)
    lefts, rights = _path_vectors(ctx, tx_transfer, rx_transfer)
    gain_sq = np.abs(ctx.gains) ** 2
    left_sq = np.sum(np.abs(lefts) ** 2, axis=1)
    right_sq = np.sum(np.abs(rights) ** 2, axis=1)

    tx_shifts = np.exp(1j * ctx.tx_stack.phases)
    tx_grads = np.zeros_like(ctx.tx_stack.phases)
    for q in range(ctx.tx_stack.num_layers):
        acc = np.zeros(ctx.tx_stack.num_atoms, dtype=complex)
        for p in range(ctx.num_paths):
            # chain^H o summed over feed antennas, collapsed by rank-one B_p
            through = tx_prefixes[q].conj().T @ ctx.tx_corr_responses[p]
            weights = tx_smats[q] @ rights[p].conj()
            acc += (gain_sq[p] * left_sq[p]) * (through * weights.conj())
        tx_grads[q] = 2.0 * np.imag(tx_shifts[q].conj() * acc)

    rx_shifts = np.exp(1j * ctx.rx_stack.phases)
    rx_grads = np.zeros_like(ctx.rx_stack.phases)
    for q in range(ctx.rx_stack.num_layers):
        acc = np.zeros(ctx.rx_stack.num_atoms, dtype=complex)
        for p in range(ctx.num_paths):
            arriving = rx_suffixes[q] @ ctx.rx_corr_responses[p]
            collected = rx_prefixes[q].conj().T @ lefts[p]
            acc += (gain_sq[p] * right_sq[p]) * (arriving.conj() * collected)
        rx_grads[q] = 2.0 * np.imag(rx_shifts[q].conj() * acc)

    return tx_grads, rx_grads


def grad_tx(ctx: ObjectiveContext, layer: int) -> np.ndarray:
    """Objective gradient w.r.t. the TX-side phases of `layer` (1-based)."""
    require(1 <= layer <= ctx.tx_stack.num_layers,
            f"TX layer {layer} out of range 1..{ctx.tx_stack.num_layers}")
    if ctx.num_paths == 0:
        return np.zeros(ctx.tx_stack.num_atoms)
    return _all_gradients(ctx)[0][layer - 1]


def grad_rx(ctx: ObjectiveContext, layer: int) -> np.ndarray:
    """Objective gradient w.r.t. the RX-side phases of `layer` (1-based)."""
    require(1 <= layer <= ctx.rx_stack.num_layers,
            f"RX layer {layer} out of range 1..{ctx.rx_stack.num_layers}")
    if ctx.num_paths == 0:
        return np.zeros(ctx.rx_stack.num_atoms)
    return _all_gradients(ctx)[1][layer - 1]


@dataclass(frozen=True)
class AscentConfig:
    """Steepest-ascent schedule: step = step_scale * step_decay**i, in (0, 1)."""

    max_iters: int = 100
    step_scale: float = 0.9
    step_decay: float = 0.98
    tol: float = 1e-8
    patience: int = 5

    def __post_init__(self) -> None:
        require(self.max_iters >= 0, "max_iters must be >= 0")
        require(0.0 < self.step_scale < 1.0, "step_scale must lie in (0, 1)")
        require(0.0 < self.step_decay <= 1.0, "step_decay must lie in (0, 1]")
        require(self.tol >= 0.0 and self.patience >= 1, "tol must be >= 0 and patience >= 1")


@dataclass(frozen=True)
class AscentResult:
    tx_phases: np.ndarray
    rx_phases: np.ndarray
    trace: np.ndarray
    step_norms: np.ndarray
    iterations: int


def _normalizer(grads: np.ndarray) -> float:
    """pi over the largest absolute gradient entry; zero for a vanishing gradient."""
    peak = float(np.max(np.abs(grads))) if grads.size else 0.0
    return np.pi / peak if peak > 1e-30 else 0.0


def ascend(ctx: ObjectiveContext, cfg: AscentConfig = AscentConfig()) -> AscentResult:
    """Run the two-sided phase ascent and log the objective each iteration.

    Stops early once the objective moved by less than `tol` (relatively)
    across the last `patience` iterations.  Raises NumericalFailure on a
    non-finite gradient.
    """
    work = ctx
    trace = [objective_value(work)]
    step_norms: list[float] = []
    for i in range(cfg.max_iters):
        tx_grads, rx_grads = _all_gradients(work)
        if not (np.all(np.isfinite(tx_grads)) and np.all(np.isfinite(rx_grads))):
            raise NumericalFailure(f"non-finite phase gradient at iteration {i}")
        step = cfg.step_scale * cfg.step_decay**i
        tx_update = step * _normalizer(tx_grads) * tx_grads
        rx_update = step * _normalizer(rx_grads) * rx_grads
        tx_phases = np.mod(work.tx_stack.phases + tx_update, 2.0 * np.pi)
        rx_phases = np.mod(work.rx_stack.phases + rx_update, 2.0 * np.pi)
        work = work.with_phases(tx_phases, rx_phases)
        trace.append(objective_value(work))
        step_norms.append(float(np.sqrt(np.sum(tx_update**2) + np.sum(rx_update**2))))
        if len(trace) > cfg.patience:
            window = trace[-(cfg.patience + 1):]
            span = max(window) - min(window)
            if span <= cfg.tol * max(abs(trace[-1]), 1e-30):
                break
    return AscentResult(tx_phases=work.tx_stack.phases, rx_phases=work.rx_stack.phases,
                        trace=np.asarray(trace), step_norms=np.asarray(step_norms),
                        iterations=len(step_norms))


class SimPhaseOptimizer(BaseEstimator):
    """Estimator wrapper around `ascend`.

    After `fit(context)`, the optimized configuration is available as
    `tx_phases_` / `rx_phases_` with the objective log in `trace_`.
    """

    def __init__(self, max_iters: int = 100, step_scale: float = 0.9,
                 step_decay: float = 0.98, tol: float = 1e-8, patience: int = 5):
        self.max_iters = max_iters
        self.step_scale = step_scale
        self.step_decay = step_decay
        self.tol = tol
        self.patience = patience

    def _config(self) -> AscentConfig:
        return AscentConfig(max_iters=self.max_iters, step_scale=self.step_scale,
                            step_decay=self.step_decay, tol=self.tol, patience=self.patience)

    def fit(self, context: ObjectiveContext, y=None) -> "SimPhaseOptimizer":
        if not isinstance(context, ObjectiveContext):
            raise ConfigurationError("SimPhaseOptimizer.fit expects an ObjectiveContext")
        result = ascend(context, self._config())
        self.tx_phases_ = result.tx_phases
        self.rx_phases_ = result.rx_phases
        self.trace_ = result.trace
        self.step_norms_ = result.step_norms
        self.n_iter_ = result.iterations
        return self
