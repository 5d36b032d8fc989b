"""Monte-Carlo BER experiments, SIM-optimization runs, and channel exports.

One trial = one frame: draw a path set, (optionally) optimize the SIM
phases on it, assemble the waveform effective channel, normalize, map
bits, push the frame through the time-domain channel, demodulate, detect,
and count bit errors.  Every trial derives its own Philox stream from
(master seed, SNR index, trial index), so results are identical for any
worker count and any execution order.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (EffectiveChannel, FrameDims, MimoLink, PathConfig, PathSet,
                      apply_channel, assemble_hbar, sample_paths)
from .config import ExperimentConfig
from .detectors import GabpDetector, LmmseDetector, ZfDetector
from .errors import ConfigurationError, require
from .metasurface import RisPanel, SimLayerGeometry, build_sim_stack
from .optimizer import AscentConfig, AscentResult, ObjectiveContext, ascend
from .rng import spawn_rng
from .waveforms import effective_channel, modem_for, qpsk_demap, qpsk_map

__all__ = [
    "BerRecord", "run_ber", "run_optimize", "export_channel",
    "build_base_link", "path_config_from", "build_detector",
    "write_ber_csv", "write_channel_csv", "write_trace_csv", "write_gabp_trace",
    "write_resolved_config", "SCHEMA_HEADER",
]

SCHEMA_HEADER = "# mpdd-sim schema v1"


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    trials: int
    bit_errors: int
    ber: float
    waveform: str
    detector: str
    sim_mode: str


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

def build_base_link(cfg: ExperimentConfig) -> MimoLink:
    """Link with zero-phase stacks and zero-phase RIS panels (built once per run)."""
    tx_stack = rx_stack = None
    if cfg.sim.mode != "none":
        geometry = SimLayerGeometry(
            atoms_x=cfg.sim.atoms_x, atoms_z=cfg.sim.atoms_z,
            layer_spacing=cfg.sim.layer_spacing, atom_spacing=cfg.sim.atom_spacing,
            atom_area=cfg.sim.atom_spacing**2, feed_spacing=cfg.sim.feed_spacing)
        tx_stack = build_sim_stack("tx", cfg.sim.tx_layers, geometry, cfg.system.n_tx,
                                   assume_normal_incidence=cfg.sim.assume_normal_incidence)
        rx_stack = build_sim_stack("rx", cfg.sim.rx_layers, geometry, cfg.system.n_rx,
                                   assume_normal_incidence=cfg.sim.assume_normal_incidence)
    panels = tuple(
        RisPanel(cfg.ris.atoms_x, cfg.ris.atoms_z, np.zeros(cfg.ris.atoms_x * cfg.ris.atoms_z))
        for _ in range(cfg.ris.count))
    return MimoLink(n_tx=cfg.system.n_tx, n_rx=cfg.system.n_rx,
                    tx_stack=tx_stack, rx_stack=rx_stack, ris=panels)


def path_config_from(cfg: ExperimentConfig) -> PathConfig:
    ch = cfg.channel
    return PathConfig(
        num_paths=ch.paths, max_delay=ch.max_delay, max_doppler=ch.max_doppler,
        num_ris=cfg.ris.count,
        ris_inbound_paths=ch.ris_inbound_paths if cfg.ris.count else 0,
        ris_outbound_paths=ch.ris_outbound_paths if cfg.ris.count else 0,
        delays=tuple(int(d) for d in ch.delays) if ch.delays is not None else None,
        dopplers=tuple(float(f) for f in ch.dopplers) if ch.dopplers is not None else None)


def frame_dims_from(cfg: ExperimentConfig, link: MimoLink) -> FrameDims:
    wf = cfg.waveform
    return FrameDims(num_symbols=wf.num_symbols, num_streams=link.d_s,
                     otfs_rows=wf.otfs_rows, otfs_cols=wf.otfs_cols)


def build_modem(cfg: ExperimentConfig, dims: FrameDims):
    return modem_for(cfg.waveform.kind, dims, chirp_rate=cfg.waveform.afdm_chirp,
                     chirp_rate2=cfg.waveform.afdm_chirp2,
                     max_doppler=cfg.channel.max_doppler)


def build_detector(cfg: ExperimentConfig, noise_var: float):
    det = cfg.detector
    if det.kind == "gabp":
        return GabpDetector(noise_var=noise_var, symbol_energy=det.symbol_energy,
                            max_iters=det.max_iters, damping=det.damping)
    if det.kind == "lmmse":
        return LmmseDetector(noise_var=noise_var)
    if det.kind == "zf":
        return ZfDetector()
    raise ConfigurationError(f"unknown detector kind {det.kind!r}")


def _ascent_config(cfg: ExperimentConfig) -> AscentConfig:
    s = cfg.sim
    return AscentConfig(max_iters=s.opt_max_iters, step_scale=s.opt_step_scale,
                        step_decay=s.opt_step_decay, tol=s.opt_tol, patience=s.opt_patience)


def _randomize_ris(link: MimoLink, cfg: ExperimentConfig, rng) -> MimoLink:
    if not link.ris or cfg.ris.phase_mode != "random":
        return link
    panels = tuple(dataclasses.replace(p, phases=rng.uniform(0.0, 2.0 * np.pi, p.num_atoms))
                   for p in link.ris)
    return dataclasses.replace(link, ris=panels)


def _prepare_channel(cfg: ExperimentConfig, link: MimoLink, paths: PathSet,
                     dims: FrameDims, modem) -> tuple[EffectiveChannel, EffectiveChannel]:
    """Assemble TD + waveform channels and apply equal-power normalization."""
    td = assemble_hbar(paths, link, dims, modem.cp_rule)
    wf = effective_channel(modem, td)
    if cfg.equal_power:
        norm = wf.frobenius_norm
        require(norm > 0, "cannot power-normalize an all-zero channel")
        factor = np.sqrt(dims.frame_size) / norm
        td = td.rescaled(factor)
        wf = wf.rescaled(factor)
    return td, wf


def _trial_link(cfg: ExperimentConfig, base: MimoLink, paths: PathSet, rng) -> MimoLink:
    """Per-trial link: random RIS phases if requested, optimized SIM if requested."""
    link = _randomize_ris(base, cfg, rng)
    if cfg.sim.mode == "optimized":
        ctx = ObjectiveContext.from_paths(paths.direct, link.tx_stack, link.rx_stack)
        result = ascend(ctx, _ascent_config(cfg))
        link = dataclasses.replace(
            link,
            tx_stack=link.tx_stack.with_phases(result.tx_phases),
            rx_stack=link.rx_stack.with_phases(result.rx_phases))
    return link


def _one_trial(cfg: ExperimentConfig, base: MimoLink, snr_idx: int, trial: int,
               noise_var: float) -> tuple[int, int]:
    """Returns (bit errors, bits transmitted) for one seeded frame."""
    rng = spawn_rng(cfg.seed, snr_idx, trial)
    paths = sample_paths(rng, path_config_from(cfg))
    link = _trial_link(cfg, base, paths, rng)
    dims = frame_dims_from(cfg, link)
    modem = build_modem(cfg, dims)
    td, wf = _prepare_channel(cfg, link, paths, dims, modem)

    bits = rng.integers(0, 2, size=2 * dims.frame_size)
    symbols = qpsk_map(bits, cfg.detector.symbol_energy)
    sent = modem.modulate(symbols)
    received = apply_channel(td, sent, noise_var, rng)
    observed = modem.demodulate(received)

    detector = build_detector(cfg, noise_var).fit(wf)
    estimates = detector.predict(observed)
    errors = int(np.sum(qpsk_demap(estimates) != bits))
    return errors, bits.size


def _trial_block(args) -> tuple[int, int]:
    cfg, base, snr_idx, trials, noise_var = args
    errors = bits = 0
    for trial in trials:
        e, b = _one_trial(cfg, base, snr_idx, trial, noise_var)
        errors += e
        bits += b
    return errors, bits


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def run_ber(cfg: ExperimentConfig) -> list[BerRecord]:
    """Sweep SNR points, auto-scaling trials to `min_bit_errors` per point.

    Fully deterministic for a fixed (config, seed): trial streams are keyed
    by index and the adaptive stop depends only on accumulated counts.
    """
    require(cfg.seed is not None, "ber runs require a seed")
    cfg.validate()
    base = build_base_link(cfg)
    block = 1 if cfg.workers == 1 else 4 * cfg.workers
    records = []
    pool = ProcessPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for snr_idx, snr_db in enumerate(cfg.sweep.snr_db):
            noise_var = cfg.detector.symbol_energy * 10.0 ** (-float(snr_db) / 10.0)
            errors = 0
            bits = 0
            trials_done = 0
            while trials_done < cfg.sweep.max_trials and (
                    trials_done == 0 or errors < cfg.sweep.min_bit_errors):
                upto = min(trials_done + block, cfg.sweep.max_trials)
                indices = list(range(trials_done, upto))
                if pool is None:
                    got = _trial_block((cfg, base, snr_idx, indices, noise_var))
                else:
                    chunks = [indices[i::cfg.workers] for i in range(cfg.workers)]
                    payloads = [(cfg, base, snr_idx, chunk, noise_var)
                                for chunk in chunks if chunk]
                    parts = list(pool.map(_trial_block, payloads))
                    got = (sum(p[0] for p in parts), sum(p[1] for p in parts))
                errors += got[0]
                bits += got[1]
                trials_done = upto
            records.append(BerRecord(
                snr_db=float(snr_db), trials=trials_done, bit_errors=errors,
                ber=errors / bits if bits else 0.0, waveform=cfg.waveform.kind,
                detector=cfg.detector.kind, sim_mode=cfg.sim.mode))
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def run_optimize(cfg: ExperimentConfig) -> AscentResult:
    """Draw one seeded path set and run the SIM phase ascent on it."""
    cfg.validate()
    require(cfg.sim.mode != "none", "optimize-sim needs a SIM (sim.mode != 'none')")
    base = build_base_link(cfg)
    rng = spawn_rng(cfg.seed if cfg.seed is not None else 0)
    paths = sample_paths(rng, path_config_from(cfg))
    ctx = ObjectiveContext.from_paths(paths.direct, base.tx_stack, base.rx_stack)
    return ascend(ctx, _ascent_config(cfg))


def export_channel(cfg: ExperimentConfig, waveform: str | None = None
                   ) -> tuple[EffectiveChannel, PathSet]:
    """Build one seeded effective channel for inspection.

    `waveform` overrides the configured kind; "td" exports the raw
    time-domain assembly (under the configured waveform's CP rule).
    """
    cfg.validate()
    want_td = waveform == "td"
    if waveform is not None and not want_td:
        cfg = dataclasses.replace(cfg, waveform=dataclasses.replace(
            cfg.waveform, kind=waveform))
        cfg.waveform.validate()
    base = build_base_link(cfg)
    rng = spawn_rng(cfg.seed if cfg.seed is not None else 0)
    paths = sample_paths(rng, path_config_from(cfg))
    link = _trial_link(cfg, base, paths, rng)
    dims = frame_dims_from(cfg, link)
    modem = build_modem(cfg, dims)
    td, wf = _prepare_channel(cfg, link, paths, dims, modem)
    return (td if want_td else wf), paths


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def write_ber_csv(records: list[BerRecord], path: str | Path) -> None:
    lines = [SCHEMA_HEADER, "snr_db,trials,bit_errors,ber,waveform,detector,sim_mode"]
    for r in records:
        lines.append(f"{r.snr_db:.6g},{r.trials},{r.bit_errors},{r.ber:.8e},"
                     f"{r.waveform},{r.detector},{r.sim_mode}")
    Path(path).write_text("\n".join(lines) + "\n")


def band_offset(domain: str, delay: int, doppler: float, num_symbols: int,
                chirp_rate: float) -> int | None:
    """Expected (column - row) support diagonal of one path's block, when clean.

    Defined for integer Dopplers in the TD/OFDM domains and additionally
    integer 2*N*c1 in the AFDM domain; None otherwise (smeared support).
    """
    if abs(doppler - round(doppler)) > 1e-12:
        return None
    f = int(round(doppler))
    if domain == "td":
        return (-delay) % num_symbols
    if domain == "ofdm":
        return f % num_symbols
    if domain == "afdm":
        two_nc = 2.0 * num_symbols * chirp_rate
        if abs(two_nc - round(two_nc)) > 1e-9:
            return None
        return (f + int(round(two_nc)) * delay) % num_symbols
    return None


def write_channel_csv(chan: EffectiveChannel, path: str | Path) -> None:
    """|Hbar| as row-major CSV plus a .paths.csv sidecar with tap metadata."""
    path = Path(path)
    mag = np.abs(chan.hbar)
    header = (f"# channel-magnitude waveform={chan.domain} "
              f"num_symbols={chan.dims.num_symbols} streams={chan.dims.num_streams} "
              f"cp_chirp={chan.cp_rule.chirp_rate:.12g}")
    rows = [",".join(f"{v:.8e}" for v in row) for row in mag]
    path.write_text("\n".join([SCHEMA_HEADER, header] + rows) + "\n")

    sidecar = path.with_suffix(".paths.csv")
    lines = [SCHEMA_HEADER, "index,delay_taps,doppler,band_offset"]
    for i, (delay, doppler) in enumerate(chan.taps):
        offset = band_offset(chan.domain, delay, doppler, chan.dims.num_symbols,
                             chan.cp_rule.chirp_rate)
        lines.append(f"{i},{delay},{doppler:.12g},{'' if offset is None else offset}")
    sidecar.write_text("\n".join(lines) + "\n")


def write_trace_csv(result: AscentResult, path: str | Path) -> None:
    lines = [SCHEMA_HEADER, "iteration,objective,step_norm"]
    for i, obj in enumerate(result.trace):
        step = "" if i == 0 else f"{result.step_norms[i - 1]:.8e}"
        lines.append(f"{i},{obj:.12e},{step}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_gabp_trace(result, path: str | Path) -> None:
    lines = [SCHEMA_HEADER, "iteration,mean_residual,mean_variance"]
    for i in range(result.iterations):
        lines.append(f"{i + 1},{result.residual_trace[i]:.8e},{result.variance_trace[i]:.8e}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_resolved_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.resolved_json() + "\n")


def resolved_config_path(out_path: str | Path) -> Path:
    out = Path(out_path)
    return out.with_name(out.stem + ".config.json")


def summarize_records(records: list[BerRecord]) -> str:
    parts = [f"{r.snr_db:g} dB: ber={r.ber:.3e} ({r.bit_errors} errors / {r.trials} trials)"
             for r in records]
    return "\n".join(parts)
