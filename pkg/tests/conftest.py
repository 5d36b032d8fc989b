"""Shared fixtures and reference oracles.

The oracles here are deliberately written as plain scalar loops, separate
from the vectorized library paths they check.
"""

import numpy as np
import pytest

from mpdd_sim import (MimoLink, ObjectiveContext, PathConfig, SimLayerGeometry,
                      ZERO_CP_RULE, build_sim_stack, sample_paths, spatial_factor,
                      ris_spatial_factor)


def td_reference(pathset, link, dims, signal, cp_rule=ZERO_CP_RULE):
    """Direct per-sample evaluation of the sampled circular-convolution sum.

    Sums over direct and RIS-relayed paths with the shared Doppler phase
    convention exp(-2j*pi*f*n/N); independent of the Kronecker assembly.
    """
    n, ds = dims.num_symbols, dims.num_streams
    tx, rx = link.tx_chain(), link.rx_chain()
    s = np.asarray(signal).reshape(ds, n)
    out = np.zeros((ds, n), dtype=complex)

    terms = []
    p = len(pathset.direct)
    for path in pathset.direct:
        scale = np.sqrt(link.tx_aperture_size * link.rx_aperture_size / p) * path.gain
        hmat = spatial_factor(path, link, scale, tx_chain=tx, rx_chain=rx)
        terms.append((hmat, path.delay_taps, path.doppler_norm))
    for k, legs in enumerate(pathset.ris_legs):
        if not (legs.inbound and legs.outbound):
            continue
        panel = link.ris[k]
        relay = panel.num_atoms * np.sqrt(
            link.tx_aperture_size * link.rx_aperture_size
            / (len(legs.outbound) * len(legs.inbound)))
        for ob in legs.outbound:
            for ib in legs.inbound:
                hmat = ris_spatial_factor(ob, ib, panel, link, relay * ob.gain * ib.gain,
                                          tx_chain=tx, rx_chain=rx)
                terms.append((hmat, ob.delay_taps + ib.delay_taps,
                              ob.doppler_norm + ib.doppler_norm))

    for hmat, delay, doppler in terms:
        theta = cp_rule.theta_diag(delay, n)
        for nn in range(n):
            phase = theta[nn] * np.exp(-2j * np.pi * doppler * nn / n)
            out[:, nn] += phase * (hmat @ s[:, (nn - delay) % n])
    return out.reshape(-1)


def support_offsets(block, threshold_scale=1e-9):
    """Set of occupied (column - row) mod N diagonals of a square block."""
    block = np.asarray(block)
    n = block.shape[0]
    mask = np.abs(block) > threshold_scale * np.abs(block).max()
    rows, cols = np.nonzero(mask)
    return {int((c - r) % n) for r, c in zip(rows, cols)}


@pytest.fixture(scope="session")
def toy_geometry():
    return SimLayerGeometry(atoms_x=2, atoms_z=2, layer_spacing=2.0)


@pytest.fixture(scope="session")
def toy_stacks(toy_geometry):
    tx = build_sim_stack("tx", 2, toy_geometry, 2)
    rx = build_sim_stack("rx", 2, toy_geometry, 2)
    return tx, rx


@pytest.fixture(scope="session")
def toy_link(toy_stacks):
    tx, rx = toy_stacks
    return MimoLink(n_tx=2, n_rx=2, tx_stack=tx, rx_stack=rx)


def toy_context(seed, *, num_paths=2, atoms=2, layers=2, antennas=2):
    """Random small optimization instance with randomized phases."""
    geom = SimLayerGeometry(atoms_x=atoms, atoms_z=atoms, layer_spacing=2.0)
    rng = np.random.default_rng(seed)
    tx = build_sim_stack("tx", layers, geom, antennas,
                         phases=rng.uniform(0, 2 * np.pi, (layers, atoms * atoms)))
    rx = build_sim_stack("rx", layers, geom, antennas,
                         phases=rng.uniform(0, 2 * np.pi, (layers, atoms * atoms)))
    paths = sample_paths(seed, PathConfig(num_paths=num_paths, max_delay=4, max_doppler=1.5))
    return ObjectiveContext.from_paths(paths.direct, tx, rx)
