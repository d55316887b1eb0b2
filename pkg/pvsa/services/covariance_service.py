"""
Covariance Service - Assembles the stacked power-change covariance.

Same phase:  dP-dP uses rho_pp and dQ-dQ uses rho_qq between distinct buses;
             dP-dQ uses rho_pq for any pair of buses, the same bus included.
Cross phase: dP-dP and dQ-dQ use rho_x; dP-dQ uses rho_x * rho_pq.
Non-actor entries are zero unless a background variance is configured,
in which case they are independent of everything else.
"""

import logging
from typing import Optional

import numpy as np
from scipy import linalg

from pvsa.config import settings
from pvsa.exceptions import NotPositiveSemidefinite
from pvsa.models.distribution import P, Q, PowerChangeCovariance, stacked_index
from pvsa.models.network import FeederGraph
from pvsa.models.phase import PHASES
from pvsa.models.scenario import StochasticScenario

logger = logging.getLogger(__name__)


def build_covariance(
    graph: FeederGraph,
    scenario: StochasticScenario,
    psd_tolerance: Optional[float] = None,
) -> PowerChangeCovariance:
    n = graph.n_buses
    rho = scenario.correlation
    actor_entries = []  # (stacked index, bus index, phase index, kind, std)
    actor_set = set()

    for actor in scenario.actors:
        i = graph.bus_index(actor.bus)
        actor_set.add(actor.bus)
        phases = actor.phases if actor.phases is not None else graph.phases_of(actor.bus)
        var_p = scenario.var_p if actor.var_p is None else actor.var_p
        var_q = scenario.var_q if actor.var_q is None else actor.var_q
        for phase in PHASES:
            if phase not in phases:
                continue
            actor_entries.append((stacked_index(n, phase, P, i), i, phase.index, P, np.sqrt(var_p)))
            actor_entries.append((stacked_index(n, phase, Q, i), i, phase.index, Q, np.sqrt(var_q)))

    # Repeated actor entries collapse to the last one listed.
    by_index = {entry[0]: entry for entry in actor_entries}
    entries = np.array(sorted(by_index.values()), dtype=float).reshape(-1, 5)
    index = entries[:, 0].astype(int)
    bus = entries[:, 1].astype(int)
    phase = entries[:, 2].astype(int)
    kind = entries[:, 3].astype(int)
    std = entries[:, 4]

    same_phase = phase[:, None] == phase[None, :]
    same_bus = bus[:, None] == bus[None, :]
    both_p = (kind[:, None] == P) & (kind[None, :] == P)
    both_q = (kind[:, None] == Q) & (kind[None, :] == Q)
    mixed = kind[:, None] != kind[None, :]

    correlation = np.zeros((len(index), len(index)))
    correlation[same_phase & both_p & ~same_bus] = rho.pp
    correlation[same_phase & both_q & ~same_bus] = rho.qq
    correlation[same_phase & mixed] = rho.pq
    correlation[~same_phase & (both_p | both_q)] = rho.cross_phase
    correlation[~same_phase & mixed] = rho.cross_phase * rho.pq
    np.fill_diagonal(correlation, 1.0)

    matrix = np.zeros((6 * n, 6 * n))
    matrix[np.ix_(index, index)] = correlation * np.outer(std, std)

    if scenario.background_var_p > 0 or scenario.background_var_q > 0:
        for i, bus_id in enumerate(graph.buses):
            if bus_id in actor_set:
                continue
            for ph in graph.phases_of(bus_id):
                matrix[stacked_index(n, ph, P, i), stacked_index(n, ph, P, i)] = scenario.background_var_p
                matrix[stacked_index(n, ph, Q, i), stacked_index(n, ph, Q, i)] = scenario.background_var_q

    if not actor_set:
        logger.warning(f"Scenario {scenario.name} has no actors; covariance is background only")

    covariance = PowerChangeCovariance(graph.buses, matrix, tuple(dict.fromkeys(a.bus for a in scenario.actors)))
    return ensure_psd(covariance, psd_tolerance)


def ensure_psd(covariance: PowerChangeCovariance, tolerance: Optional[float] = None) -> PowerChangeCovariance:
    """Check symmetry and positive semidefiniteness; clip tiny negative eigenvalues.

    Eigenvalues below -tolerance * trace / 6n are an error.
    """
    tolerance = settings.psd_tolerance if tolerance is None else tolerance
    matrix = covariance.matrix
    scale = max(float(np.max(np.abs(matrix))), np.finfo(float).tiny) if matrix.size else 1.0
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * scale):
        raise NotPositiveSemidefinite("covariance matrix is not symmetric")

    support = covariance.support
    if support.size == 0:
        return covariance
    block = matrix[np.ix_(support, support)]
    eigenvalues, eigenvectors = linalg.eigh(block)
    floor = -tolerance * covariance.trace / covariance.dimension
    smallest = float(eigenvalues[0])
    if smallest >= 0:
        return covariance
    if smallest < floor:
        raise NotPositiveSemidefinite(
            f"smallest eigenvalue {smallest:.4g} VA^2 is below the tolerance {floor:.4g} VA^2"
        )

    logger.warning(f"Covariance repaired by eigenvalue clipping (smallest eigenvalue {smallest:.3g} VA^2)")
    clipped = (eigenvectors * np.clip(eigenvalues, 0.0, None)) @ eigenvectors.T
    repaired = np.array(matrix)
    repaired[np.ix_(support, support)] = (clipped + clipped.T) / 2.0
    return PowerChangeCovariance(covariance.buses, repaired, covariance.actors)
