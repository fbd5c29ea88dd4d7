"""Load-coupled interference model for OFDMA networks with in-band relays.

A load vector ``x`` is a float array aligned with ``Scenario.link_tx`` /
``Scenario.link_rx``: one entry per candidate link ``(cell, node)``.  Entries
of links that are active under the current association carry interference;
the others are hypothetical loads ("what would this link need if it were
switched on") and are only read by the association map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9
MAX_ITER = 10_000
X_MAX = 10.0
LOAD_TOL = 1e-9

LN2 = np.log(2.0)


class AssociationError(ValueError):
    """Association references a cell outside a node's candidate set."""


def as_association(s, a):
    """Validate ``a`` against the candidate sets and return an int array."""
    a = np.asarray(a, dtype=int)
    if a.shape != (s.n_nodes,):
        raise AssociationError(f"association needs {s.n_nodes} entries, got {a.shape}")
    for j, c in enumerate(a):
        if int(c) not in s.candidates[j]:
            raise AssociationError(
                f"{s.node_name(j)} associated to {c}, not in candidates {s.candidates[j]}")
    return a


@dataclass(frozen=True, eq=False)
class LinkTopology:
    """Links, served sets, demands and orthogonality under one association.

    Attributes
    ----------
    assoc : ndarray
        Serving cell per node.
    active : ndarray of bool
        Per candidate link, whether it carries traffic.  A relay that serves
        no UE has no active backhaul.
    demand : ndarray
        Bit-rate demand ``r_ij`` per candidate link.  Hypothetical links carry
        the demand they would carry if switched on.
    served : tuple of tuple
        UE nodes served by each cell.
    relays : tuple of tuple
        Relay nodes with an active backhaul from each MC (empty for RCs).
    ortho : ndarray of bool, shape (n_links, n_links)
        ``ortho[l, m]``: link ``m`` belongs to the orthogonal set of link ``l``
        (as if ``l`` were active).  Only meaningful for active ``m``.
    coupling : ndarray, shape (n_links, n_active)
        ``p_v g_vj`` for each active link ``<v,u>`` interfering with ``<i,j>``.
    """

    scenario: object
    assoc: np.ndarray
    active: np.ndarray
    active_idx: np.ndarray
    demand: np.ndarray
    served: tuple
    relays: tuple
    ortho: np.ndarray
    coupling: np.ndarray

    def links(self):
        s = self.scenario
        return [(int(s.link_tx[k]), int(s.link_rx[k])) for k in self.active_idx]

    def ortho_set(self, link):
        """Orthogonal set of ``link`` = (cell, node) as a set of links.

        Contains the link itself plus every active link it must not collide
        with.
        """
        s = self.scenario
        l = s.link_index[link]
        members = np.flatnonzero(self.ortho[l] & self.active)
        out = {(int(s.link_tx[m]), int(s.link_rx[m])) for m in members}
        out.add(link)
        return out


def build_topology(s, a):
    a = as_association(s, a)
    n_ue = s.n_ue
    served = [[] for _ in range(s.n_cells)]
    for j in range(n_ue):
        served[a[j]].append(j)
    relay_load = np.zeros(s.n_rc)
    for k in range(s.n_rc):
        relay_load[k] = s.demand[served[s.n_mc + k]].sum() if served[s.n_mc + k] else 0.0
    busy = np.array([bool(served[s.n_mc + k]) for k in range(s.n_rc)], dtype=bool)
    relays = [[] for _ in range(s.n_cells)]
    for k in np.flatnonzero(busy):
        relays[a[n_ue + k]].append(n_ue + int(k))

    tx, rx = s.link_tx, s.link_rx
    is_relay_rx = rx >= n_ue
    # padded lookups so empty UE/relay sets index safely
    k = np.where(is_relay_rx, rx - n_ue, s.n_rc)
    u = np.where(is_relay_rx, n_ue, rx)
    demand = np.where(is_relay_rx, np.r_[relay_load, 0.0][k], np.r_[s.demand, 0.0][u])
    active = (tx == a[rx]) & (~is_relay_rx | np.r_[busy, False][k])

    ortho = _orthogonality(s, tx, rx)
    active_idx = np.flatnonzero(active)
    mask = ~ortho[:, active_idx]
    # a receiver never interferes with itself: its current link would be
    # released if it moved to a hypothetical one
    mask &= rx[:, None] != rx[active_idx][None, :]
    v = tx[active_idx]
    coupling = np.where(mask, s.power[v][None, :] * s.gain[v[None, :], rx[:, None]], 0.0)

    return LinkTopology(
        scenario=s, assoc=a, active=active, active_idx=active_idx,
        demand=demand.astype(float), served=tuple(tuple(x) for x in served),
        relays=tuple(tuple(x) for x in relays), ortho=ortho, coupling=coupling,
    )


def _orthogonality(s, tx, rx):
    """Pairwise orthogonality between candidate links.

    MC access or backhaul <i,j>: every link sent by i; a backhaul <i,k> also
    covers every access link sent by relay k.  Relay access <k,j>: every
    link sent by k and the backhaul into k.
    """
    tx_l, rx_l = tx[:, None], rx[None, :]
    same_tx = tx_l == tx[None, :]
    l_is_mc = (tx < s.n_mc)[:, None]
    l_to_relay = (rx >= s.n_ue)[:, None]
    # cell id of the relay a link points at / node id of the relay sending it
    rx_cell = np.where(rx >= s.n_ue, s.n_mc + rx - s.n_ue, -1)
    tx_node = np.where(tx >= s.n_mc, s.n_ue + tx - s.n_mc, -1)
    backhaul_cover = l_is_mc & l_to_relay & (tx[None, :] == rx_cell[:, None])
    into_relay = ~l_is_mc & (rx_l == tx_node[:, None])
    ortho = same_tx | backhaul_cover | into_relay
    np.fill_diagonal(ortho, True)
    return ortho


# ---------------------------------------------------------------------------
# SINR and load
# ---------------------------------------------------------------------------

def interference(topo, x):
    """Interference-plus-noise per candidate link (watts per RU)."""
    x = np.asarray(x, dtype=float)
    return topo.coupling @ x[topo.active_idx] + topo.scenario.noise


def sinr_vector(topo, x):
    return topo.scenario.signal / interference(topo, x)


def load_map(topo, x):
    """F(x): RU fraction each candidate link needs to meet its demand."""
    s = topo.scenario
    gamma = sinr_vector(topo, x)
    rate = s.spectrum * np.log1p(gamma) / LN2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(topo.demand > 0, topo.demand / rate, 0.0)
    return out


def sinr(topo, x, link):
    """SINR of one link ``(cell, node)`` under loads ``x``."""
    s = topo.scenario
    k = s.link_index[link]
    return float(s.signal[k] / (topo.coupling[k] @ np.asarray(x, float)[topo.active_idx] + s.noise))


def load_required(topo, x, link):
    """F_ij(x) for one link; ``inf`` when the link cannot carry its demand."""
    s = topo.scenario
    k = s.link_index[link]
    r = topo.demand[k]
    if r == 0:
        return 0.0
    gamma = sinr(topo, x, link)
    if gamma == 0:
        return float("inf")
    return float(r / (s.spectrum * np.log1p(gamma) / LN2))


# ---------------------------------------------------------------------------
# Fixed point
# ---------------------------------------------------------------------------

@dataclass
class FixedPointResult:
    loads: np.ndarray
    iterations: int
    converged: bool
    feasible: bool
    cell_load: np.ndarray
    energy: float
    residual: float
    topology: LinkTopology

    @property
    def association(self):
        return self.topology.assoc


def cell_loads(topo, x):
    """Per-cell RU usage: links sent by the cell plus, for relays, the backhaul in."""
    s = topo.scenario
    idx = topo.active_idx
    xa = np.asarray(x, dtype=float)[idx]
    out = np.bincount(s.link_tx[idx], weights=xa, minlength=s.n_cells)
    rx = s.link_rx[idx]
    bh = rx >= s.n_ue
    out += np.bincount(s.n_mc + rx[bh] - s.n_ue, weights=xa[bh], minlength=s.n_cells)
    return out


def energy(topo, x):
    """M * sum of p * x over active links."""
    s = topo.scenario
    idx = topo.active_idx
    return float(s.num_ru * np.dot(s.power[s.link_tx[idx]], np.asarray(x, float)[idx]))


def _residual(new, old):
    same = (new == old)  # also absorbs inf == inf on hypothetical links
    diff = np.where(same, 0.0, np.abs(new - old))
    return float(np.max(diff)) if diff.size else 0.0


def iterate(topo, x0, update=None, tol=TOL, max_iter=MAX_ITER, x_max=X_MAX,
            load_tol=LOAD_TOL):
    """Picard iteration of the load map, optionally restricted to ``update``.

    Entries outside the boolean mask ``update`` keep their ``x0`` value
    bit-for-bit.  Divergence (an active load still growing above ``x_max``, or non-finite)
    and exhausting ``max_iter`` are reported through ``converged=False``.
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.shape != topo.demand.shape:
        raise ValueError(f"load vector needs {topo.demand.shape[0]} entries")
    if np.any(x < 0):
        raise ValueError("starting loads must be nonnegative")
    converged = False
    residual = np.inf
    it = 0
    watch = topo.active if update is None else topo.active & update
    for it in range(1, max_iter + 1):
        new = load_map(topo, x)
        if update is not None:
            new = np.where(update, new, x)
        watched = new[watch]
        # from a start above the fixed point the iterates may exceed x_max
        # while decreasing; only growth beyond it counts as divergence
        growing = (watched > x_max) & (watched > x[watch])
        if not np.all(np.isfinite(watched)) or np.any(growing):
            x = new
            residual = np.inf
            break
        residual = _residual(new, x)
        x = new
        if residual <= tol:
            converged = True
            break
    cl = cell_loads(topo, x) if converged else np.full(topo.scenario.n_cells, np.inf)
    feasible = converged and bool(np.all(cl <= 1.0 + load_tol))
    return FixedPointResult(
        loads=x, iterations=it, converged=converged, feasible=feasible,
        cell_load=cl, energy=energy(topo, x) if converged else np.inf,
        residual=residual, topology=topo,
    )


def fixed_point(s, a, x0=None, tol=TOL, max_iter=MAX_ITER, x_max=X_MAX,
                load_tol=LOAD_TOL):
    """Solve x = F(x) under association ``a``, starting from ``x0`` (default 0)."""
    topo = a if isinstance(a, LinkTopology) else build_topology(s, a)
    if x0 is None:
        x0 = np.zeros(s.n_links)
    return iterate(topo, x0, tol=tol, max_iter=max_iter, x_max=x_max, load_tol=load_tol)
