"""Relay/cell selection for transmission-energy minimization.

The improvement test compares a candidate association against a reference
one without solving the candidate's full fixed point: only the nodes in a
subset ``t`` are iterated (asynchronous fixed-point iteration), the rest are
pinned to the reference loads, and two inequalities decide whether the
candidate is strictly better.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .coupling import (LOAD_TOL, MAX_ITER, TOL, X_MAX, as_association,
                       build_topology, cell_loads, fixed_point, iterate,
                       load_map)

log = logging.getLogger(__name__)

SUBSET_POLICIES = ("exact_l", "grow", "all")


class InfeasibleError(RuntimeError):
    """No feasible association / the given association is infeasible."""


class SearchSpaceError(RuntimeError):
    """Brute force asked to enumerate more associations than the guard allows."""


@dataclass(frozen=True)
class AlgorithmConfig:
    """Knobs of the relay-selection loop.

    ``subset_policy`` picks the node subset ``t`` for the improvement test:

    ``exact_l``
        only the nodes whose association changed;
    ``grow``
        start from the changed nodes and add every node that violates the
        pinned-entry condition until the test passes or ``t`` is everything;
    ``all``
        every node (the test then reduces to a full energy comparison).

    ``update_reference`` replaces the comparison reference with each accepted
    association instead of keeping the initial one.
    """

    eta: int = 50
    eps1: float = 1e-9
    eps2: float = 1e-9
    subset_policy: str = "grow"
    tol: float = TOL
    max_iter: int = MAX_ITER
    x_max: float = X_MAX
    load_tol: float = LOAD_TOL
    update_reference: bool = False

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ValueError("eps1 and eps2 must be nonnegative")
        if self.subset_policy not in SUBSET_POLICIES:
            raise ValueError(f"subset_policy must be one of {SUBSET_POLICIES}")

    @property
    def solver(self):
        return dict(tol=self.tol, max_iter=self.max_iter, x_max=self.x_max,
                    load_tol=self.load_tol)


def _node_mask(s, t):
    mask = np.zeros(s.n_nodes, dtype=bool)
    mask[list(t)] = True
    return mask


def _serving_links(s, a):
    return np.array([s.link_index[(int(a[j]), j)] for j in range(s.n_nodes)], dtype=int)


def changed_nodes(a_hat, a_check):
    return frozenset(int(j) for j in np.flatnonzero(np.asarray(a_hat) != np.asarray(a_check)))


def g_map(topo, x, t):
    """G(x, a, t): apply F to the entries of nodes in ``t``, keep the rest."""
    s = topo.scenario
    if not len(t):
        raise ValueError("t must be nonempty")
    in_t = _node_mask(s, t)[s.link_rx]
    return np.where(in_t, load_map(topo, x), x)


def g_update(topo, x, t, link):
    """Single entry of :func:`g_map` for ``link`` = (cell, node)."""
    if not len(t):
        raise ValueError("t must be nonempty")
    s = topo.scenario
    k = s.link_index[link]
    if link[1] in t:
        return float(load_map(topo, x)[k])
    return float(np.asarray(x)[k])


def async_fixed_point(s, a_hat, t, x_start, tol=TOL, max_iter=MAX_ITER, x_max=X_MAX,
                      load_tol=LOAD_TOL):
    """Fixed point of G(., a_hat, t) from ``x_start``.

    Entries belonging to nodes outside ``t`` are returned exactly as given.
    """
    if not len(t):
        raise ValueError("t must be nonempty")
    topo = build_topology(s, a_hat)
    update = _node_mask(s, t)[s.link_rx]
    return iterate(topo, x_start, update=update, tol=tol, max_iter=max_iter,
                   x_max=x_max, load_tol=load_tol)


@dataclass
class ImprovementVerdict:
    improved: bool
    cond_energy: bool
    cond_pinned: bool
    loads_ok: bool
    candidate_energy_bound: float
    reference_energy: float
    x_t: np.ndarray
    t: frozenset
    violators: frozenset


def check_improvement(s, a_hat, a_check, x_check, t, cfg=None, x_warm=None):
    """Decide whether ``a_hat`` needs strictly less energy than ``a_check``.

    ``x_check`` must be the converged load vector of ``a_check``.  The
    asynchronous iteration over ``t`` starts from ``x_check``; with
    ``x_warm`` the entries of nodes in ``t`` start from ``x_warm`` instead
    (their limit does not depend on the start).

    ``improved`` holds when (1) the energy of the nodes in ``t`` at the
    asynchronous fixed point is below their reference energy (``eps1``
    slack, energy units) and (2) no pinned entry would grow under F by more
    than ``eps2``.  Identical associations are never an improvement.
    Together the conditions imply the candidate's true energy is at
    most ``candidate_energy_bound``.  ``loads_ok`` reports whether the cell
    loads at that bound respect the full-load limit, which then certifies
    feasibility of ``a_hat`` as well.
    """
    cfg = cfg or AlgorithmConfig()
    a_hat = as_association(s, a_hat)
    a_check = as_association(s, a_check)
    t = frozenset(int(j) for j in t)
    if not t:
        raise ValueError("t must be nonempty")
    l = changed_nodes(a_hat, a_check)
    if not l <= t:
        raise ValueError("t must contain every node whose association changed")

    x_check = np.asarray(x_check, dtype=float)
    start = x_check.copy()
    in_t = _node_mask(s, t)
    if x_warm is not None:
        links_t = in_t[s.link_rx]
        start[links_t] = np.asarray(x_warm, dtype=float)[links_t]
    res = async_fixed_point(s, a_hat, t, start, **cfg.solver)
    topo = res.topology
    x_t = res.loads

    hat_links = _serving_links(s, a_hat)
    check_links = _serving_links(s, a_check)
    p = s.power
    ref_terms = p[a_check] * x_check[check_links] * s.num_ru
    reference = float(ref_terms.sum())

    if not res.converged:
        return ImprovementVerdict(False, False, False, False, np.inf, reference,
                                  x_t, t, frozenset())

    # serving entries of idle relays carry zero demand, hence zero load
    hat_terms = p[a_hat] * x_t[hat_links] * s.num_ru
    members = np.flatnonzero(in_t)
    cond_energy = hat_terms[members].sum() < ref_terms[members].sum() + cfg.eps1

    f = load_map(topo, x_t)
    outside = np.flatnonzero(~in_t)
    grow = f[hat_links[outside]] > x_check[check_links[outside]] + cfg.eps2
    violators = frozenset(int(j) for j in outside[grow])
    cond_pinned = not violators

    loads_ok = bool(np.all(cell_loads(topo, x_t) <= 1.0 + cfg.load_tol))
    # an association cannot strictly improve on itself
    return ImprovementVerdict(
        improved=bool(l and cond_energy and cond_pinned), cond_energy=bool(cond_energy),
        cond_pinned=cond_pinned, loads_ok=loads_ok,
        candidate_energy_bound=float(hat_terms.sum()), reference_energy=reference,
        x_t=x_t, t=t, violators=violators,
    )


def _test_candidate(s, a_new, a_ref, x_ref, x_warm, cfg):
    l = changed_nodes(a_new, a_ref)
    everything = frozenset(range(s.n_nodes))
    t = everything if cfg.subset_policy == "all" else l
    while True:
        v = check_improvement(s, a_new, a_ref, x_ref, t, cfg, x_warm=x_warm)
        if cfg.subset_policy != "grow" or v.improved or t == everything:
            return v
        # a pinned entry would grow: let those nodes move too; if only the
        # energy condition failed, the full comparison settles it
        t = t | v.violators if v.violators else everything


def assign(s, x):
    """A(x): every node picks the candidate with the lowest p_i * x_ij.

    Ties go to the lowest cell id; non-finite entries are skipped.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(s.n_nodes, dtype=int)
    for j, cs in enumerate(s.candidates):
        best = None
        for c in cs:  # candidates are sorted by id, so strict < keeps the lowest
            v = s.power[c] * x[s.link_index[(c, j)]]
            if np.isfinite(v) and (best is None or v < best[0]):
                best = (v, c)
        if best is None:
            raise ValueError(f"no finite candidate load for {s.node_name(j)}")
        out[j] = best[1]
    return out


def baseline_association(s):
    """Best received power p_i * g_ij per node; ties to the lowest cell id."""
    out = np.empty(s.n_nodes, dtype=int)
    for j, cs in enumerate(s.candidates):
        rx = [s.power[c] * s.gain[c, j] for c in cs]
        out[j] = cs[int(np.argmax(rx))]
    return out


def relay_selection(s, a_init, cfg=None, history=None):
    """Iteratively reassign nodes and keep candidates that provably save energy.

    Each round maps the current loads through :func:`assign`, takes one
    load-map step under the new association, and runs the improvement test
    of the candidate against the reference.  Stops when the association
    repeats or after ``cfg.eta`` rounds.  Candidates whose asynchronous
    iteration diverges or whose certified loads exceed full load are
    skipped.

    ``history``, when a list, receives one dict per round.
    """
    cfg = cfg or AlgorithmConfig()
    a_ref = as_association(s, a_init)
    ref = fixed_point(s, a_ref, **cfg.solver)
    if not ref.feasible:
        raise InfeasibleError("initial association is infeasible")
    x_ref = ref.loads
    a_best = a_ref.copy()

    a_prev, x_prev = a_ref, x_ref
    for k in range(1, cfg.eta + 1):
        a_k = assign(s, x_prev)
        if np.array_equal(a_k, a_prev):
            break
        x_k = load_map(build_topology(s, a_k), x_prev)
        accepted = False
        verdict = None
        if changed_nodes(a_k, a_ref):
            verdict = _test_candidate(s, a_k, a_ref, x_ref, x_k, cfg)
            accepted = verdict.improved and verdict.loads_ok
        if accepted:
            a_best = a_k.copy()
            if cfg.update_reference:
                new_ref = fixed_point(s, a_best, **cfg.solver)
                a_ref, x_ref = a_best, new_ref.loads
        if history is not None:
            history.append({
                "round": k, "changed": len(changed_nodes(a_k, a_prev)),
                "t_size": len(verdict.t) if verdict else 0, "accepted": accepted,
                "bound": verdict.candidate_energy_bound if verdict else None,
            })
        log.debug("round %d: %d nodes moved, accepted=%s", k,
                  len(changed_nodes(a_k, a_prev)), accepted)
        a_prev, x_prev = a_k, x_k
    return a_best


def brute_force(s, guard=10**6, **solver):
    """Exhaustive search for the feasible association of minimum energy.

    Returns ``(association, energy)``.  Among equal energies the first
    association in lexicographic order (by candidate id) wins.
    """
    size = s.search_space_size()
    if size > guard:
        raise SearchSpaceError(f"{size} associations exceed the guard of {guard}")
    best = None
    for combo in itertools.product(*s.candidates):
        res = fixed_point(s, np.array(combo), **solver)
        if res.feasible and (best is None or res.energy < best[1]):
            best = (np.array(combo), res.energy)
    if best is None:
        raise InfeasibleError("no feasible association")
    return best
