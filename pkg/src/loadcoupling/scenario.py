"""Network instances: cells, UEs, gains, candidate sets.

Index conventions used throughout the package:

* cells (transmitters) are ``0 .. n_mc-1`` for macro cells followed by
  ``n_mc .. n_mc+n_rc-1`` for relay cells;
* nodes (receivers, the things that get associated) are ``0 .. n_ue-1`` for
  UEs followed by ``n_ue .. n_ue+n_rc-1`` for relay cells.

Relay ``k`` therefore appears both as cell ``n_mc + k`` and as node
``n_ue + k``.  The gain matrix is indexed ``gain[cell, node]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

MACRO = "macro"
MICRO = "micro"

MIN_DISTANCE_M = 10.0


class ScenarioError(ValueError):
    """Raised for malformed scenarios, graphs or scenario files."""


def path_loss_db(kind, distance_m):
    """Distance-dependent path loss at 2 GHz in dB.

    ``macro``: 128.1 + 37.6 log10(d/km); ``micro``: 140.7 + 36.7 log10(d/km).
    Distances are clamped to at least 10 m.  Accepts scalars or arrays.
    """
    d_km = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    if kind == MACRO:
        out = 128.1 + 37.6 * np.log10(d_km)
    elif kind == MICRO:
        out = 140.7 + 36.7 * np.log10(d_km)
    else:
        raise ValueError(f"unknown path-loss kind {kind!r}")
    return float(out) if out.ndim == 0 else out


def dbm_per_hz_to_watts(dbm_per_hz, bandwidth_hz):
    return 10.0 ** ((dbm_per_hz - 30.0) / 10.0) * bandwidth_hz


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable network instance.

    Parameters
    ----------
    mc_pos, rc_pos, ue_pos : ndarray, shape (n, 2)
        Positions in meters.
    demand : ndarray, shape (n_ue,)
        Downlink bit-rate demand per UE in bit/s.
    gain : ndarray, shape (n_mc + n_rc, n_ue + n_rc)
        Linear power gain from each cell to each node.
    power : ndarray, shape (n_mc + n_rc,)
        Transmit power per RU in watts; every link from a cell uses it.
    noise : float
        Noise power per RU in watts.
    num_ru : int
        RUs per cell (M).
    ru_bandwidth : float
        Bandwidth per RU in Hz (B).
    candidates : tuple of tuple of int
        Candidate serving cells per node (UEs first, then relays).
    """

    mc_pos: np.ndarray
    rc_pos: np.ndarray
    ue_pos: np.ndarray
    demand: np.ndarray
    gain: np.ndarray
    power: np.ndarray
    noise: float
    num_ru: int
    ru_bandwidth: float
    candidates: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mc_pos", "rc_pos", "ue_pos", "demand", "gain", "power"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("mc_pos", "rc_pos", "ue_pos"):
            arr = getattr(self, name)
            if arr.size == 0:
                object.__setattr__(self, name, arr.reshape(0, 2))
        cands = tuple(tuple(sorted(int(c) for c in cs)) for cs in self.candidates)
        object.__setattr__(self, "candidates", cands)
        self._validate()

    def _validate(self):
        n_cells, n_nodes = self.n_cells, self.n_nodes
        if self.n_mc < 1:
            raise ScenarioError("need at least one macro cell")
        if self.demand.shape != (self.n_ue,):
            raise ScenarioError("demand must have one entry per UE")
        if self.gain.shape != (n_cells, n_nodes):
            raise ScenarioError(
                f"gain shape {self.gain.shape} != ({n_cells}, {n_nodes})")
        if self.power.shape != (n_cells,):
            raise ScenarioError("power must have one entry per cell")
        if np.any(self.gain < 0) or not np.all(np.isfinite(self.gain)):
            raise ScenarioError("gains must be finite and nonnegative")
        if np.any(self.power <= 0):
            raise ScenarioError("powers must be positive")
        if np.any(self.demand < 0):
            raise ScenarioError("demands must be nonnegative")
        if not self.noise > 0:
            raise ScenarioError("noise must be positive")
        if int(self.num_ru) != self.num_ru or self.num_ru < 1:
            raise ScenarioError("num_ru must be a positive integer")
        if not self.ru_bandwidth > 0:
            raise ScenarioError("ru_bandwidth must be positive")
        if len(self.candidates) != n_nodes:
            raise ScenarioError("need one candidate set per node")
        for j, cs in enumerate(self.candidates):
            if not cs:
                raise ScenarioError(f"empty candidate set for node {j}")
            for c in cs:
                if not 0 <= c < n_cells:
                    raise ScenarioError(f"candidate {c} of node {j} is not a cell")
                if j >= self.n_ue and c >= self.n_mc:
                    raise ScenarioError(f"relay node {j} may only pick macro cells")
                if j >= self.n_ue and c == self.rc_cell(j):
                    raise ScenarioError("relay cannot serve itself")
                if self.power[c] * self.gain[c, j] <= 0:
                    raise ScenarioError(f"candidate link ({c}, {j}) has zero gain")

    # -- sizes and index maps -------------------------------------------

    @property
    def n_mc(self):
        return len(self.mc_pos)

    @property
    def n_rc(self):
        return len(self.rc_pos)

    @property
    def n_ue(self):
        return len(self.ue_pos)

    @property
    def n_cells(self):
        return self.n_mc + self.n_rc

    @property
    def n_nodes(self):
        return self.n_ue + self.n_rc

    @property
    def spectrum(self):
        """M*B, the bit rate per unit spectral efficiency of a full cell."""
        return self.num_ru * self.ru_bandwidth

    def is_mc(self, cell):
        return cell < self.n_mc

    def is_relay_node(self, node):
        return node >= self.n_ue

    def rc_cell(self, node):
        return self.n_mc + (node - self.n_ue)

    def rc_node(self, cell):
        return self.n_ue + (cell - self.n_mc)

    def cell_name(self, cell):
        return f"mc{cell}" if cell < self.n_mc else f"rc{cell - self.n_mc}"

    def node_name(self, node):
        return f"ue{node}" if node < self.n_ue else f"rc{node - self.n_ue}"

    # -- candidate links ---------------------------------------------------

    @cached_property
    def link_tx(self):
        """Transmitting cell of every candidate link, node-major order."""
        return np.array([c for cs in self.candidates for c in cs], dtype=int)

    @cached_property
    def link_rx(self):
        return np.array([j for j, cs in enumerate(self.candidates) for _ in cs],
                        dtype=int)

    @cached_property
    def link_index(self):
        return {(int(c), int(j)): k
                for k, (c, j) in enumerate(zip(self.link_tx, self.link_rx))}

    @property
    def n_links(self):
        return len(self.link_tx)

    @cached_property
    def signal(self):
        """p_i * g_ij for every candidate link."""
        return self.power[self.link_tx] * self.gain[self.link_tx, self.link_rx]

    def search_space_size(self):
        return math.prod(len(cs) for cs in self.candidates)

    def with_demand(self, demand):
        """Copy with per-UE demand replaced (scalar broadcasts to all UEs)."""
        d = np.broadcast_to(np.asarray(demand, dtype=float), (self.n_ue,)).copy()
        return replace(self, demand=d)

    def same_as(self, other):
        """Bit-exact equality of every field."""
        arrays = ("mc_pos", "rc_pos", "ue_pos", "demand", "gain", "power")
        return (all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.noise == other.noise and self.num_ru == other.num_ru
                and self.ru_bandwidth == other.ru_bandwidth
                and self.candidates == other.candidates)


# ---------------------------------------------------------------------------
# Hexagonal HetNet generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HexNetParams:
    num_mc_sites: int = 7
    inter_site_distance_m: float = 500.0
    rcs_per_region: int = 2
    ues_per_region: int = 20
    carrier_hz: float = 2e9
    ru_bandwidth_hz: float = 180e3
    cell_bandwidth_hz: float = 20e6
    num_ru: int = 100
    noise_dbm_per_hz: float = -174.0
    mc_power_mw_per_ru: float = 800.0
    rc_power_mw_per_ru: float = 50.0
    shadowing_std_db_mc: float = 6.0
    shadowing_std_db_rc: float = 3.0
    candidate_set_size: int = 4
    demand_bps: float = 1e6
    rng_seed: int = 0

    def __post_init__(self):
        rings = _rings_for_sites(self.num_mc_sites)
        if rings is None:
            raise ScenarioError("num_mc_sites must be a centred hexagonal number "
                                "(1, 7, 19, ...)")
        if not 1 <= self.rcs_per_region <= 8:
            raise ScenarioError("rcs_per_region must be in 1..8")
        if self.candidate_set_size < 2:
            raise ScenarioError("candidate_set_size must be >= 2")
        if self.ues_per_region < 1:
            raise ScenarioError("ues_per_region must be >= 1")
        if self.num_ru * self.ru_bandwidth_hz > self.cell_bandwidth_hz:
            raise ScenarioError("num_ru RUs do not fit in the cell bandwidth")
        positive = ("inter_site_distance_m", "carrier_hz", "ru_bandwidth_hz",
                    "cell_bandwidth_hz", "num_ru", "mc_power_mw_per_ru",
                    "rc_power_mw_per_ru", "demand_bps")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        if self.shadowing_std_db_mc < 0 or self.shadowing_std_db_rc < 0:
            raise ScenarioError("shadowing std must be nonnegative")


def _rings_for_sites(n):
    r = 0
    while 1 + 3 * r * (r + 1) < n:
        r += 1
    return r if 1 + 3 * r * (r + 1) == n else None


def hex_sites(num_sites, isd):
    """Site coordinates of a hexagonal lattice, rings around the origin.

    Nearest neighbours sit at angles 0, 60, ..., 300 degrees.
    """
    rings = _rings_for_sites(num_sites)
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(max(-rings, -q - rings), min(rings, -q + rings) + 1):
            pts.append((isd * (q + r / 2.0), isd * r * math.sqrt(3) / 2.0))
    pts.sort(key=lambda p: (round(math.hypot(*p), 6), round(math.atan2(p[1], p[0]) % (2 * math.pi), 6)))
    return np.array(pts)


_HEX_NORMALS = np.array([[math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)]
                         for k in range(6)])


def in_hexagon(points, center, isd):
    """True where points lie in the Voronoi hexagon of a site (inradius isd/2)."""
    rel = np.atleast_2d(points) - center
    return np.all(rel @ _HEX_NORMALS.T <= isd / 2.0 + 1e-9, axis=1)


def sample_hexagon(rng, n, center, isd):
    """Draw ``n`` points uniformly from a site's hexagon by rejection."""
    circ = isd / math.sqrt(3)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(-circ, circ, size=(2 * n + 4, 2)) + center
        out = np.vstack([out, cand[in_hexagon(cand, center, isd)]])
    return out[:n]


def generate_hexnet(params):
    """Random hexagonal HetNet; a pure function of ``params``."""
    p = params
    rng = np.random.default_rng(p.rng_seed)
    isd = p.inter_site_distance_m
    mc_pos = hex_sites(p.num_mc_sites, isd)
    rc_pos = np.vstack([sample_hexagon(rng, p.rcs_per_region, c, isd) for c in mc_pos])
    ue_pos = np.vstack([sample_hexagon(rng, p.ues_per_region, c, isd) for c in mc_pos])
    n_mc, n_rc, n_ue = len(mc_pos), len(rc_pos), len(ue_pos)

    cell_pos = np.vstack([mc_pos, rc_pos])
    node_pos = np.vstack([ue_pos, rc_pos])
    dist = np.linalg.norm(cell_pos[:, None, :] - node_pos[None, :, :], axis=2)
    pl = np.empty_like(dist)
    pl[:n_mc] = path_loss_db(MACRO, dist[:n_mc])
    pl[n_mc:] = path_loss_db(MICRO, dist[n_mc:])
    std = np.r_[np.full(n_mc, p.shadowing_std_db_mc), np.full(n_rc, p.shadowing_std_db_rc)]
    shadow = rng.standard_normal(dist.shape) * std[:, None]
    gain = 10.0 ** (-(pl + shadow) / 10.0)
    for k in range(n_rc):
        gain[n_mc + k, n_ue + k] = 0.0

    power = np.r_[np.full(n_mc, p.mc_power_mw_per_ru), np.full(n_rc, p.rc_power_mw_per_ru)] / 1e3
    rx_power = power[:, None] * gain
    K = p.candidate_set_size
    candidates = []
    for j in range(n_ue):
        # stable sort: ties go to the lower cell id
        order = np.argsort(-rx_power[:, j], kind="stable")
        candidates.append(tuple(order[:K]))
    for k in range(n_rc):
        order = np.argsort(-rx_power[:n_mc, n_ue + k], kind="stable")
        candidates.append(tuple(order[:K]))

    return Scenario(
        mc_pos=mc_pos, rc_pos=rc_pos, ue_pos=ue_pos,
        demand=np.full(n_ue, p.demand_bps), gain=gain, power=power,
        noise=dbm_per_hz_to_watts(p.noise_dbm_per_hz, p.ru_bandwidth_hz),
        num_ru=p.num_ru, ru_bandwidth=p.ru_bandwidth_hz,
        candidates=tuple(candidates),
        meta={"generator": "hexnet", "seed": p.rng_seed},
    )


def random_scenario(seed, n_mc=2, n_rc=1, n_ue=4, side_m=600.0, demand_bps=1e6,
                    num_ru=100, ru_bandwidth=180e3):
    """Small random instance with full candidate sets, for tests and oracles.

    Cells and UEs are dropped uniformly in a square; gains follow the same
    path-loss/shadowing model as :func:`generate_hexnet`.
    """
    rng = np.random.default_rng(seed)
    mc_pos = rng.uniform(0, side_m, (n_mc, 2))
    rc_pos = rng.uniform(0, side_m, (n_rc, 2))
    ue_pos = rng.uniform(0, side_m, (n_ue, 2))
    cell_pos = np.vstack([mc_pos, rc_pos])
    node_pos = np.vstack([ue_pos, rc_pos])
    dist = np.linalg.norm(cell_pos[:, None, :] - node_pos[None, :, :], axis=2)
    pl = np.empty_like(dist)
    pl[:n_mc] = path_loss_db(MACRO, dist[:n_mc])
    pl[n_mc:] = path_loss_db(MICRO, dist[n_mc:])
    std = np.r_[np.full(n_mc, 6.0), np.full(n_rc, 3.0)]
    gain = 10.0 ** (-(pl + rng.standard_normal(pl.shape) * std[:, None]) / 10.0)
    for k in range(n_rc):
        gain[n_mc + k, n_ue + k] = 0.0
    power = np.r_[np.full(n_mc, 0.8), np.full(n_rc, 0.05)]
    candidates = [tuple(range(n_mc + n_rc))] * n_ue + [tuple(range(n_mc))] * n_rc
    return Scenario(
        mc_pos=mc_pos, rc_pos=rc_pos, ue_pos=ue_pos,
        demand=np.full(n_ue, float(demand_bps)), gain=gain, power=power,
        noise=dbm_per_hz_to_watts(-174.0, ru_bandwidth),
        num_ru=num_ru, ru_bandwidth=ru_bandwidth, candidates=tuple(candidates),
        meta={"generator": "random", "seed": seed},
    )


# ---------------------------------------------------------------------------
# MIS reduction gadget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphInstance:
    num_nodes: int
    edges: tuple

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ScenarioError("graph needs at least 2 nodes")
        seen = set()
        for e in self.edges:
            u, v = (int(x) for x in e)
            if u == v:
                raise ScenarioError(f"self-loop at node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise ScenarioError(f"edge {e} references a missing node")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ScenarioError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @classmethod
    def complete(cls, n):
        return cls(n, tuple(combinations(range(n), 2)))

    @classmethod
    def path(cls, n):
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))


GADGET_MC_UE_GAIN = 1.2


def mis_gadget(graph, eps=0.05, mc_ue_gain=GADGET_MC_UE_GAIN):
    """Scenario whose feasible relay activations are independent sets of ``graph``.

    Node ``i`` of the graph becomes MC ``i``, RC ``i`` and UE ``i``.  Gains:
    RC i -> UE i is 6, MC i -> RC i is 3, RC i -> UE k is ``eps`` for every
    edge, everything else 0.  Noise 1, MC power 1, RC power 0.5, demand 1,
    and M*B = 1 so loads read directly as demand over spectral efficiency.

    ``mc_ue_gain`` is the MC i -> UE i gain.  At 1.0 an MC-served UE sits at
    exactly full load, so any neighbouring active relay makes it infeasible
    too and the optimum never activates a relay; 1.2 leaves it slack while
    serving through the relay stays cheaper (0.75 vs 1/log2(2.2) ~ 0.88).
    """
    if not eps > 0:
        raise ScenarioError("eps must be positive")
    n = graph.num_nodes
    gain = np.zeros((2 * n, 2 * n))
    for i in range(n):
        gain[i, i] = mc_ue_gain         # MC i -> UE i
        gain[n + i, i] = 6.0            # RC i -> UE i
        gain[i, n + i] = 3.0            # MC i -> RC i
    for u, v in graph.edges:
        gain[n + u, v] = eps
        gain[n + v, u] = eps
    candidates = [(i, n + i) for i in range(n)] + [(i,) for i in range(n)]
    pos = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return Scenario(
        mc_pos=pos, rc_pos=pos, ue_pos=pos, demand=np.ones(n), gain=gain,
        power=np.r_[np.ones(n), np.full(n, 0.5)], noise=1.0, num_ru=1,
        ru_bandwidth=1.0, candidates=tuple(candidates),
        meta={"generator": "mis_gadget", "edges": [list(e) for e in graph.edges],
              "eps": eps},
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def scenario_to_dict(s):
    cells = [{"id": s.cell_name(c), "kind": "mc" if s.is_mc(c) else "rc",
              "x": float(pos[0]), "y": float(pos[1])}
             for c, pos in enumerate(np.vstack([s.mc_pos, s.rc_pos]))]
    ues = [{"id": s.node_name(j), "x": float(s.ue_pos[j, 0]), "y": float(s.ue_pos[j, 1]),
            "demand_bps": float(s.demand[j])} for j in range(s.n_ue)]
    return {
        "cells": cells,
        "ues": ues,
        "gain": {
            "rows": [s.cell_name(c) for c in range(s.n_cells)],
            "cols": [s.node_name(j) for j in range(s.n_nodes)],
            "data": s.gain.tolist(),
        },
        "power": {s.cell_name(c): float(s.power[c]) for c in range(s.n_cells)},
        "noise_w": float(s.noise),
        "num_ru": int(s.num_ru),
        "ru_bandwidth_hz": float(s.ru_bandwidth),
        "candidates": {s.node_name(j): [s.cell_name(c) for c in cs]
                       for j, cs in enumerate(s.candidates)},
    }


def scenario_from_dict(doc):
    try:
        cells = doc["cells"]
        mcs = [c for c in cells if c["kind"] == "mc"]
        rcs = [c for c in cells if c["kind"] == "rc"]
        cell_ids = [c["id"] for c in mcs] + [c["id"] for c in rcs]
        ues = doc["ues"]
        node_ids = [u["id"] for u in ues] + [c["id"] for c in rcs]
        cell_ix = {cid: i for i, cid in enumerate(cell_ids)}
        node_ix = {nid: j for j, nid in enumerate(node_ids)}
        if len(cell_ix) != len(cell_ids) or len({u["id"] for u in ues}) != len(ues):
            raise ScenarioError("duplicate ids")

        g = doc["gain"]
        data = np.asarray(g["data"], dtype=float)
        rows = [cell_ix[r] for r in g["rows"]]
        cols = [node_ix[c] for c in g["cols"]]
        gain = np.zeros((len(cell_ids), len(node_ids)))
        gain[np.ix_(rows, cols)] = data
        power = np.array([doc["power"][cid] for cid in cell_ids], dtype=float)
        candidates = [tuple(cell_ix[c] for c in doc["candidates"][nid]) for nid in node_ids]
        return Scenario(
            mc_pos=[[c["x"], c["y"]] for c in mcs],
            rc_pos=[[c["x"], c["y"]] for c in rcs],
            ue_pos=[[u["x"], u["y"]] for u in ues],
            demand=[u["demand_bps"] for u in ues],
            gain=gain, power=power, noise=float(doc["noise_w"]),
            num_ru=int(doc["num_ru"]), ru_bandwidth=float(doc["ru_bandwidth_hz"]),
            candidates=tuple(candidates),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"malformed scenario document: {exc!r}") from exc


def save_scenario(s, path):
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=1) + "\n")


def load_scenario(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc.msg})") from exc
    return scenario_from_dict(doc)


def load_graph(path):
    try:
        doc = json.loads(Path(path).read_text())
        return GraphInstance(int(doc["num_nodes"]), tuple(tuple(e) for e in doc["edges"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{path}: malformed graph file ({exc!r})") from exc
