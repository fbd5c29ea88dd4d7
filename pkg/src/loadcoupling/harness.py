"""Demand sweeps: relay selection against the best-received-power baseline."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .coupling import fixed_point
from .optimizer import AlgorithmConfig, InfeasibleError, baseline_association, relay_selection
from .scenario import HexNetParams, ScenarioError, generate_hexnet, load_scenario

CSV_COLUMNS = ("demand_bps", "trials_ok", "baseline_energy_mean", "algo_energy_mean",
               "improvement_pct")

DEFAULT_DEMANDS = (0.5e6, 1.0e6, 1.5e6, 2.0e6, 2.5e6, 3.0e6)


@dataclass(frozen=True)
class SweepSpec:
    params: HexNetParams = field(default_factory=HexNetParams)
    demands: tuple = DEFAULT_DEMANDS
    trials: int = 20
    seed: int = 0
    config: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    scenario_file: str | None = None

    def __post_init__(self):
        d = tuple(float(v) for v in self.demands)
        object.__setattr__(self, "demands", d)
        if not d or any(v <= 0 for v in d) or any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("demand grid must be positive and strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    def to_dict(self):
        out = {"params": asdict(self.params), "demands": list(self.demands),
               "trials": self.trials, "seed": self.seed, "config": asdict(self.config)}
        if self.scenario_file is not None:
            out["scenario_file"] = self.scenario_file
        return out

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
        kw = dict(doc)
        if "params" in kw:
            kw["params"] = HexNetParams(**kw["params"])
        if "config" in kw:
            kw["config"] = AlgorithmConfig(**kw["config"])
        if "demands" in kw:
            kw["demands"] = tuple(kw["demands"])
        return cls(**kw)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SweepPoint:
    demand_bps: float
    trials_ok: int
    infeasible: int
    baseline_energy_mean: float
    algo_energy_mean: float

    @property
    def improvement_pct(self):
        if not self.trials_ok or not self.baseline_energy_mean > 0:
            return math.nan
        return 100.0 * (self.baseline_energy_mean - self.algo_energy_mean) / self.baseline_energy_mean


@dataclass
class SweepReport:
    points: list
    metadata: dict
    trials: list = field(default_factory=list, repr=False)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([repr(p.demand_bps), p.trials_ok, repr(p.baseline_energy_mean),
                        repr(p.algo_energy_mean), repr(p.improvement_pct)])
        return buf.getvalue()


def run_trial(spec, demand, trial):
    """One paired comparison; returns (baseline_energy, algo_energy) or None."""
    if spec.scenario_file is not None:
        base = load_scenario(spec.scenario_file)
    else:
        base = generate_hexnet(replace(spec.params, rng_seed=spec.seed + trial))
    s = base.with_demand(demand)
    a0 = baseline_association(s)
    ref = fixed_point(s, a0, **spec.config.solver)
    if not ref.feasible:
        return None
    try:
        a = relay_selection(s, a0, spec.config)
    except InfeasibleError:
        return None
    res = fixed_point(s, a, **spec.config.solver)
    if not res.feasible:
        return None
    return ref.energy, res.energy


def _run_job(job):
    return run_trial(*job)


def run_sweep(spec, jobs=1):
    """Run every (demand, trial) pair and average over the feasible ones.

    The same scenario seed is used for trial ``i`` at every demand point, so
    the curve compares like with like.  Results are reduced in (demand,
    trial) order regardless of ``jobs``.
    """
    work = [(spec, d, i) for d in spec.demands for i in range(spec.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_job, work, chunksize=4))
    else:
        results = [run_trial(*w) for w in work]

    points, rows = [], []
    for n, d in enumerate(spec.demands):
        chunk = results[n * spec.trials:(n + 1) * spec.trials]
        ok = [r for r in chunk if r is not None]
        for i, r in enumerate(chunk):
            rows.append({"demand_bps": d, "trial": i, "seed": spec.seed + i,
                         "baseline": r[0] if r else None, "algo": r[1] if r else None})
        points.append(SweepPoint(
            demand_bps=d, trials_ok=len(ok), infeasible=len(chunk) - len(ok),
            baseline_energy_mean=float(np.mean([r[0] for r in ok])) if ok else math.nan,
            algo_energy_mean=float(np.mean([r[1] for r in ok])) if ok else math.nan,
        ))
    meta = {"seeds": [spec.seed, spec.seed + spec.trials - 1], "config_hash": spec.digest(),
            "trials": spec.trials}
    return SweepReport(points=points, metadata=meta, trials=rows)


def load_sweep_spec(path):
    try:
        return SweepSpec.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ValueError(f"{path}: malformed sweep spec ({exc})") from exc
