"""Named jobs: one function per CLI command, executed into a run directory.

A job is (command, params, config).  Params are resolved to explicit values
before the run, so the manifest alone is enough to replay it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .acceptance import CRITERIA, RUNNERS, criterion_config
from .fluctuation import run_fluctuation
from .grid import PeriodicGrid
from .io import MANIFEST, VERDICTS, RunManifest, hash_artifacts, write_csv, write_field, write_snapshot
from .particles import run_trajectory
from .scenario.config import ScenarioConfig
from .statlab import (CampaignResult, Table, clt_result, conditional_clt, converge_result,
                      crossterms_result, default_kappa, elln_campaign, elln_result, entropy_campaign,
                      entropy_result, increment_campaign, increments_result, martingale_campaign,
                      norm_sweep)
from .statlab.coupled import Coupling
from .statlab.elln import cancelling_product

JobFn = Callable[[ScenarioConfig | None, dict, Path, int], CampaignResult]
JOBS: dict[str, JobFn] = {}
DEFAULTS: dict[str, Callable[[ScenarioConfig | None], dict]] = {}


def job(name: str, defaults: Callable[[ScenarioConfig | None], dict]):
    def deco(fn: JobFn) -> JobFn:
        JOBS[name] = fn
        DEFAULTS[name] = defaults
        return fn
    return deco


def resolve_params(command: str, cfg: ScenarioConfig | None, given: dict) -> dict:
    """Defaults for ``command`` overlaid with the non-None entries of ``given``."""
    params = DEFAULTS[command](cfg)
    unknown = set(k for k, v in given.items() if v is not None) - set(params)
    if unknown:
        raise ValueError(f"unknown parameters for {command}: {sorted(unknown)}")
    params.update({k: v for k, v in given.items() if v is not None})
    return params


# -- simulation commands ---------------------------------------------------------------------


@job("simulate", lambda cfg: {"N": cfg.N_list[-1], "runs": 1, "stride": cfg.stride})
def _simulate(cfg, params, out, threads):
    cp = Coupling.build(cfg)
    N, stride = int(params["N"]), int(params["stride"])
    rows = []
    for r in range(int(params["runs"])):
        path = cp.replica_path(r)
        traj = run_trajectory(cfg, r, N, path, dyn=cp.dyn, stride=stride)
        for step, t, X in traj.snapshots:
            write_snapshot(out / "snapshots" / f"r{r:05d}_n{step:06d}.bin", X, t,
                           replica=r, step=step, path_id=path.path_id)
            rows.append((r, step, t, N, *X.mean(axis=0), *X.std(axis=0)))
    cols = ("replica", "step", "t", "N") + tuple(f"mean_x{i}" for i in range(cfg.d)) \
        + tuple(f"sd_x{i}" for i in range(cfg.d))
    return CampaignResult("simulate", [Table("ensemble", cols, rows)], [])


@job("meanfield", lambda cfg: {"runs": 1, "stride": cfg.stride})
def _meanfield(cfg, params, out, threads):
    cp = Coupling.build(cfg)
    rows, warns = [], []
    for pid in range(int(params["runs"])):
        path = cp.path(pid)
        dp = cp.density(path, stride=int(params["stride"]))
        for i, step in enumerate(dp.steps):
            v = dp.values[i]
            write_field(out / "fields" / f"p{pid:05d}_n{int(step):06d}.bin", v, cp.grid, float(dp.times[i]),
                        path_id=pid, step=int(step))
            rows.append((pid, int(step), float(dp.times[i]), float(cp.grid.integrate(v)),
                         float(v.min()), float(v.max())))
        warns += [f"path {pid}: {f}" for f in dp.flags]
    table = Table("meanfield", ("path_id", "step", "t", "mass", "min", "max"), rows)
    return CampaignResult("meanfield", [table], [], warnings=warns)


@job("spde", lambda cfg: {"runs": 100, "stride": cfg.stride, "eta0": "zero", "path_id": 0, "N0": cfg.N_list[-1]})
def _spde(cfg, params, out, threads):
    cp = Coupling.build(cfg)
    path = cp.path(int(params["path_id"]))
    rho_path = cp.density(path, stride=1)
    run = run_fluctuation(cfg, rho_path, path.increments, int(params["runs"]), eta0=params["eta0"],
                          N0=int(params["N0"]), stride=int(params["stride"]))
    rows = [(float(t), r, name, float(run.pairings[i, r, j]))
            for i, t in enumerate(run.times) for r in range(run.pairings.shape[1])
            for j, name in enumerate(run.names)]
    return CampaignResult("spde", [Table("spde", ("t", "run", "phi_name", "pairing_value"), rows)], [],
                          {"total_integral_drift": run.total_drift})


# -- campaigns -------------------------------------------------------------------------------


@job("converge", lambda cfg: {"runs": cfg.replicas, "phi": cfg.tests()[0].name})
def _converge(cfg, params, out, threads):
    return converge_result(norm_sweep(cfg, replicas=int(params["runs"]), phi_name=params["phi"],
                                      threads=threads))


@job("elln", lambda cfg: {"p": [2, 4], "samples": 100_000, "phi_sup": 0.01, "phi": cfg.tests()[0].name,
                          "kappa": default_kappa(cfg.alpha, cfg.d),
                          "N_list": [2**j for j in range(3, 11)]})
def _elln(cfg, params, out, threads):
    grid = PeriodicGrid(cfg.d, cfg.L, 4096 if cfg.d == 1 else 256)
    rho = cfg.rho0.on_grid(grid.coords, cfg.L, grid.M)
    phi = cancelling_product(cfg.test_function(params["phi"]), rho, grid, sup=float(params["phi_sup"]),
                             label=params["phi"])

    def sampler(n, rng):
        return cfg.rho0.sample(n, cfg.d, cfg.L, cfg.M, rng)

    reports = [elln_campaign(sampler, phi, float(params["kappa"]), int(p), params["N_list"],
                             int(params["samples"]), cfg.rng, cfg.d) for p in params["p"]]
    return elln_result(reports)


@job("clt", lambda cfg: {"runs": cfg.replicas, "N": cfg.N_list[-1], "path_id": 0, "eta0": "projected"})
def _clt(cfg, params, out, threads):
    return clt_result(conditional_clt(cfg, replicas=int(params["runs"]), N=int(params["N"]),
                                      path_id=int(params["path_id"]), eta0=params["eta0"],
                                      threads=threads))


def _default_lags(cfg) -> list[int]:
    lags = sorted({max(cfg.n_steps // 2**j, 1) for j in (6, 5, 4, 3, 2)})
    return [l for l in lags if l % cfg.stride == 0] if cfg.stride > 1 else lags


@job("increments", lambda cfg: {"runs": cfg.replicas, "N": cfg.N_list[-1], "stride": cfg.stride,
                                "lags": _default_lags(cfg), "alpha": cfg.alpha_interaction,
                                "cutoff": cfg.cutoff, "freq_size": cfg.freq_size})
def _increments(cfg, params, out, threads):
    sample = increment_campaign(cfg, params["lags"], N=int(params["N"]), replicas=int(params["runs"]),
                                stride=int(params["stride"]), alpha=float(params["alpha"]),
                                cutoff=float(params["cutoff"]), freq_size=int(params["freq_size"]),
                                threads=threads)
    return increments_result(sample)


@job("crossterms", lambda cfg: {"runs": cfg.replicas, "N": cfg.N_list[-1], "blocks": 4})
def _crossterms(cfg, params, out, threads):
    return crossterms_result(martingale_campaign(cfg, N=int(params["N"]), replicas=int(params["runs"]),
                                                 blocks=int(params["blocks"]), threads=threads))


@job("entropy", lambda cfg: {"runs": cfg.replicas, "path_id": 0})
def _entropy(cfg, params, out, threads):
    return entropy_result(entropy_campaign(cfg, replicas=int(params["runs"]),
                                           path_id=int(params["path_id"]), threads=threads))


@job("acceptance", lambda cfg: {"runner": "c1"})
def _acceptance(cfg, params, out, threads):
    return RUNNERS[params["runner"]](threads=threads)


def acceptance_runner_config(runner: str) -> ScenarioConfig | None:
    for k, (key, _) in CRITERIA.items():
        if key == runner:
            return criterion_config(k)
    return None


# -- execution -------------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_result(result: CampaignResult, out: Path) -> None:
    for table in result.tables:
        write_csv(out / f"{table.name}.csv", table.columns, table.rows)
    (out / VERDICTS).write_text(json.dumps([v.to_json() for v in result.verdicts], indent=2) + "\n")
    summary = {"campaign": result.name, "summary": _jsonable(result.summary),
               "warnings": list(result.warnings),
               "verdict_details": {v.criterion: _jsonable(v.detail) for v in result.verdicts}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def execute(command: str, cfg: ScenarioConfig | None, params: dict, out: str | Path,
            threads: int = 1) -> tuple[CampaignResult, RunManifest]:
    """Run a job into ``out`` (created; must be empty) and write its manifest."""
    if command not in JOBS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        raise FileExistsError(f"output directory {out} is not empty")
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    result = JOBS[command](cfg, params, out, threads)
    write_result(result, out)
    manifest = RunManifest(
        job={"command": command, "params": _jsonable(params)},
        config=cfg.to_dict() if cfg is not None else None,
        seed_plan=cfg.rng.describe() if cfg is not None else None,
        code_version=__version__, started=started, finished=_now(),
        artifacts=hash_artifacts(out))
    manifest.write(out)
    return result, manifest


def replay(manifest_path: str | Path, out: str | Path, threads: int = 1
           ) -> tuple[CampaignResult, RunManifest, list[str]]:
    """Rerun a recorded job; returns the artifacts whose hashes differ (or are missing)."""
    old = RunManifest.load(manifest_path)
    cfg = ScenarioConfig.from_dict(old.config) if old.config is not None else None
    result, new = execute(old.job["command"], cfg, dict(old.job["params"]), out, threads)
    keys = set(old.artifacts) | set(new.artifacts)
    diff = sorted(k for k in keys if old.artifacts.get(k) != new.artifacts.get(k))
    return result, new, diff


# -- acceptance pipeline -----------------------------------------------------------------------


@dataclass
class CriterionOutcome:
    number: int
    passed: bool
    verdicts: list
    runtime: float
    budget: float
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [v.line() for v in self.verdicts] or [self.note]
        timing = f"runtime={self.runtime:.1f}s budget={self.budget:.0f}s"
        return f"{status} criterion {self.number} ({timing}): " + "; ".join(parts)


def run_acceptance(out: str | Path, criteria=None, threads: int = 1,
                   echo: Callable[[str], None] | None = None) -> list[CriterionOutcome]:
    """Run the selected criteria into ``out``/<runner>; criterion 11 replays every runner used."""
    from .acceptance import BUDGET_S, criterion_verdicts

    out = Path(out)
    wanted = sorted(set(criteria or list(CRITERIA) + [11]))
    runner_keys = []
    for k in (list(CRITERIA) if wanted == [11] else wanted):
        if k != 11 and CRITERIA[k][0] not in runner_keys:
            runner_keys.append(CRITERIA[k][0])
    results, times = {}, {}
    for key in runner_keys:
        t0 = time.perf_counter()
        results[key], _ = execute("acceptance", acceptance_runner_config(key), {"runner": key},
                                  out / key, threads)
        times[key] = time.perf_counter() - t0
    outcomes = []
    for k in wanted:
        if k == 11:
            continue
        key = CRITERIA[k][0]
        vs = criterion_verdicts(k, results[key])
        ok = bool(vs) and all(v.passed for v in vs) and times[key] <= BUDGET_S[key]
        outcomes.append(CriterionOutcome(k, ok, vs, times[key], BUDGET_S[key]))
        if echo:
            echo(outcomes[-1].line())
    if 11 in wanted:
        t0 = time.perf_counter()
        diffs = {}
        for key in runner_keys:
            _, _, diff = replay(out / key, out / f"replay_{key}", threads)
            diffs[key] = [d for d in diff if d.endswith(".csv")]
        bad = sum(len(v) for v in diffs.values())
        from .statlab import Verdict
        v = Verdict.in_band("c11_csv_mismatches", bad, 0, 0, runners=runner_keys,
                            mismatched={k: d for k, d in diffs.items() if d})
        elapsed = time.perf_counter() - t0
        outcomes.append(CriterionOutcome(11, v.passed, [v], elapsed, sum(BUDGET_S[k] for k in runner_keys),
                                         note="replayed " + ",".join(runner_keys)))
        if echo:
            echo(outcomes[-1].line())
    summary = [{"criterion": o.number, "pass": o.passed, "runtime_s": round(o.runtime, 3),
                "budget_s": o.budget, "verdicts": [v.to_json() for v in o.verdicts]} for o in outcomes]
    (out / "acceptance.json").write_text(json.dumps(summary, indent=2) + "\n")
    return sorted(outcomes, key=lambda o: o.number)


__all__ = ["JOBS", "execute", "replay", "resolve_params", "write_result", "acceptance_runner_config",
           "run_acceptance", "CriterionOutcome", "MANIFEST"]
