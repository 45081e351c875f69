"""The Bayesian optimisation loop, batch campaigns and result aggregation."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import acquisition, gp, metrics, scalar_dist
from .config import Algorithm, BatchConfig, RunConfig, dump_config, parse_run_config
from .optimizers import ga_maximise
from .problems import Dataset, evaluate, lhs_sample
from .scalarise import (
    NormalisationState,
    augmented_tchebycheff,
    normalise,
    sample_weight,
    tchebycheff,
)

log = logging.getLogger(__name__)

# sub-stream ids; never renumber, results depend on them
STREAMS = {"init": 0, "weights": 1, "ga": 2, "mc": 3, "gp": 4, "fallback": 5, "perturb": 6, "report": 7}
EHVI_REF = 1.1  # reference point in normalised objective space
DUPLICATE_TOL = 1e-9
PERTURB_BOX = 1e-3
MANIFEST = "manifest.json"
TIMING_SUFFIX = ".timing.jsonl"


def stream(seed: int, name: str, iteration: int = 0) -> np.random.Generator:
    """Independent generator for one named purpose at one iteration."""
    return np.random.default_rng([seed, STREAMS[name], iteration])


def iteration_weights(seed: int, m: int, iteration: int):
    """Weight vector for an iteration; identical for every algorithm given the seed."""
    return sample_weight(m, stream(seed, "weights", iteration))


@dataclass
class RunRecord:
    iteration: int
    eval_index: int
    chosen_x: list
    objectives: list
    weights: list
    scalarised_value: float
    acquisition_value: float
    hypervolume_so_far: float
    fallback: bool = False
    wall_time_model_fit: float = field(default=0.0, compare=False)
    wall_time_acquisition: float = field(default=0.0, compare=False)

    def result_row(self) -> dict:
        row = asdict(self)
        row.pop("wall_time_model_fit")
        row.pop("wall_time_acquisition")
        return row

    def timing_row(self) -> dict:
        return {"iteration": self.iteration,
                "wall_time_model_fit": self.wall_time_model_fit,
                "wall_time_acquisition": self.wall_time_acquisition}


class _Acquirer:
    """Builds the acquisition surface for one iteration."""

    def __init__(self, cfg: RunConfig, data: Dataset, weights: np.ndarray, iteration: int):
        self.cfg = cfg
        self.data = data
        self.w = weights
        self.it = iteration
        self.state = NormalisationState.from_objectives(data.objectives)
        self.f_norm = normalise(data.objectives, self.state)
        self.bounds = cfg.problem.spec().bounds

    def fit(self):
        cfg, it = self.cfg, self.it
        rng = stream(cfg.seed, "gp", it)
        X = self.data.inputs
        if cfg.algorithm is Algorithm.MONO_EI:
            self.targets = augmented_tchebycheff(self.f_norm, self.w, rho=cfg.rho)
            self.incumbent = float(np.min(self.targets))
            self.models = [gp.fit(X, self.targets, restarts=cfg.gp_restarts, rng=rng, bounds=self.bounds)]
        else:
            self.incumbent = float(np.min(tchebycheff(self.f_norm, self.w)))
            self.models = [
                gp.fit(X, self.data.objectives[:, i], restarts=cfg.gp_restarts, rng=rng, bounds=self.bounds)
                for i in range(self.data.objectives.shape[1])
            ]
        if cfg.algorithm is Algorithm.MULTI_EHVI:
            self.front = metrics.nondominated_filter(self.f_norm)
            self.front = self.front[np.all(self.front < EHVI_REF, axis=1)]
            self.ref = np.full(self.f_norm.shape[1], EHVI_REF)

    def _normalised_predictions(self, X):
        preds = [model.predict_batch(X) for model in self.models]
        mu = np.column_stack([p[0] for p in preds])
        sd = np.column_stack([p[1] for p in preds])
        return (mu - self.state.mins) / self.state.span, sd / self.state.span

    def _scalarised(self, X):
        mu, sd = self._normalised_predictions(X)
        means = self.w * mu
        stds = self.w * sd
        return means, np.maximum(stds, 1e-9 * np.maximum(1.0, np.abs(means)))

    def surface(self, mc_count: int, rng: np.random.Generator) -> Callable[[np.ndarray], np.ndarray]:
        """Deterministic acquisition function over a population of candidates."""
        cfg = self.cfg
        algo = cfg.algorithm
        m = self.f_norm.shape[1]

        if algo is Algorithm.MONO_EI:
            model = self.models[0]
            def mono(X):
                mean, std = model.predict_batch(X)
                return acquisition.ei_closed_form(mean, std, self.incumbent)
            return mono

        if algo is Algorithm.MULTI_EHVI:
            normals = rng.standard_normal((mc_count, m))
            def ehvi(X):
                mu, sd = self._normalised_predictions(X)
                return acquisition.ehvi_batch(mu, sd, self.front, self.ref, normals)
            return ehvi

        n_samples = cfg.gumbel_sample_count if algo is Algorithm.MULTI_EI_GUMBEL else mc_count
        normals = rng.standard_normal((n_samples, m))
        # standard Gumbel draws shared by every candidate
        gumbel_std = -np.log(-np.log(acquisition._open_uniform(rng, mc_count)))

        def multi(X):
            means, stds = self._scalarised(X)
            G = means[:, :1] + stds[:, :1] * normals[:, 0]
            for k in range(1, m):
                np.maximum(G, means[:, k:k + 1] + stds[:, k:k + 1] * normals[:, k], out=G)
            if algo is Algorithm.MULTI_EI_EXACT_MC:
                return acquisition.ei_from_samples(G, self.incumbent)
            loc, scale, its = scalar_dist.fit_gumbel_batch(G)
            ei = np.empty(G.shape[0])
            ok = its > 0
            if ok.any():
                g = loc[ok, None] + scale[ok, None] * gumbel_std
                ei[ok] = acquisition.ei_from_samples(g, self.incumbent)
            if (~ok).any():
                # degenerate or unconverged fits fall back to the raw samples
                ei[~ok] = acquisition.ei_from_samples(G[~ok], self.incumbent)
            return ei
        return multi


def _propose(cfg: RunConfig, data: Dataset, weights, it: int):
    """Return ``(x, acquisition_value, fallback, fit_seconds, acq_seconds)``."""
    spec = cfg.problem.spec()
    lo, hi = spec.bounds[:, 0], spec.bounds[:, 1]
    if cfg.algorithm is Algorithm.RANDOM_SEARCH:
        t0 = time.perf_counter()
        x = stream(cfg.seed, "ga", it).uniform(lo, hi)
        return x, 0.0, False, 0.0, time.perf_counter() - t0

    acq = _Acquirer(cfg, data, weights, it)
    t0 = time.perf_counter()
    try:
        acq.fit()
    except (gp.GpFitError, np.linalg.LinAlgError, ValueError) as exc:
        log.warning("iteration %d: model fit failed (%s); evaluating a random point", it, exc)
        x = stream(cfg.seed, "fallback", it).uniform(lo, hi)
        return x, float("nan"), True, time.perf_counter() - t0, 0.0
    t_fit = time.perf_counter() - t0

    t0 = time.perf_counter()
    mc_rng = stream(cfg.seed, "mc", it)
    surface = acq.surface(cfg.mc_counts.search, mc_rng)
    ga_seed = int(stream(cfg.seed, "ga", it).integers(2 ** 63))
    result = ga_maximise(surface, lo, hi, cfg.ga.to_ga_config(ga_seed))
    t_acq = time.perf_counter() - t0

    report_surface = acq.surface(cfg.mc_counts.report, stream(cfg.seed, "report", it))
    value = float(report_surface(result.x[None, :])[0])
    return result.x, value, False, t_fit, t_acq


def run(cfg: RunConfig, on_record: Optional[Callable[[RunRecord], None]] = None) -> list[RunRecord]:
    """Execute one Bayesian optimisation run.

    Every random choice flows from ``cfg.seed`` through named sub-streams, so
    a config and seed fully determine the records (timings aside).
    """
    spec = cfg.problem.spec()
    X0 = lhs_sample(spec.num_variables, cfg.init_size, stream(cfg.seed, "init"))
    data = Dataset(X0, evaluate(spec, X0))
    ref = spec.reference_point()
    records = []

    for it in range(1, cfg.budget - cfg.init_size + 1):
        w = iteration_weights(cfg.seed, spec.num_objectives, it).weights
        state = NormalisationState.from_objectives(data.objectives)
        x, value, fallback, t_fit, t_acq = _propose(cfg, data, w, it)

        dist = np.min(np.max(np.abs(data.inputs - x), axis=1))
        if dist < DUPLICATE_TOL:
            jitter = stream(cfg.seed, "perturb", it).uniform(-0.5, 0.5, x.size) * PERTURB_BOX
            x = np.clip(x + jitter, spec.bounds[:, 0], spec.bounds[:, 1])

        f = evaluate(spec, x)
        data.append(x, f)
        record = RunRecord(
            iteration=it,
            eval_index=data.eval_count,
            chosen_x=x.tolist(),
            objectives=f.tolist(),
            weights=w.tolist(),
            scalarised_value=float(tchebycheff(normalise(f, state), w)),
            acquisition_value=value,
            hypervolume_so_far=metrics.hypervolume_of(data.objectives, ref),
            fallback=fallback,
            wall_time_model_fit=t_fit,
            wall_time_acquisition=t_acq,
        )
        records.append(record)
        if on_record is not None:
            on_record(record)
    return records


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def write_records(records: list[RunRecord], path) -> Path:
    """Write result rows and the timing sidecar next to them."""
    path = Path(path)
    _atomic_write(path, _jsonl(r.result_row() for r in records))
    _atomic_write(timing_path(path), _jsonl(r.timing_row() for r in records))
    return path


def timing_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name[: -len(".jsonl")] + TIMING_SUFFIX)


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def manifest_entry(cfg: RunConfig, path: Path, status: str, error: Optional[str] = None) -> dict:
    entry = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "problem": cfg.problem.spec().label,
        "algorithm": cfg.algorithm.value,
        "path": path.name,
        "status": status,
        "config": dump_config(cfg),
    }
    if cfg.algorithm is Algorithm.MULTI_EI_EXACT_MC:
        entry["extension"] = True
    if error:
        entry["error"] = error
    return entry


def read_manifest(out_dir) -> list[dict]:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        return []
    return json.loads(path.read_text())["runs"]


def write_manifest(out_dir, entries: list[dict]) -> None:
    entries = sorted(entries, key=lambda e: e["path"])
    _atomic_write(Path(out_dir) / MANIFEST, json.dumps({"runs": entries}, indent=2, sort_keys=True) + "\n")


def run_to_file(cfg: RunConfig, out_dir) -> Path:
    path = Path(out_dir) / f"{cfg.run_name()}.jsonl"
    return write_records(run(cfg), path)


def _batch_worker(cfg_dict: dict, out_dir: str) -> dict:
    cfg = parse_run_config(cfg_dict)
    path = Path(out_dir) / f"{cfg.run_name()}.jsonl"
    try:
        run_to_file(cfg, out_dir)
    except Exception as exc:  # one run's failure must not sink the batch
        log.exception("run %s failed", cfg.run_name())
        return manifest_entry(cfg, path, "failed", f"{type(exc).__name__}: {exc}")
    return manifest_entry(cfg, path, "complete")


def run_batch(batch: BatchConfig, out_dir, jobs: int = 1, resume: bool = False) -> list[dict]:
    """Run every problem x algorithm x seed combination; returns the manifest entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    previous = {e["path"]: e for e in read_manifest(out_dir)}
    entries, todo = {}, []
    for cfg in batch.expand():
        path = out_dir / f"{cfg.run_name()}.jsonl"
        prev = previous.get(path.name)
        if (resume and path.exists() and prev is not None and prev["status"] == "complete"
                and prev["config_hash"] == cfg.config_hash()):
            entries[path.name] = prev
            continue
        todo.append(cfg)

    payload = [dump_config(c) for c in todo]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_worker, payload, [str(out_dir)] * len(payload)))
    else:
        results = [_batch_worker(p, str(out_dir)) for p in payload]
    for entry in results:
        entries[entry["path"]] = entry
    merged = {**previous, **entries}
    write_manifest(out_dir, list(merged.values()))
    return [entries[k] for k in sorted(entries)]


class AggregateError(ValueError):
    pass


def _load_runs(results_dir, problem: Optional[str] = None):
    results_dir = Path(results_dir)
    entries = [e for e in read_manifest(results_dir) if e["status"] == "complete"]
    if problem is not None:
        entries = [e for e in entries if e["problem"] == problem]
    entries = [e for e in entries if (results_dir / e["path"]).exists()]
    if not entries:
        raise AggregateError(f"no completed result files in {results_dir}")
    problems = sorted({e["problem"] for e in entries})
    if len(problems) > 1:
        raise AggregateError(f"results mix problems {problems}; select one")
    return results_dir, entries


def aggregate(results_dir, problem: Optional[str] = None) -> list[dict]:
    """Per algorithm and evaluation index: median hypervolume and a 2.5-97.5 percentile band."""
    results_dir, entries = _load_runs(results_dir, problem)
    by_algo: dict[str, list[list[dict]]] = {}
    for e in sorted(entries, key=lambda e: (e["algorithm"], e["seed"])):
        by_algo.setdefault(e["algorithm"], []).append(read_records(results_dir / e["path"]))

    rows, problems = [], []
    for algo in sorted(by_algo):
        runs = by_algo[algo]
        grids = [tuple(r["eval_index"] for r in run) for run in runs]
        if len(set(grids)) > 1:
            problems.append(f"{algo}: evaluation grids differ across seeds ({sorted({len(g) for g in grids})} rows)")
            continue
        hv = np.array([[r["hypervolume_so_far"] for r in run] for run in runs])
        lo, med, hi = np.percentile(hv, [2.5, 50.0, 97.5], axis=0)
        for j, idx in enumerate(grids[0]):
            rows.append({"algorithm": algo, "eval_index": idx, "hv_median": float(med[j]),
                         "hv_lo": float(lo[j]), "hv_hi": float(hi[j])})
    if problems:
        raise AggregateError("inconsistent grids: " + "; ".join(problems))
    return rows


def timing_summary(results_dir, problem: Optional[str] = None) -> list[dict]:
    """Median per-iteration model-fit and acquisition wall time per algorithm."""
    results_dir, entries = _load_runs(results_dir, problem)
    fit, acq = {}, {}
    for e in entries:
        tpath = timing_path(results_dir / e["path"])
        if not tpath.exists():
            continue
        for row in read_records(tpath):
            fit.setdefault(e["algorithm"], []).append(row["wall_time_model_fit"])
            acq.setdefault(e["algorithm"], []).append(row["wall_time_acquisition"])
    return [{"algorithm": a, "median_fit_s": float(np.median(fit[a])), "median_acq_s": float(np.median(acq[a]))}
            for a in sorted(fit)]
