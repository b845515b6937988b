"""Multi-environment evaluation, CSV ingestion, validation splits, and
deterministic hyperparameter sweeps.

File formats:

* dataset CSV -- header ``env,y,x1,...,xm``, one row per sample, full
  float precision; leading ``#`` lines are provenance comments.
* results CSV -- one row per (method, grid cell): method, params JSON,
  validation error, test mean/std error, selected flag, per-env losses
  as a JSON cell.
* long CSV -- one row per (setting, env, method) with the per-env loss,
  matching the layout the figures are drawn from.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .baselines import BaselineConfig, SGDConfig, fit
from .errors import DataFormatError
from .models import EnvDataset, LossSpec, ModelParams, batch_losses, pool_envs
from .rngutil import derive_seed
from .trainer import SALConfig, TrainedModel, train

METRIC_KINDS = ("mean_loss", "rmse", "misclassification_rate")


# ---------------------------------------------------------------------------
# metrics


@dataclass
class EvalReport:
    per_env_loss: dict[int, float]
    mean_error: float
    std_error: float | None
    metric_kind: str

    def to_dict(self) -> dict:
        return {
            "per_env_loss": {str(k): v for k, v in self.per_env_loss.items()},
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "metric_kind": self.metric_kind,
        }


def _env_metric(model: TrainedModel, env: EnvDataset, metric_kind: str, spec: LossSpec) -> float:
    params = model.params
    if metric_kind == "mean_loss":
        return float(np.mean(batch_losses(params, spec, env.X, env.y)))
    if metric_kind == "rmse":
        resid = env.y - params.predict(env.X)
        return float(np.sqrt(np.mean(resid**2)))
    if metric_kind == "misclassification_rate":
        if not np.all(np.isin(env.y, (0.0, 1.0))):
            raise DataFormatError("misclassification rate needs binary {0,1} targets")
        pred = (params.predict(env.X) >= 0.0).astype(np.float64)
        return float(np.mean(pred != env.y))
    raise ValueError(f"unknown metric kind {metric_kind!r}")


def evaluate(
    model: TrainedModel,
    test_envs: list[EnvDataset],
    metric_kind: str = "mean_loss",
    loss: LossSpec | None = None,
) -> EvalReport:
    """Per-environment metric plus its mean and (n-1)-denominator spread.

    With a single test environment the spread is reported as null. The
    loss spec defaults to the one recorded in the trained model's config.
    """
    if not test_envs:
        raise ValueError("no test environments")
    if model.params.dim != test_envs[0].dim:
        raise ValueError("model dimension does not match the data")
    if loss is None:
        loss = LossSpec(model.config.get("loss", "squared"))
    per_env = {e.env_id: _env_metric(model, e, metric_kind, loss) for e in test_envs}
    vals = np.array(list(per_env.values()))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
    return EvalReport(per_env, float(vals.mean()), std, metric_kind)


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def write_dataset_csv(path, envs: list[EnvDataset], header_comments: list[str] | None = None) -> None:
    """Write environments in the ``env,y,x1..xm`` schema at full precision."""
    m = envs[0].dim
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        fh.write("env,y," + ",".join(f"x{j + 1}" for j in range(m)) + "\n")
        for e in envs:
            for i in range(e.n):
                row = [str(e.env_id), format(e.y[i], ".17g")]
                row += [format(v, ".17g") for v in e.X[i]]
                fh.write(",".join(row) + "\n")


def ingest_csv(
    path,
    normalize: bool = False,
    stats: NormalizationStats | None = None,
) -> tuple[list[EnvDataset], NormalizationStats | None]:
    """Read a dataset CSV, group rows by environment, optionally z-score.

    ``normalize=True`` computes fresh pooled statistics from this file and
    returns them for reuse; passing ``stats`` applies previously computed
    statistics instead (the two are mutually exclusive). A constant column
    is guarded by flooring the scale at 1e-12, normalizing it to zeros.
    """
    if normalize and stats is not None:
        raise ValueError("pass either normalize=True or stats, not both")
    rows: list[tuple[int, float, list[float]]] = []
    m = None
    with open(path, newline="") as fh:
        lineno = 0
        header = None
        for raw in fh:
            lineno += 1
            if raw.startswith("#"):
                continue
            parsed = next(csv.reader(io.StringIO(raw)))
            if header is None:
                header = [h.strip() for h in parsed]
                if len(header) < 3 or header[0] != "env" or header[1] != "y":
                    raise DataFormatError(f"line {lineno}: header must be env,y,x1,...,xm")
                expected = [f"x{j + 1}" for j in range(len(header) - 2)]
                if header[2:] != expected:
                    raise DataFormatError(f"line {lineno}: covariate columns must be x1..xm in order")
                m = len(header) - 2
                continue
            if not parsed or (len(parsed) == 1 and not parsed[0].strip()):
                continue
            if len(parsed) != m + 2:
                raise DataFormatError(f"line {lineno}: expected {m + 2} columns, got {len(parsed)}")
            try:
                env_id = int(parsed[0])
                y = float(parsed[1])
                x = [float(v) for v in parsed[2:]]
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: non-numeric cell ({exc})") from None
            rows.append((env_id, y, x))
        if header is None:
            raise DataFormatError("empty file: missing header")
    if not rows:
        raise DataFormatError("no data rows")
    env_order: list[int] = []
    by_env: dict[int, list[tuple[float, list[float]]]] = {}
    for env_id, y, x in rows:
        if env_id not in by_env:
            by_env[env_id] = []
            env_order.append(env_id)
        by_env[env_id].append((y, x))
    X_all = np.array([x for _, _, x in rows])
    if normalize:
        std = np.maximum(X_all.std(axis=0), 1e-12)
        stats = NormalizationStats(X_all.mean(axis=0), std)
    envs = []
    for env_id in env_order:
        ys = np.array([y for y, _ in by_env[env_id]])
        Xs = np.array([x for _, x in by_env[env_id]])
        if stats is not None:
            Xs = stats.apply(Xs)
        envs.append(EnvDataset(Xs, ys, env_id=env_id))
    return envs, stats


# ---------------------------------------------------------------------------
# validation splits


def validation_split(envs: list[EnvDataset], rule: dict, seed: int) -> tuple[list[EnvDataset], list[EnvDataset]]:
    """Deterministic (train, validation) split drawn from training envs only.

    rule: {"rule": "iid_holdout", "fraction": f} holds out a fraction of
    every environment; {"rule": "per_env_sample", "count": c, "env_ids":
    optional} holds out c points from each (or each named) environment.
    """
    kind = rule.get("rule")
    rng = np.random.default_rng(seed)
    train_envs, val_envs = [], []
    if kind == "iid_holdout":
        frac = float(rule["fraction"])
        if not 0.0 < frac < 1.0:
            raise ValueError("fraction must be in (0, 1)")
        for e in envs:
            n_val = int(round(frac * e.n))
            if n_val < 1 or n_val >= e.n:
                raise ValueError(f"holdout of {n_val} infeasible for env {e.env_id} (n={e.n})")
            perm = rng.permutation(e.n)
            val_idx, tr_idx = perm[:n_val], perm[n_val:]
            train_envs.append(EnvDataset(e.X[tr_idx], e.y[tr_idx], e.env_id))
            val_envs.append(EnvDataset(e.X[val_idx], e.y[val_idx], e.env_id))
        return train_envs, val_envs
    if kind == "per_env_sample":
        count = int(rule["count"])
        chosen = rule.get("env_ids")
        for e in envs:
            if chosen is not None and e.env_id not in chosen:
                train_envs.append(e)
                continue
            if count >= e.n:
                raise ValueError(f"env {e.env_id} has only {e.n} points, cannot hold out {count}")
            perm = rng.permutation(e.n)
            val_idx, tr_idx = perm[:count], perm[count:]
            train_envs.append(EnvDataset(e.X[tr_idx], e.y[tr_idx], e.env_id))
            val_envs.append(EnvDataset(e.X[val_idx], e.y[val_idx], e.env_id))
        if not val_envs:
            raise ValueError("no environment matched the validation rule")
        return train_envs, val_envs
    raise ValueError(f"unknown validation rule {kind!r}")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class MethodSpec:
    """One method's sweep entry: fixed params plus an optional grid."""

    method: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def cells(self) -> list[dict]:
        if not self.grid:
            return [dict(self.params)]
        keys = sorted(self.grid)
        out = []
        for combo in product(*(self.grid[k] for k in keys)):
            cell = dict(self.params)
            cell.update(dict(zip(keys, combo)))
            out.append(cell)
        return out


@dataclass
class ExperimentConfig:
    name: str
    generator: dict
    methods: list[MethodSpec]
    metric: str = "mean_loss"
    loss: str = "squared"
    repeats: int = 10
    master_seed: int = 1234
    validation: dict = field(default_factory=lambda: {"rule": "iid_holdout", "fraction": 0.1})
    jobs: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.metric not in METRIC_KINDS:
            raise ValueError(f"metric must be one of {METRIC_KINDS}")
        self.methods = [
            m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods
        ]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": self.generator,
            "methods": [
                {"method": m.method, "params": m.params, "grid": m.grid} for m in self.methods
            ],
            "metric": self.metric,
            "loss": self.loss,
            "repeats": self.repeats,
            "master_seed": self.master_seed,
            "validation": self.validation,
            "jobs": self.jobs,
        }


_dataset_cache: dict[str, tuple[list[EnvDataset], list[EnvDataset]]] = {}


def make_dataset(generator: dict, seed: int) -> tuple[list[EnvDataset], list[EnvDataset]]:
    """Build (train_envs, test_envs) for a generator config and repeat seed.

    Results are memoized per process: sweep cells sharing a repeat reuse
    the same arrays instead of regenerating them.
    """
    key = json.dumps(generator, sort_keys=True) + f"@{seed}"
    if key in _dataset_cache:
        return _dataset_cache[key]
    out = _make_dataset(generator, seed)
    if len(_dataset_cache) > 32:
        _dataset_cache.clear()
    _dataset_cache[key] = out
    return out


def _make_dataset(generator: dict, seed: int) -> tuple[list[EnvDataset], list[EnvDataset]]:
    from . import datagen  # local import keeps module load light

    regime = generator.get("regime")
    params = {k: v for k, v in generator.items() if k != "regime"}
    if regime == "toy":
        test_alphas = params.pop("test_alphas", [round(a, 10) for a in np.arange(-2.0, 2.01, 0.1)])
        n_test = params.pop("n_test", 300)
        train_envs, _ = datagen.gen_toy_training(seed=seed, **params)
        test_envs = []
        for i, a in enumerate(test_alphas):
            env, _ = datagen.gen_toy(
                float(a), n_test, derive_seed(seed, "toy-test", i), env_id=100 + i
            )
            test_envs.append(env)
        return train_envs, test_envs
    if regime == "selection_bias":
        test_rates = params.pop("test_rates", list(datagen.TEST_RATES_1D))
        n_test = params.pop("n_test", 1000)
        train_envs, _ = datagen.gen_selection_bias(seed=seed, **params)
        test_envs = []
        for i, r in enumerate(test_rates):
            spec = datagen.SelectionBiasSpec(
                r=[r] if np.isscalar(r) else list(r),
                n=n_test,
                seed=derive_seed(seed, "sel-test", i),
                n_s=params.get("n_s", 5),
                n_v=params.get("n_v", 5),
                d=params.get("d", 10),
                beta=params.get("beta", 1.0),
                noise_std=params.get("noise_std", math.sqrt(0.3)),
            )
            env, _ = datagen.gen_selection_env(spec, env_id=100 + i)
            test_envs.append(env)
        return train_envs, test_envs
    if regime == "anti_causal":
        train_envs, test_envs, _ = datagen.gen_anti_causal_envs(seed=seed, **params)
        return train_envs, test_envs
    if regime == "csv":
        train_envs, stats = ingest_csv(params["train_csv"], normalize=params.get("normalize", False))
        test_envs, _ = ingest_csv(params["test_csv"], stats=stats)
        return train_envs, test_envs
    raise ValueError(f"unknown generator regime {regime!r}")


def train_method(method: str, cell: dict, train_envs: list[EnvDataset], loss: str, seed: int) -> TrainedModel:
    """Train one method at one grid cell; cell keys override defaults."""
    spec = LossSpec(loss)
    cell = dict(cell)
    if method == "sal":
        cfg = SALConfig(seed=seed, **cell)
        return train(train_envs, spec, cfg)
    sgd = SGDConfig(
        step_size=cell.pop("step_size", 0.05),
        iters=cell.pop("iters", 1000),
        seed=seed,
    )
    cfg = BaselineConfig(method=method, sgd=sgd, **cell)
    return fit(method, train_envs, spec, cfg)


@dataclass
class SweepCell:
    method: str
    cell_index: int
    params: dict
    val_error: float | None
    mean_error: float | None
    std_error: float | None
    per_env: dict[int, float] | None
    selected: bool = False
    error: str | None = None


def _run_cell(args) -> tuple[int, int, int, float, float, float | None, dict, str | None]:
    exp_dict, mi, ci, rep, cell = args
    exp = ExperimentConfig(**exp_dict)
    method = exp.methods[mi].method
    seed = derive_seed(exp.master_seed, method, ci, rep)
    try:
        train_envs, test_envs = make_dataset(exp.generator, derive_seed(exp.master_seed, "data", rep))
        # one split per repeat, shared by every method and grid cell
        fit_envs, val_envs = validation_split(
            train_envs, exp.validation, derive_seed(exp.master_seed, "valsplit", rep)
        )
        model = train_method(method, cell, fit_envs, exp.loss, seed)
        val = evaluate(model, val_envs, exp.metric, LossSpec(exp.loss))
        test = evaluate(model, test_envs, exp.metric, LossSpec(exp.loss))
        return (mi, ci, rep, val.mean_error, test.mean_error, test.std_error, test.per_env_loss, None)
    except Exception as exc:  # recorded per cell, not fatal to the sweep
        return (mi, ci, rep, math.nan, math.nan, None, {}, f"{type(exc).__name__}: {exc}")


def sweep(exp: ExperimentConfig) -> list[SweepCell]:
    """Train every (method, cell, repeat), select per-method cells on
    validation error, and aggregate test statistics over repeats.

    Failures are recorded in the affected cell and excluded from
    selection. Results are deterministic functions of the config; worker
    count affects scheduling only.
    """
    tasks = []
    for mi, mspec in enumerate(exp.methods):
        for ci, cell in enumerate(mspec.cells()):
            for rep in range(exp.repeats):
                tasks.append((exp.to_dict(), mi, ci, rep, cell))
    if exp.jobs > 1:
        with ProcessPoolExecutor(max_workers=exp.jobs) as pool:
            raw = list(pool.map(_run_cell, tasks))
    else:
        raw = [_run_cell(t) for t in tasks]
    # aggregate by (method, cell) in deterministic order
    results: list[SweepCell] = []
    by_cell: dict[tuple[int, int], list] = {}
    for rec in raw:
        by_cell.setdefault((rec[0], rec[1]), []).append(rec)
    for mi, mspec in enumerate(exp.methods):
        cells = mspec.cells()
        method_rows: list[SweepCell] = []
        for ci, cell in enumerate(cells):
            recs = sorted(by_cell.get((mi, ci), []), key=lambda r: r[2])
            errors = [r[7] for r in recs if r[7] is not None]
            ok = [r for r in recs if r[7] is None]
            if not ok:
                method_rows.append(
                    SweepCell(mspec.method, ci, cell, None, None, None, None, error="; ".join(errors))
                )
                continue
            val = float(np.mean([r[3] for r in ok]))
            mean = float(np.mean([r[4] for r in ok]))
            stds = [r[5] for r in ok if r[5] is not None]
            std = float(np.mean(stds)) if stds else None
            env_ids = sorted(ok[0][6])
            per_env = {
                eid: float(np.mean([r[6][eid] for r in ok])) for eid in env_ids
            }
            method_rows.append(
                SweepCell(
                    mspec.method, ci, cell, val, mean, std, per_env,
                    error="; ".join(errors) if errors else None,
                )
            )
        valid = [c for c in method_rows if c.val_error is not None and math.isfinite(c.val_error)]
        if valid:
            best = min(valid, key=lambda c: (c.val_error, c.cell_index))
            best.selected = True
        results.extend(method_rows)
    return results


def write_results_csv(path, cells: list[SweepCell], header_comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "cell_index", "params", "selected", "val_error", "mean_error", "std_error", "per_env_losses", "error"]
        )
        for c in cells:
            writer.writerow(
                [
                    c.method,
                    c.cell_index,
                    json.dumps(c.params, sort_keys=True),
                    int(c.selected),
                    _fmt(c.val_error),
                    _fmt(c.mean_error),
                    _fmt(c.std_error),
                    json.dumps({str(k): v for k, v in (c.per_env or {}).items()}, sort_keys=True),
                    c.error or "",
                ]
            )


def write_long_csv(path, setting: str, cells: list[SweepCell], header_comments: list[str] | None = None) -> None:
    """Plot-ready long format: one row per (setting, env, method)."""
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["setting", "env", "method", "cell_index", "selected", "loss"])
        for c in cells:
            for eid, v in (c.per_env or {}).items():
                writer.writerow([setting, eid, c.method, c.cell_index, int(c.selected), _fmt(v)])


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(v, ".17g")
