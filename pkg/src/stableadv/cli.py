"""Command-line front end. Thin adapters only: every subcommand parses
arguments, delegates to the library, and serializes results.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Errors print a single machine-parsable line on stderr:
``ERROR kind=<usage|data|numeric> msg="..."``. All randomness flows from
``--seed``; reruns with identical arguments produce byte-identical files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

from . import __version__
from .errors import DataFormatError, DivergenceError, SamplingBudgetError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to usage error
        raise UsageError(message)


def _provenance(seed, config_obj) -> list[str]:
    blob = json.dumps(config_obj, sort_keys=True, default=str).encode()
    return [
        f"stableadv v{__version__}",
        f"seed={seed} config_sha256={hashlib.sha256(blob).hexdigest()[:16]}",
    ]


def _load_params(raw: str | None) -> dict:
    if not raw:
        return {}
    if raw.startswith("@"):
        try:
            with open(raw[1:]) as fh:
                return json.load(fh)
        except OSError as exc:
            raise DataFormatError(f"cannot read params file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"bad JSON in params file: {exc}") from None
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is not valid JSON: {exc}") from None


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad JSON config: {exc}") from None


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    from . import datagen
    from .evalharness import make_dataset, write_dataset_csv

    params = _load_params(args.params)
    regime = args.regime.replace("-", "_")
    generator = {"regime": regime, **params}
    train_envs, test_envs = make_dataset(generator, args.seed)
    os.makedirs(args.out, exist_ok=True)
    prov = _provenance(args.seed, generator)
    write_dataset_csv(os.path.join(args.out, "train.csv"), train_envs, prov)
    write_dataset_csv(os.path.join(args.out, "test.csv"), test_envs, prov)
    if regime == "toy":
        gt = datagen.GroundTruth([0], [1], "5*s + s^2")
    elif regime == "selection_bias":
        n_s = params.get("n_s", 5)
        n_v = params.get("n_v", 5)
        gt = datagen.GroundTruth(
            list(range(n_s)), list(range(n_s, n_s + n_v)), "theta_s . s + beta * s1 s2 s3"
        )
    elif regime == "anti_causal":
        n_s = params.get("n_s", 9)
        n_v = params.get("n_v", 1)
        gt = datagen.GroundTruth(
            list(range(n_s)), list(range(n_s, n_s + n_v)), "theta_s . s + beta * s1 s2 s3"
        )
    else:
        raise UsageError(f"unknown regime {args.regime!r}")
    _write_json(
        os.path.join(args.out, "meta.json"),
        {
            "generator": generator,
            "seed": args.seed,
            "ground_truth": gt.to_dict(),
            "provenance": prov,
        },
    )
    if args.verbose:
        print(f"wrote train.csv ({sum(e.n for e in train_envs)} rows), "
              f"test.csv ({sum(e.n for e in test_envs)} rows) to {args.out}")
    return 0


_METHOD_CHOICES = ("sal", "erm", "lasso", "ridge", "wdrl", "irm")


def _cmd_train(args) -> int:
    from .evalharness import ingest_csv, train_method
    from .rngutil import derive_seed

    cfg = _load_config(args.config)
    loss = args.loss or cfg.pop("loss", "squared")
    params = cfg.pop("params", cfg)  # accept flat or nested config layout
    envs, _ = ingest_csv(os.path.join(args.data, "train.csv"))
    seed = args.seed if args.seed is not None else params.pop("seed", 0)
    params.pop("loss", None)
    if args.verbose:
        print(f"effective config: method={args.method} loss={loss} seed={seed} params={params}")
    model = train_method(args.method, params, envs, loss, derive_seed(seed, "train", args.method))
    out = model.to_dict()
    out["provenance"] = _provenance(seed, {"method": args.method, "loss": loss, **params})
    _write_json(args.out, out)
    return 0


def _cmd_evaluate(args) -> int:
    from .evalharness import evaluate, ingest_csv
    from .models import LossSpec
    from .trainer import TrainedModel

    try:
        with open(args.model) as fh:
            model = TrainedModel.from_dict(json.load(fh))
    except OSError as exc:
        raise DataFormatError(f"cannot read model: {exc}") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad model file: {exc}") from None
    envs, _ = ingest_csv(os.path.join(args.data, "test.csv"))
    metric = {"rmse": "rmse", "loss": "mean_loss", "misclass": "misclassification_rate"}[args.metric]
    report = evaluate(model, envs, metric, LossSpec(model.config.get("loss", "squared")))
    with open(args.out, "w") as fh:
        for line in _provenance(0, {"model": args.model, "metric": metric}):
            fh.write(f"# {line}\n")
        fh.write("kind,env,value\n")
        for env_id in sorted(report.per_env_loss):
            fh.write(f"per_env,{env_id},{report.per_env_loss[env_id]:.17g}\n")
        fh.write(f"summary,mean_error,{report.mean_error:.17g}\n")
        std = "" if report.std_error is None else f"{report.std_error:.17g}"
        fh.write(f"summary,std_error,{std}\n")
    if args.verbose:
        print(f"mean_error={report.mean_error:.6f} std_error={report.std_error}")
    return 0


def _cmd_benchmark(args) -> int:
    from . import experiments
    from .evalharness import sweep, write_long_csv, write_results_csv

    overrides = _load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    if args.table == "toy-sweep":
        kwargs = {"master_seed": args.seed, **overrides}
        rows = experiments.toy_sweep(**kwargs)
        prov = _provenance(args.seed, {"table": args.table, **kwargs})
        experiments.write_toy_rows(os.path.join(args.out, "coefficients.csv"), rows, prov)
        if args.verbose:
            for r in rows:
                print(f"{r.method} knob={r.knob_index} stable={r.coef_stable:.3f} unstable={r.coef_unstable:.3f}")
        return 0
    if args.table == "selection-bias":
        exp = experiments.selection_bias_experiment(master_seed=args.seed, jobs=args.jobs, **overrides)
    elif args.table == "anti-causal":
        exp = experiments.anti_causal_experiment(master_seed=args.seed, jobs=args.jobs, **overrides)
    else:
        raise UsageError(f"unknown table {args.table!r}")
    cells = sweep(exp)
    prov = _provenance(args.seed, exp.to_dict())
    write_results_csv(os.path.join(args.out, "results.csv"), cells, prov)
    write_long_csv(os.path.join(args.out, "long.csv"), exp.name, cells, prov)
    if args.verbose:
        for c in cells:
            if c.selected:
                print(f"{c.method}: mean={c.mean_error:.4f} std={c.std_error:.4f}")
    return 0


def _cmd_check_grad(args) -> int:
    from .evalharness import ingest_csv
    from .models import LossSpec
    from .trainer import SALConfig, gradient_accuracy_check, make_snapshot

    cfg = _load_config(args.config)
    loss = cfg.pop("loss", "squared")
    warmup = cfg.pop("warmup_iters", 3)
    if args.data:
        envs, _ = ingest_csv(os.path.join(args.data, "train.csv"))
    else:
        from . import datagen

        envs, _ = datagen.gen_selection_bias(
            r=[1.7], kappa=0.95, n=2000, seed=args.seed
        )
    sal_params = cfg.pop("params", cfg)
    sal_params.pop("loss", None)
    sal_params.pop("seed", None)
    from .experiments import SELECTION_SAL

    merged = dict(SELECTION_SAL) | sal_params
    snap = make_snapshot(envs, LossSpec(loss), SALConfig(seed=args.seed, **merged), warmup)
    frac = gradient_accuracy_check(snap, args.trials, args.seed)
    print(f"gradient_accuracy fraction={frac:.4f} trials={args.trials}")
    return 0


def _cmd_verify_ot(args) -> int:
    import numpy as np

    from .ot import DiscreteDistribution, containment_check, duality_check
    from .rngutil import derive_seed, normal

    rng = np.random.default_rng(derive_seed(args.seed, "p0"))
    k = 6
    P0 = DiscreteDistribution(normal(rng, 0.0, 1.0, (k, 2)), np.full(k, 1.0 / k))
    w = np.array([1.0, 5.0])
    ok = True
    for form in ("sq_l2", "l1"):
        rep = containment_check(P0, rho=0.5, w=w, n_trials=args.trials, seed=derive_seed(args.seed, form), cost_form=form)
        status = "pass" if rep.passed else "FAIL"
        print(
            f"containment[{form}]: {status} trials={rep.trials} inside={rep.inside_weighted} "
            f"violations={rep.violations} boundary_gap={rep.boundary_gap:.2e}"
        )
        ok = ok and rep.passed
    dual = duality_check(min(args.trials, 100), derive_seed(args.seed, "dual"))
    status = "pass" if dual.passed else "FAIL"
    print(
        f"duality: {status} instances={dual.instances} failures={dual.failures} "
        f"max_violation={dual.max_violation:.2e}"
    )
    ok = ok and dual.passed
    if not ok:
        raise DivergenceError("optimal-transport property checks failed")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="stableadv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stableadv {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write synthetic dataset CSVs")
    g.add_argument("--regime", required=True, choices=["toy", "selection-bias", "anti-causal"])
    g.add_argument("--params", help="JSON string or @file with generator parameters")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--verbose", action="store_true")
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("train", help="train a method on a dataset directory")
    t.add_argument("--method", required=True, choices=_METHOD_CHOICES)
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--loss", choices=["squared", "absolute", "logistic"])
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--metric", default="loss", choices=["rmse", "loss", "misclass"])
    e.add_argument("--out", required=True)
    e.add_argument("--verbose", action="store_true")
    e.set_defaults(func=_cmd_evaluate)

    b = sub.add_parser("benchmark", help="reproduce a simulation table")
    b.add_argument("--table", required=True, choices=["toy-sweep", "selection-bias", "anti-causal"])
    b.add_argument("--config", help="JSON overrides for the experiment builder")
    b.add_argument("--seed", type=int, default=2024)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=_cmd_benchmark)

    c = sub.add_parser("check-grad", help="gradient-direction accuracy diagnostic")
    c.add_argument("--data", help="dataset directory (defaults to the pinned biased-selection setting)")
    c.add_argument("--config", help="JSON config for the trainer snapshot")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=7)
    c.set_defaults(func=_cmd_check_grad)

    v = sub.add_parser("verify-ot", help="run the transport-oracle property suites")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=5)
    v.set_defaults(func=_cmd_verify_ot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f'ERROR kind=usage msg="{exc}"\n')
        return 1
    except (DataFormatError, SamplingBudgetError, FileNotFoundError) as exc:
        sys.stderr.write(f'ERROR kind=data msg="{exc}"\n')
        return 2
    except (DivergenceError, FloatingPointError) as exc:
        sys.stderr.write(f'ERROR kind=numeric msg="{exc}"\n')
        return 3


if __name__ == "__main__":
    sys.exit(main())
