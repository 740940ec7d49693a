"""Command line runner.

Usage::

    nonclassical <task> [--config run.json] [--seed N] [--out DIR] [--threads N]

The config is one JSON document ``{"model": {...}, "params": {...}, "seed": N}``;
command line flags override it.  Every run writes its tables plus
``manifest.json``, which is itself a valid config for reproducing the run.

Exit status: 0 success, 1 a verification check failed, 2 bad input or
precondition (including output collisions), 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import backprojection as bp
from . import elementary as el
from .errors import NonConvergence, PreconditionError
from .phase_space import KINDS, StateModel, eval_wigner
from .sampler import CutPlan, QuadratureDataset, sample_joint, sample_per_cut

TASKS = ("sample", "elementary", "optimize", "backproject", "finite-cuts", "compare", "verify")
STOCHASTIC = {"sample", "elementary", "backproject"}


class OutputCollision(PreconditionError):
    pass


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_ANGLES = {"type": "array", "items": {"type": "number"}, "minItems": 1}

PARAM_SCHEMAS = {
    "sample": {
        "type": "object",
        "properties": {
            "mode": {"enum": ["per_cut", "joint"]},
            "m": _POS_INT, "per_cut": _POS_INT,
            "cuts": _ANGLES, "counts": {"type": "array", "items": _POS_INT, "minItems": 1},
            "distribution": {"enum": ["uniform", "optimal"]},
            "M": _POS_INT,
        },
        "additionalProperties": False,
    },
    "elementary": {
        "type": "object",
        "properties": {
            "N": {"type": "integer", "minimum": 1, "maximum": el.N_CAP},
            "m": _POS_INT, "M": {"type": "integer", "minimum": 2},
            "dataset": {"type": "string"}, "spec": {"type": "string"},
        },
        "additionalProperties": False,
    },
    "optimize": {
        "type": "object",
        "properties": {
            "N_min": {"type": "integer", "minimum": 1, "maximum": el.N_CAP},
            "N_max": {"type": "integer", "minimum": 1, "maximum": el.N_CAP},
            "profile_N": {"type": "integer", "minimum": 1, "maximum": el.N_CAP},
            "r_max": _POS_NUM, "points": {"type": "integer", "minimum": 2},
        },
        "additionalProperties": False,
    },
    "backproject": {
        "type": "object",
        "properties": {
            "a": _POS_NUM, "epsilon": {"type": "number", "minimum": 0},
            "distribution": {"enum": ["uniform", "optimal"]},
            "M": {"type": "integer", "minimum": 2},
        },
        "additionalProperties": False,
    },
    "finite-cuts": {
        "type": "object",
        "properties": {
            "lambdas": {"type": "array", "items": _POS_NUM, "minItems": 1},
            "ms": {"type": "array", "items": {"type": "integer", "minimum": 2, "multipleOf": 2}, "minItems": 1},
            "M": _POS_INT,
        },
        "additionalProperties": False,
    },
    "compare": {
        "type": "object",
        "properties": {
            "Ms": {"type": "array", "items": {"type": "integer", "minimum": 100}, "minItems": 1},
            "N": {"type": "integer", "minimum": 1, "maximum": el.N_CAP},
            "m": _POS_INT,
        },
        "additionalProperties": False,
    },
    "verify": {
        "type": "object",
        "properties": {"checks": {"type": "array", "items": {"type": "string"}}},
        "additionalProperties": False,
    },
}

DEFAULTS = {
    "sample": {"mode": "per_cut", "m": 5, "per_cut": 10000, "distribution": "optimal", "M": 100000},
    "elementary": {"N": 4, "M": 1000000},
    "optimize": {"N_min": 2, "N_max": 20, "profile_N": 12, "r_max": 3.0, "points": 301},
    "backproject": {"a": 1.0, "epsilon": 1e-6, "distribution": "optimal", "M": 1000000},
    "finite-cuts": {"lambdas": [1.0, 2.0, 5.0], "ms": [4, 8, 12, 16, 20], "M": 1000000},
    "compare": {"Ms": [100000, 1000000, 10000000], "N": 16},
    "verify": {},
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "task": {"enum": list(TASKS)},
        "model": {
            "type": "object",
            "properties": {"kind": {"enum": list(KINDS)}, "lambda": _POS_NUM},
            "required": ["kind"],
            "additionalProperties": False,
        },
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_path": {"type": "string"},
        "generator_version": {"type": "string"},
        "outputs": {"type": "array"},
    },
    "additionalProperties": False,
}


def _pointer(err: jsonschema.ValidationError, prefix: str = "") -> str:
    return prefix + "".join(f"/{p}" for p in err.absolute_path) or "/"


def validate_config(config: dict, task: str) -> None:
    """Raise :class:`PreconditionError` listing every schema violation by JSON pointer."""
    lines = []
    for schema, instance, prefix in ((CONFIG_SCHEMA, config, ""),
                                     (PARAM_SCHEMAS[task], config.get("params", {}), "/params")):
        validator = jsonschema.Draft202012Validator(schema)
        for e in sorted(validator.iter_errors(instance), key=lambda e: list(map(str, e.path))):
            lines.append(f"{_pointer(e, prefix)}: {e.message}")
    if lines:
        raise PreconditionError("config does not match schema:\n  " + "\n  ".join(lines))


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------

class Outputs:
    """Write-once files under one directory."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        if p.exists():
            raise OutputCollision(f"refusing to overwrite existing output {p}")
        self.root.mkdir(parents=True, exist_ok=True)
        self.written.append(name)
        return p

    def json(self, name: str, data) -> None:
        self.path(name).write_text(json.dumps(data, indent=2, allow_nan=False) + "\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        def fmt(v):
            if isinstance(v, (bool, np.bool_)):
                return str(bool(v)).lower()
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return "%.17g" % v
        lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
        self.path(name).write_text("\n".join(lines) + "\n")


def _log(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

def _task_sample(model, params, seed, out, threads):
    if params["mode"] == "joint":
        stream = sample_joint(model, params["distribution"], params["M"], seed, threads)
        out.csv("joint.csv", ["theta", "s"], zip(stream.thetas, stream.s))
        out.json("joint.json", {"model": model.to_dict(), "distribution": stream.distribution.to_dict(),
                                "M": stream.M, "seed": seed, "generator_version": __version__})
        _log(f"wrote {stream.M} joint samples")
        return 0
    if "cuts" in params:
        counts = params.get("counts") or [params["per_cut"]] * len(params["cuts"])
        plan = CutPlan(tuple(params["cuts"]), tuple(counts))
    else:
        plan = CutPlan.uniform(params["m"], params["per_cut"])
    ds = sample_per_cut(model, plan, seed, threads)
    ds.write(out.path("dataset.csv"), out.path("dataset.json"))
    _log(f"wrote {ds.total} samples on {plan.m} cuts")
    return 0


def _load_spec(path: str) -> el.ElementaryTestSpec:
    with open(path) as fh:
        return el.ElementaryTestSpec.from_dict(json.load(fh))


def _task_elementary(model, params, seed, out, threads):
    M = params["M"]
    if "spec" in params:
        spec = _load_spec(params["spec"])
    else:
        unsq = StateModel(model.base)
        spec, _ = el.optimize_radial(unsq, params["N"], params.get("m"), M)
        spec = el.squeeze_transform(spec, model.squeeze)
    if "dataset" in params:
        ds = QuadratureDataset.from_csv(params["dataset"], model=model)
    else:
        per_cut, extra = divmod(M, spec.m)
        counts = [per_cut + (1 if j < extra else 0) for j in range(spec.m)]
        ds = sample_per_cut(model, CutPlan(spec.cuts, tuple(counts)), seed, threads)
    sampled = el.evaluate_test(ds, spec, threads)
    analytic = el.analytic_outcome(model, spec, ds.total)
    out.json("spec.json", spec.to_dict())
    out.json("outcome.json", {"sampled": sampled.to_dict(), "analytic": analytic.to_dict()})
    _log(f"mean {sampled.mean:.6g} +- {math.sqrt(sampled.variance):.3g}  "
         f"({sampled.g_stat:.2f} sigma; analytic mean {analytic.mean:.6g})")
    return 0


def _task_optimize(model, params, seed, out, threads):
    unsq = StateModel(model.base)
    rows, specs = [], {}
    for N in range(params["N_min"], params["N_max"] + 1):
        spec, _ = el.optimize_radial(unsq, N)
        G = el.radial_optimum(unsq, N).G
        rows.append((N, G))
        specs[str(N)] = el.squeeze_transform(spec, model.squeeze).to_dict()
        _log(f"N={N:2d}  G={G:+.12f}")
    out.csv("G_curve.csv", ["N", "G"], rows)
    out.json("specs.json", specs)

    spec = el.squeeze_transform(el.optimize_radial(unsq, params["profile_N"])[0], model.squeeze)
    r = np.linspace(0.0, params["r_max"], params["points"])
    out.csv("profile_r.csv", ["r", "F", "W"],
            zip(r, spec.test_function(r, 0 * r), eval_wigner(model, r, 0 * r)))
    th = np.linspace(0.0, 2 * math.pi, params["points"])
    out.csv("profile_theta.csv", ["theta", "F"], zip(th, spec.test_function(np.cos(th), np.sin(th))))
    return 0


def _task_backproject(model, params, seed, out, threads):
    k = bp.KernelSpec(params["a"], model.squeeze, params["epsilon"])
    stream = sample_joint(model, params["distribution"], params["M"], seed, threads)
    est = bp.mc_estimate(stream, k)
    res = est.to_dict()
    res["oracle"] = bp.disc_average_closed_form(params["a"], model)
    if params["epsilon"] > 0:
        res["analytic"] = bp.analytic_mc(model, k, params["distribution"], params["M"]).to_dict()
    out.json("result.json", res)
    _log(f"mean {est.mean:.6g}  sd {math.sqrt(est.variance):.3g}  delta {est.delta_bound:.3g}  ratio {est.ratio:.4g}")
    return 0


def _task_finite_cuts(model, params, seed, out, threads):
    rows, plans = [], {}
    for lam in params["lambdas"]:
        for m in params["ms"]:
            plan = bp.finite_cut_plan(lam, m)
            if params["M"] > m:
                plan.counts = bp.allocate_measurements(plan, params["M"])
            rows.append((lam, m, plan.error))
            plans[f"lambda={lam:g},m={m}"] = plan.to_dict()
            _log(f"lambda={lam:g} m={m:2d} E={plan.error:.4e}")
    out.csv("finite_cut_error.csv", ["lambda", "m", "E"], rows)
    out.json("plans.json", plans)
    return 0


def _task_compare(model, params, seed, out, threads):
    N = params["N"]
    m = params.get("m", N + 1)
    unsq = StateModel(model.base)
    spec = el.squeeze_transform(el.optimize_radial(unsq, N, m)[0], model.squeeze)
    rows = []
    for M in params["Ms"]:
        elem = el.analytic_outcome(model, spec, M)
        opt = bp.optimize_filter(M, model)
        R, valid = bp.compare_R_checked(elem, opt.estimate)
        rows.append((M, R, opt.a, opt.epsilon, elem.g_stat, opt.estimate.ratio, valid))
        _log(f"M={M:.0e}  R={R:.4f}  a={opt.a:.4f}  eps={opt.epsilon:.3e}")
    out.csv("R_curve.csv", ["M", "R", "a", "epsilon", "g_stat", "radon_ratio", "valid"], rows)
    return 0


def _task_verify(model, params, seed, out, threads):
    from .verify import run_all
    results = run_all(params.get("checks"))
    for r in results:
        _log(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    out.json("verify.json", [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results])
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {
    "sample": _task_sample,
    "elementary": _task_elementary,
    "optimize": _task_optimize,
    "backproject": _task_backproject,
    "finite-cuts": _task_finite_cuts,
    "compare": _task_compare,
    "verify": _task_verify,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config; default ./out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling and evaluation")
    parser = argparse.ArgumentParser(prog="nonclassical", parents=[common],
                                     description="Non-classicality tests from simulated quadrature data.")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        sub.add_parser(task, parents=[common])
    return parser


def resolve_config(args) -> dict:
    config: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise PreconditionError("config must be a JSON object")
    validate_config(config, args.task)
    if config.get("task", args.task) != args.task:
        raise PreconditionError(f"config is for task {config['task']!r}, not {args.task!r}")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise PreconditionError("--seed must be an unsigned 64-bit integer")
        config["seed"] = args.seed
    if args.out:
        config["output_path"] = args.out
    if args.task in STOCHASTIC and "seed" not in config:
        raise PreconditionError(f"task {args.task!r} is stochastic and needs a seed (--seed or config 'seed')")
    params = dict(DEFAULTS[args.task])
    params.update(config.get("params", {}))
    model = config.get("model", {"kind": "single_photon"})
    return {"task": args.task, "model": {"kind": model["kind"], "lambda": float(model.get("lambda", 1.0))},
            "params": params, "seed": config.get("seed"), "output_path": config.get("output_path", "out")}


def run(config: dict, threads: int = 1) -> int:
    task = config["task"]
    out = Outputs(config["output_path"])
    manifest_path = out.root / "manifest.json"
    if manifest_path.exists():
        raise OutputCollision(f"refusing to overwrite existing run in {out.root}")
    model = StateModel.from_dict(config["model"])
    status = HANDLERS[task](model, config["params"], config["seed"], out, threads)
    manifest = {k: v for k, v in config.items() if v is not None}
    manifest.update(generator_version=__version__, outputs=list(out.written))
    out.json("manifest.json", manifest)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return run(config, max(1, args.threads))
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
