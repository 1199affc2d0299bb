"""Command line entry point: ``diffpost <experiment> --config FILE``.

Every run writes a ``manifest.json`` holding the fully resolved
configuration (defaults included), so the run can be repeated from the
manifest alone.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
import traceback
from dataclasses import asdict, fields
from multiprocessing import get_context
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bayes import (PriorConfig, mcmc_run, posterior_diagnostics, prior_distance_sample,
                    prior_model, reference_index_set, truncation_level)
from .concentration import (GridFn2, bernstein_experiment, bivariate_experiment,
                            empirical_sup_experiment)
from .estimator import EstimationError, EstimatorConfig, estimate
from .fixtures import TruthConfig, make_truth
from .generator import assemble_generator, transition_kernel
from .gridfn import Grid, l2_distance, write_csv
from .simulate import SamplePath, euler_reflected, sample_chain
from .verify import CHECKS, simulator_consistency
from .wavelets import build_basis

CONFIG_VERSION = 1
EXPERIMENTS = ("simulate", "estimate", "rates", "posterior", "concentration", "verify")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _dataclass_schema(cls) -> dict:
    kinds = {"float": "number", "int": "integer", "str": "string",
             "int | None": ["integer", "null"], "float | None": ["number", "null"]}
    props = {}
    for f in fields(cls):
        t = kinds.get(str(f.type).replace("'", ""))
        props[f.name] = {"type": t} if t else {}
    return {"type": "object", "properties": props, "additionalProperties": False}


def _tuple_fields(cls) -> dict:
    return {f.name: {"type": "array", "items": {"type": "number"}}
            for f in fields(cls) if "tuple" in str(f.type)}


_truth_schema = _dataclass_schema(TruthConfig)
_truth_schema["properties"].update(_tuple_fields(TruthConfig))
_prior_schema = _dataclass_schema(PriorConfig)
_prior_schema["properties"]["L_n"] = {"type": ["integer", "null"]}
_prior_schema["properties"]["L_bar_n"] = {"type": ["integer", "null"]}

SCHEMA = {
    "type": "object",
    "required": ["version", "experiment", "seed"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "grid_m": {"type": "integer", "minimum": 3, "maximum": 14},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "s": {"type": "number"},
        "A": {"type": "number"},
        "B": {"type": "number"},
        "truth": _truth_schema,
        "basis": {"type": "object", "additionalProperties": False, "properties": {
            "N": {"type": "integer", "minimum": 1}, "J0": {"type": "integer", "minimum": 0},
            "Jmax": {"type": ["integer", "null"]}}},
        "estimator": _dataclass_schema(EstimatorConfig),
        "sampler": {"type": "object", "additionalProperties": False, "properties": {
            "kind": {"enum": ["chain", "euler"]},
            "fine_step": {"type": "number", "exclusiveMinimum": 0}}},
        "n": {"type": "integer", "minimum": 1},
        "n_ladder": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "replicates": {"type": "integer", "minimum": 1},
        "path": {"type": ["string", "null"]},
        "prior": _prior_schema,
        "mcmc": {"type": "object", "additionalProperties": False, "properties": {
            "chains": {"type": "integer", "minimum": 1},
            "iterations": {"type": "integer", "minimum": 1},
            "proposal_scale": {"type": "number", "exclusiveMinimum": 0},
            "thinning": {"type": "integer", "minimum": 1},
            "burn_in": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "prior_draws": {"type": "integer", "minimum": 1}}},
        "concentration": {"type": "object", "additionalProperties": False, "properties": {
            "n": {"type": "integer", "minimum": 2}, "R": {"type": "integer", "minimum": 100},
            "J": {"type": "integer", "minimum": 0},
            "bump_center": {"type": "number"}, "bump_width": {"type": "number"}}},
        "verify": {"type": "object", "additionalProperties": False, "properties": {
            "checks": {"type": "array", "items": {"enum": list(CHECKS) + ["simulator_consistency"]}},
            "m": {"type": ["integer", "null"], "minimum": 3}}},
    },
}

DEFAULTS = {
    "out": "runs/default",
    "grid_m": 10,
    "delta": 0.1,
    "s": 2.0,
    "A": 0.1,
    "B": 0.9,
    "truth": asdict(TruthConfig()),
    "basis": {"N": 6, "J0": 2, "Jmax": None},
    "estimator": asdict(EstimatorConfig()),
    "sampler": {"kind": "chain", "fine_step": 1e-3},
    "n": 16000,
    "n_ladder": [1000, 4000, 16000, 64000],
    "replicates": 20,
    "path": None,
    "prior": {**asdict(PriorConfig()), "L_n": None, "L_bar_n": None},
    "mcmc": {"chains": 4, "iterations": 20000, "proposal_scale": 0.1, "thinning": 10,
             "burn_in": 0.2, "prior_draws": 2000},
    "concentration": {"n": 10000, "R": 1000, "J": 3, "bump_center": 0.3, "bump_width": 0.1},
    "verify": {"checks": list(CHECKS), "m": None},
}


def resolve_config(raw: dict) -> dict:
    """Validate against the schema and fill every default explicitly."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc.message} at "
                          f"{'/'.join(map(str, exc.absolute_path)) or '<root>'}") from exc
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    if cfg["path"] is not None and not Path(cfg["path"]).exists():
        raise ConfigError(f"referenced path {cfg['path']} does not exist")
    return cfg


def load_config(path: str | Path, seed: int | None = None, out: str | None = None) -> dict:
    raw = json.loads(Path(path).read_text())
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    return resolve_config(raw)


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def _truth(cfg: dict):
    grid = Grid(cfg["grid_m"])
    tc = dict(cfg["truth"])
    for key in ("tau_pattern", "beta_pattern"):
        tc[key] = tuple(tc[key])
    basis = build_basis(cfg["basis"]["N"], cfg["basis"]["J0"], cfg["basis"]["Jmax"], grid)
    return make_truth(TruthConfig(**tc), grid, basis)


def _simulate(cfg: dict, truth, n: int, rng: np.random.Generator, seed=None) -> SamplePath:
    sampler = cfg["sampler"]
    if sampler["kind"] == "euler":
        return euler_reflected(truth, cfg["delta"], n, sampler["fine_step"], rng, seed=seed)
    K = transition_kernel(assemble_generator(truth), cfg["delta"])
    return sample_chain(K, truth.mu, n, rng, seed=seed)


def _seeds(seed: int, *shape) -> list:
    """Independent child seed sequences, one per index of ``shape``."""
    total = int(np.prod(shape))
    return np.random.SeedSequence(seed).spawn(total)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _manifest(cfg: dict, out: Path, extra: dict | None = None) -> None:
    _write_json(out / "manifest.json", {"package_version": __version__,
                                        "config": cfg, **(extra or {})})


def _slope(ns, medians) -> float | None:
    ns = np.asarray(ns, dtype=float)
    med = np.asarray(medians, dtype=float)
    ok = np.isfinite(med) & (med > 0)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(ns[ok]), np.log(med[ok]), 1)[0])


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_simulate(cfg: dict) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    truth = _truth(cfg)
    rng = np.random.default_rng(cfg["seed"])
    path = _simulate(cfg, truth, cfg["n"], rng, cfg["seed"])
    path.save(out / "path.csv")
    for name, f in (("sigma2", truth.sigma2), ("drift", truth.b), ("mu", truth.mu)):
        write_csv(f, out / f"truth_{name}.csv")
    report = {"n": path.n, "delta": path.delta, "sampler": cfg["sampler"]["kind"]}
    _write_json(out / "report.json", report)
    _manifest(cfg, out)
    return report


def run_estimate(cfg: dict) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    truth = _truth(cfg)
    if cfg["path"]:
        path = SamplePath.load(cfg["path"])
    else:
        path = _simulate(cfg, truth, cfg["n"], np.random.default_rng(cfg["seed"]), cfg["seed"])
    est = estimate(path, EstimatorConfig(**cfg["estimator"]), truth.grid)
    write_csv(est.sigma2_hat, out / "sigma2_hat.csv")
    write_csv(est.b_hat, out / "drift_hat.csv")
    report = {
        "n": path.n, "kappa1_hat": est.kappa1_hat, "diagnostics": est.diagnostics,
        "sigma2_error": l2_distance(est.sigma2_hat, truth.sigma2, cfg["A"], cfg["B"]),
        "drift_error": l2_distance(est.b_hat, truth.b, cfg["A"], cfg["B"]),
    }
    _write_json(out / "report.json", report)
    _manifest(cfg, out)
    return report


def _rates_replicate(args) -> list[dict]:
    cfg, r, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    truth = _truth(cfg)
    ecfg = EstimatorConfig(**cfg["estimator"])
    rows = []
    try:
        path = _simulate(cfg, truth, max(cfg["n_ladder"]), rng)
    except Exception as exc:  # noqa: BLE001 - recorded per replicate
        return [{"n": n, "replicate": r, "status": f"simulation: {exc}",
                 "sigma2_error": float("nan"), "drift_error": float("nan"),
                 "J": -1, "J_bar": -1} for n in cfg["n_ladder"]]
    for n in cfg["n_ladder"]:
        row = {"n": n, "replicate": r}
        try:
            est = estimate(path.head(n), ecfg, truth.grid)
            row.update(status="ok",
                       sigma2_error=l2_distance(est.sigma2_hat, truth.sigma2, cfg["A"], cfg["B"]),
                       drift_error=l2_distance(est.b_hat, truth.b, cfg["A"], cfg["B"]),
                       J=est.J, J_bar=est.J_bar)
        except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
            row.update(status=f"estimation: {exc}", sigma2_error=float("nan"),
                       drift_error=float("nan"), J=-1, J_bar=-1)
        rows.append(row)
    return rows


def _map(func, tasks, workers: int):
    if workers <= 1:
        return [func(t) for t in tasks]
    with get_context("fork").Pool(workers) as pool:
        return pool.map(func, tasks)


def run_rates(cfg: dict, workers: int = 1) -> dict:
    """Estimation errors over the n ladder and their log-log slopes."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    seeds = _seeds(cfg["seed"], cfg["replicates"])
    tasks = [(cfg, r, seeds[r]) for r in range(cfg["replicates"])]
    rows = [row for chunk in _map(_rates_replicate, tasks, workers) for row in chunk]
    rows.sort(key=lambda d: (d["n"], d["replicate"]))
    keys = ["n", "replicate", "status", "sigma2_error", "drift_error", "J", "J_bar"]
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow([f"{row[k]:.12g}" if isinstance(row[k], float) else row[k] for k in keys])
    ladder = cfg["n_ladder"]
    s = cfg["s"]
    med_s, med_b, failures = [], [], []
    for n in ladder:
        sel = [r for r in rows if r["n"] == n]
        # failed replicates count as infinite error in the median
        errs_s = [r["sigma2_error"] if r["status"] == "ok" else np.inf for r in sel]
        errs_b = [r["drift_error"] if r["status"] == "ok" else np.inf for r in sel]
        med_s.append(float(np.median(errs_s)))
        med_b.append(float(np.median(errs_b)))
        failures.append(sum(r["status"] != "ok" for r in sel))
    slope_s, slope_b = _slope(ladder, med_s), _slope(ladder, med_b)
    report = {
        "n_ladder": ladder, "replicates": cfg["replicates"],
        "median_sigma2_error": med_s, "median_drift_error": med_b,
        "failures": failures,
        "slope_sigma2": slope_s, "slope_drift": slope_b,
        "target_slope_sigma2": -s / (2 * s + 3),
        "target_slope_drift": -(s - 1) / (2 * s + 3),
        "sigma2_median_non_increasing": bool(np.all(np.diff(med_s) <= 0)),
    }
    if slope_s is None:
        report["note"] = "slope undefined: the ladder needs at least two sample sizes"
    _write_json(out / "report.json", report)
    _manifest(cfg, out, {"workers": workers})
    return report


def _prior_for(cfg: dict, n: int) -> PriorConfig:
    pc = dict(cfg["prior"])
    coarsest = reference_index_set(pc["N"], pc["J0"], pc["A"], pc["B_int"]).levels()[0]
    for key in ("L_n", "L_bar_n"):
        if pc[key] is None:
            pc[key] = truncation_level(n, pc["s"], coarsest)
    return PriorConfig(**pc)


def _posterior_chain(args):
    cfg, n, seed_seq, path = args
    pcfg = _prior_for(cfg, n)
    mc = cfg["mcmc"]
    return mcmc_run(pcfg, path, mc["iterations"], mc["proposal_scale"],
                    np.random.default_rng(seed_seq), thinning=mc["thinning"],
                    burn_in=mc["burn_in"], seed=cfg["seed"])


def run_posterior(cfg: dict, workers: int = 1) -> dict:
    """Chains on nested data sets over the n ladder and contraction diagnostics."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    truth = _truth(cfg)
    mc = cfg["mcmc"]
    ladder = cfg["n_ladder"]
    data_seed, prior_seed, *chain_seeds = _seeds(cfg["seed"], 2 + len(ladder) * mc["chains"])
    path = _simulate(cfg, truth, max(ladder), np.random.default_rng(data_seed))
    path.save(out / "path.csv")
    tasks = [(cfg, n, chain_seeds[i * mc["chains"] + c], path.head(n))
             for i, n in enumerate(ladder) for c in range(mc["chains"])]
    chains = _map(_posterior_chain, tasks, workers)
    report = {"n_ladder": ladder, "per_n": []}
    table = []
    for i, n in enumerate(ladder):
        group = chains[i * mc["chains"]:(i + 1) * mc["chains"]]
        for c, ch in enumerate(group):
            ch.save(out / f"chain_n{n}_c{c}.csv")
        diag = posterior_diagnostics(group, truth, n, cfg["s"], cfg["A"], cfg["B"])
        diag.pop("sigma2_distances")
        diag.pop("drift_distances")
        diag["prior"] = asdict(group[0].cfg)
        diag["warnings"] = [w for ch in group for w in ch.warnings]
        report["per_n"].append(diag)
        table.append([n] + list(diag["sigma2_quantiles"].values())
                     + list(diag["drift_quantiles"].values()))
    pcfg = _prior_for(cfg, max(ladder))
    ps, pb = prior_distance_sample(pcfg, truth, mc["prior_draws"],
                                   np.random.default_rng(prior_seed), cfg["A"], cfg["B"])
    report["prior_sigma2_median"] = float(np.median(ps))
    report["prior_drift_median"] = float(np.median(pb))
    medians = [d["sigma2_median"] for d in report["per_n"]]
    report["sigma2_medians"] = medians
    report["sigma2_median_non_increasing"] = bool(np.all(np.diff(medians) <= 0))
    with open(out / "posterior.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [f"sigma2_q{q}" for q in (5, 25, 50, 75, 95)]
                   + [f"drift_q{q}" for q in (5, 25, 50, 75, 95)])
        for row in table:
            w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
    _write_json(out / "report.json", report)
    _manifest(cfg, out, {"workers": workers})
    return report


def run_concentration(cfg: dict) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    truth = _truth(cfg)
    g = truth.grid
    cc = cfg["concentration"]
    seeds = _seeds(cfg["seed"], 4)
    f = g.fn(lambda x: np.exp(-((x - cc["bump_center"]) / cc["bump_width"]) ** 2))
    report = {}
    for i, start in enumerate(("stationary", 0.0)):
        tt = bernstein_experiment(truth, f, cc["n"], cc["R"], np.random.default_rng(seeds[i]),
                                  cfg["delta"], start)
        name = f"bernstein_{'stationary' if start == 'stationary' else 'x0_0'}"
        tt.to_csv(out / f"{name}.csv")
        report[name] = {"kappa_fit": tt.kappa_fit, "kappa_fit_no_log": tt.kappa_fit_no_log,
                        **tt.meta}
    f2 = GridFn2.from_callable(g, lambda x, y: np.sin(3 * x) * np.cos(2 * y))
    bt = bivariate_experiment(truth, f2, cc["n"], cc["R"], np.random.default_rng(seeds[2]),
                              cfg["delta"])
    bt.to_csv(out / "bivariate.csv")
    report["bivariate"] = {"kappa_fit": bt.kappa_fit, **bt.meta}
    basis = build_basis(cfg["basis"]["N"], cfg["basis"]["J0"], cfg["basis"]["Jmax"], g)
    es = empirical_sup_experiment(truth, basis, cc["J"], cc["n"], cc["R"],
                                  np.random.default_rng(seeds[3]), cfg["delta"])
    report["empirical_sup"] = {k: es[k] for k in ("dim", "kappa_fit", "fits", "dominance")}
    _write_json(out / "report.json", report)
    _manifest(cfg, out)
    return report


def run_verify(cfg: dict) -> dict:
    """Named checks with measured values; failures are entries, not errors."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    vc = cfg["verify"]
    opts = {} if vc["m"] is None else {"m": vc["m"]}
    results = []
    for name in vc["checks"]:
        try:
            if name == "simulator_consistency":
                res = simulator_consistency(_truth(cfg), rng, delta=cfg["delta"])
            else:
                res = CHECKS[name](opts, rng)
            results.append(res.as_dict())
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failed check
            results.append({"name": name, "passed": False, "measured": {},
                            "tolerance": {}, "detail": {"error": repr(exc)}})
    report = {"checks": results, "all_passed": all(r["passed"] for r in results)}
    _write_json(out / "report.json", report)
    _manifest(cfg, out)
    return report


RUNNERS = {
    "simulate": lambda cfg, workers: run_simulate(cfg),
    "estimate": lambda cfg, workers: run_estimate(cfg),
    "rates": run_rates,
    "posterior": run_posterior,
    "concentration": lambda cfg, workers: run_concentration(cfg),
    "verify": lambda cfg, workers: run_verify(cfg),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffpost", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--strict", action="store_true",
                       help="exit non-zero when a verification check fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if cfg["experiment"] != args.command:
        print(f"error: config is for {cfg['experiment']!r}, not {args.command!r}",
              file=sys.stderr)
        return 2
    start = time.time()
    try:
        report = RUNNERS[args.command](cfg, args.workers)
    except Exception:  # noqa: BLE001 - reported and mapped to the exit code
        traceback.print_exc()
        return 1
    print(json.dumps({"experiment": args.command, "out": cfg["out"],
                      "seconds": round(time.time() - start, 2)}))
    if args.command == "verify":
        for r in report["checks"]:
            print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}")
        if args.strict and not report["all_passed"]:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
