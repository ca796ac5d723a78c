"""Command-line front end.

Usage::

    markov-ldp SUBCOMMAND --config run.json [--out DIR] [--workers N] [--seed S]

Every subcommand writes ``SUBCOMMAND.json`` (metadata and estimates) into
``DIR``, plus ``SUBCOMMAND.csv`` when the result is tabular, and echoes the
JSON document on stdout.  Output is deterministic for a given config.

Exit status is 0 on success, 2 for invalid input and 3 when a word, length
or precision budget is exhausted.  Errors are reported on stderr as JSON with
a module-qualified code.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import DEVIATION_ENSEMBLES, PRESSURE_ENSEMBLES, ExperimentConfig, load_config
from .errors import ConfigInvalid, MarkovLDPError, Terminated
from .gauss import (
    continuants,
    cf_expand,
    cylinder_interval,
    gauss_mass,
    lebesgue_length,
    periodic_point,
    sample_gauss,
)
from .gibbs import check_distortion, check_mixing_constant, check_premeasure, estimate_gibbs_constant
from .ldp import GAUSS_ANCHOR, check_rate_curve, deviation_rate_constrained, free_energy, mc_deviation, rate_legendre
from .pressure import (
    pressure_periodic,
    pressure_preimage,
    pressure_spectral,
    pressure_transfer_bracket,
    pressure_word_sum,
)
from .shift import full_shift
from .tightness import build_schedule, check_expo_bound, visit_distribution

SUBCOMMANDS = ("pressure", "rate", "deviate", "mc", "tightness", "cfrac", "verify-gibbs")
GAUSS_DEFAULT_M = {"pressure": 20, "transfer": 100, "deviate": 20, "rate": 100}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator}
    return obj


def _is_gauss(cfg: ExperimentConfig) -> bool:
    return (cfg.potential is not None and cfg.potential.kind == "gauss_log") or (
        cfg.shift is not None and cfg.shift.kind == "gauss")


def _system(cfg: ExperimentConfig, sub: str, need_obs: bool = False):
    cfg.require(sub, "potential", *(("observable",) if need_obs else ()))
    gauss = _is_gauss(cfg)
    if gauss:
        M = cfg.M or (cfg.shift.M if cfg.shift and cfg.shift.M else GAUSS_DEFAULT_M[sub])
        spec = full_shift(M)
    else:
        cfg.require(sub, "shift")
        spec = cfg.shift.build(cfg.M)
        M = spec.alphabet_size
    pot = cfg.potential.build(M)
    obs = cfg.observable.build(M) if need_obs else None
    return spec, pot, obs, gauss


def _pressure(cfg, workers):
    spec, pot, _, gauss = _system(cfg, "pressure")
    ensembles = cfg.ensembles or (["word_sum", "periodic", "preimage"] + (["transfer"] if gauss else ["spectral"]))
    bad = set(ensembles) - set(PRESSURE_ENSEMBLES)
    if bad:
        raise ConfigInvalid(f"unknown pressure ensembles {sorted(bad)}")
    anchor = cfg.anchor
    if anchor is None:
        anchor = GAUSS_ANCHOR if gauss else [0]
    records = []
    for ens in ensembles:
        if ens == "transfer":
            est = pressure_transfer_bracket(pot, cfg.M or GAUSS_DEFAULT_M["transfer"], cfg.grid_size,
                                            cfg.n_iter or 40, cfg.tail)
            records.append(est.to_json())
            continue
        if ens == "spectral":
            records.append(pressure_spectral(spec, pot).to_json())
            continue
        for n in cfg.n:
            if ens == "word_sum":
                est = pressure_word_sum(spec, pot, n, cfg.budget)
            elif ens == "periodic":
                est = pressure_periodic(spec, pot, n, method=cfg.method,
                                        grid_size=cfg.grid_size, tail=False, budget=cfg.budget)
            else:
                est = pressure_preimage(spec, pot, n, anchor, cfg.budget)
            records.append(est.to_json())
    rows = [(r["n"], r["ensemble"], r["value"], r["lo"], r["hi"]) for r in records]
    return {"estimates": records}, (["n", "ensemble", "value", "lo", "hi"], rows)


def _rate(cfg, workers):
    spec, pot, obs, gauss = _system(cfg, "rate", need_obs=True)
    betas = cfg.betas.points() if cfg.betas else np.linspace(-8.0, 8.0, 81)
    kwargs = {"method": cfg.method, "M": cfg.M, "grid_size": cfg.grid_size, "tail": cfg.tail, "anchor": cfg.anchor}
    if cfg.method in ("word_sum", "periodic", "preimage"):
        kwargs["n"] = cfg.n[0]
    if cfg.n_iter:
        kwargs["n_iter"] = cfg.n_iter
    if gauss:
        kwargs["M"] = cfg.M or GAUSS_DEFAULT_M["rate"]
    fe = free_energy(spec, pot, obs, betas, **kwargs)
    alphas = cfg.alphas.points() if cfg.alphas else np.linspace(obs.inf_bound, obs.sup_bound, 21)
    curve = rate_legendre(fe, alphas)
    check = check_rate_curve(fe, curve)
    doc = curve.to_json()
    doc.update(rows=[{"alpha": a, "I": i, "beta_star": b} for a, i, b in curve.rows()],
               check={"nonnegative": check.nonnegative, "rate_at_mean": check.rate_at_mean,
                      "max_convexity_violation": check.max_convexity_violation, "pass": check.passed()},
               free_energy={"betas": fe.betas, "values": fe.values, "convex": fe.convex,
                            "max_violation": fe.max_violation, "P0": fe.meta.get("P0")})
    return doc, (["alpha", "I", "beta_star"], curve.rows())


def _deviate(cfg, workers):
    spec, pot, obs, gauss = _system(cfg, "deviate", need_obs=True)
    cfg.require("deviate", "alpha")
    ensembles = cfg.ensembles or ["lebesgue", "periodic", "preimage"]
    bad = set(ensembles) - set(DEVIATION_ENSEMBLES)
    if bad:
        raise ConfigInvalid(f"unknown deviation ensembles {sorted(bad)}")
    model = cfg.model.build() if cfg.model else None
    records = []
    for n in cfg.n:
        for ens in ensembles:
            res = deviation_rate_constrained(ens, spec, pot, obs, cfg.alpha, cfg.direction, n,
                                             M=cfg.M if gauss else None, anchor=cfg.anchor, model=model,
                                             grid_size=cfg.grid_size, tail=cfg.tail)
            records.append(res.to_json())
    rows = [(r["n"], r["ensemble"], r["value"], r["lo"], r["hi"]) for r in records]
    return {"estimates": records}, (["n", "ensemble", "value", "lo", "hi"], rows)


def _mc(cfg, workers):
    cfg.require("mc", "model", "observable", "alpha")
    model = cfg.model.build()
    obs = cfg.observable.build(model.alphabet_size)
    res = mc_deviation(model, obs, cfg.alpha, cfg.direction, cfg.n[0], cfg.trials, cfg.seed, workers)
    return res.to_json(), None


def _tightness(cfg, workers):
    cfg.require("tightness", "model", "theta")
    model = cfg.model.build()
    out, rows = [], []
    for n in cfg.n:
        schedule = build_schedule(model, cfg.theta, cfg.depth or n)
        dist = visit_distribution(model, schedule, n, cfg.trials, cfg.seed)
        rep = check_expo_bound(dist, cfg.theta)
        doc = rep.to_json()
        doc.update(levels=schedule.to_json()["levels"], certified=schedule.certified, method=dist.method)
        if dist.ci is not None:
            doc["ci"] = dist.ci
        out.append(doc)
        rows += [(n, m, p, b) for m, (p, b) in enumerate(zip(rep.p, rep.bound))]
    result = out[0] if len(out) == 1 else {"results": out}
    return result, (["n", "m", "p", "bound"], rows)


def _cfrac(cfg, workers):
    cfg.require("cfrac", "cfrac")
    c = cfg.cfrac
    if c.op == "expand":
        x = c.exact_x()
        try:
            digits, terminated = cf_expand(x, c.n_digits), False
        except Terminated as exc:
            digits, terminated = exc.digits, True
        doc = {"op": "expand", "x": x, "digits": digits, "terminated": terminated}
        if digits:
            k = continuants(digits)
            doc["convergent"] = Fraction(k.p, k.q)
        return doc, None
    if c.op == "cylinder":
        lo, hi = cylinder_interval(c.digits)
        return {"op": "cylinder", "digits": c.digits, "lo": lo, "hi": hi, "lebesgue": lebesgue_length(c.digits),
                "gauss_mass": gauss_mass(c.digits)}, None
    if c.op == "periodic":
        pp = periodic_point(c.digits)
        return {"op": "periodic", "digits": c.digits, "x": pp.x, "weight": pp.weight, "log_weight": pp.log_weight}, None
    samples = sample_gauss(cfg.seed, c.n_digits, c.size)
    header = [f"a{i + 1}" for i in range(c.n_digits)]
    return {"op": "sample", "seed": cfg.seed, "n_digits": c.n_digits, "samples": samples}, (header, samples.tolist())


def _verify_gibbs(cfg, workers):
    cfg.require("verify-gibbs", "model")
    model = cfg.model.build()
    depth = cfg.depth or 6
    est = estimate_gibbs_constant(model, n_max=depth, budget=cfg.budget)
    c0 = model.c0 if model.c0 is not None else est.c0
    dist = check_distortion(model, depth, c0, cfg.budget)
    M = model.alphabet_size
    pairs = [(a, b) for a in range(min(M, 2)) for b in range(min(M, 2))]
    mixing = check_mixing_constant(model, range(1, min(depth, 4) + 1), pairs, cfg.budget)
    premeasure = check_premeasure(model, min(depth, 4), cfg.budget)
    doc = {"model": model.kind, "declared_c0": model.c0, "c0_used": c0, "gibbs_constant": est.to_json(),
           "distortion": dist.to_json(), "mixing": mixing.to_json(), "premeasure_defect": premeasure,
           "pass": dist.violations == 0 and premeasure < 1e-12}
    rows = [(d + 1, v) for d, v in enumerate(est.log_c0_by_depth)]
    return doc, (["depth", "log_c0"], rows)


HANDLERS = {"pressure": _pressure, "rate": _rate, "deviate": _deviate, "mc": _mc, "tightness": _tightness,
            "cfrac": _cfrac, "verify-gibbs": _verify_gibbs}


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for v in row])
    return buf.getvalue()


def run(subcommand: str, cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    """Run one subcommand and write its artifacts into ``out``; returns the JSON document."""
    doc, table = HANDLERS[subcommand](cfg, workers)
    doc = dict(doc)
    doc.update(subcommand=subcommand, seed=cfg.seed, config=cfg.model_dump(mode="json", exclude_none=True))
    doc = _clean(doc)
    out.mkdir(parents=True, exist_ok=True)
    stem = subcommand.replace("-", "_")
    (out / f"{stem}.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if table is not None:
        (out / f"{stem}.csv").write_text(_csv_text(*table))
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markov-ldp", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers (default: CPU count)")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigInvalid("seed must be >= 0")
            cfg = cfg.model_copy(update={"seed": args.seed})
        workers = args.workers or cfg.workers or os.cpu_count() or 1
        if workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        doc = run(args.subcommand, cfg, Path(args.out), workers)
    except MarkovLDPError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_status
    except (ValueError, TypeError) as exc:
        print(json.dumps({"error": f"cli.{type(exc).__name__}", "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(doc, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
