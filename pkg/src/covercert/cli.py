"""Command-line front end.

Each subcommand reads a TOML or JSON config, writes ``<subcommand>.csv``
(one row per grid point and theorem check) and ``<subcommand>.json`` into
``--out-dir``, and exits nonzero when a validity check fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from covercert import __version__, config
from covercert.errors import ConfigError, CovercertError, ValidationFailure

log = logging.getLogger("covercert")

SCHEMA_LINE = "# covercert-schema=1"


# -- output ------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "x".join(_cell(x) for x in v)
    return str(v)


def render_csv(columns, rows) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else ("inf" if o > 0 else "-inf" if o < 0 else "nan")
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, Path):
        return str(o)
    return o


def write_outputs(out_dir: Path, name: str, columns, rows, summary: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.csv").write_text(render_csv(columns, rows))
    (out_dir / f"{name}.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


# -- input helpers -----------------------------------------------------------

def _ensemble_spec(cfg):
    spec = cfg.params["ensemble"]
    base = cfg.base_dir
    if isinstance(spec, str):
        path = Path(spec) if Path(spec).is_absolute() else base / spec
        spec = json.loads(path.read_text())
        base = path.parent
    return spec, base


def load_cq(cfg):
    from covercert.ensembles import cq_ensemble_from_spec

    spec, base = _ensemble_spec(cfg)
    if "generator" in spec and "seed" not in spec["generator"]:
        spec["generator"]["seed"] = cfg.seed
    return cq_ensemble_from_spec(spec, base)


def load_multipartite(cfg):
    from covercert.ensembles import as_multipartite, cq_ensemble_from_spec, multipartite_from_spec

    spec, base = _ensemble_spec(cfg)
    if "generator" in spec and "seed" not in spec["generator"]:
        spec["generator"]["seed"] = cfg.seed
    if "alphabets" in spec or "alphabets" in spec.get("generator", {}):
        return multipartite_from_spec(spec)
    return as_multipartite(cq_ensemble_from_spec(spec, base))


def load_graph(cfg):
    from covercert.expander import graph_from_spec

    spec = cfg.params["graph"]
    if isinstance(spec, str):
        spec = {"path": str(cfg.base_dir / spec)}
    return graph_from_spec(spec)


# -- subcommands -------------------------------------------------------------

def run_divergences(cfg):
    from covercert.divergences import divergence_report

    e = load_cq(cfg)
    eps = [float(x) for x in config.as_list(cfg.params["eps"])]
    rep = divergence_report(e, eps)
    cols = ["theorem", "hypothesis", "eps", "I", "I2", "Imax", "I2_eps", "Imax_eps",
            "H", "H2", "Hmin", "H2_eps", "Hmin_eps", "IH_eps", "IH_is_lower_bound", "pass"]
    rows = [dict(r, theorem="divergence-ordering", hypothesis=True, **{"pass": r["ordering_ok"]})
            for r in rep["rows"]]
    return cols, rows, {"ensemble": {"size": e.size, "dim": e.dim}}


def run_spectral(cfg):
    from covercert.expander import conservation_residual, deviation_table, second_eigenvalue

    g = load_graph(cfg)
    tmax = int(cfg.params["tmax"])
    prof = second_eigenvalue(g)
    dev = deviation_table(g, tmax)
    rows = []
    for t, d in enumerate(dev):
        bound = prof.lam ** t
        rows.append({"theorem": "expander-mixing", "hypothesis": True, "t": t, "lambda": prof.lam,
                     "deviation": d, "lambda_pow_t": bound, "pass": d <= bound + 1e-10})
    cols = ["theorem", "hypothesis", "t", "lambda", "deviation", "lambda_pow_t", "pass"]
    summary = {"graph": {"n": g.n, "degree": g.degree, "family": g.family},
               "lambda": prof.lam, "second_eigenvalue": prof.second, "is_expander": prof.is_expander,
               "gap_below_quarter": prof.satisfies_gap(),
               "conservation_residual": conservation_residual(g, tmax)}
    return cols, rows, summary


def _auto_sizes(e, reqs, margin):
    need = max(reqs.values())
    return [2 ** (max(0, math.ceil(need)) + int(margin))] * e.k


COVER_COLS = ["theorem", "hypothesis", "eps", "delta", "sizes", "K", "lambda", "trials", "mean_distance",
              "mean_stderr", "threshold", "tail_point", "ci_lo", "ci_hi", "bound", "bound_const8", "pass"]


def _cover_rows(rec, base):
    rows = []
    for theorem, (hyp, ok) in rec.checks.items():
        row = dict(base, theorem=theorem, hypothesis=hyp, mean_distance=rec.mean_distance,
                   mean_stderr=rec.mean_stderr, trials=rec.params["trials"], **{"pass": ok})
        key = {"multipartite-concentration": "multipartite", "unipartite-chernoff": "unipartite",
               "expander-concentration": "expander"}.get(theorem)
        if key is None:
            row["bound"] = rec.expectation_bound
        else:
            tail = rec.tails[key]
            row.update(threshold=tail.threshold, tail_point=tail.point, ci_lo=tail.ci95[0],
                       ci_hi=tail.ci95[1], bound=rec.bounds[key])
            if key == "expander":
                row["bound_const8"] = rec.bounds["expander_const8"]
        rows.append(row)
    return rows


def run_covering_iid(cfg):
    from covercert.concentration import covering_experiment_iid
    from covercert.ensembles import sample_size_requirements

    e = load_multipartite(cfg)
    trials = int(cfg.params["trials"])
    rows, records = [], []
    for eps in config.as_list(cfg.params["eps"]):
        eps = float(eps)
        reqs = sample_size_requirements(e, eps)
        sizes_opt = cfg.params["sizes"]
        if sizes_opt == "auto":
            size_grid = [_auto_sizes(e, reqs, cfg.params["size_margin"])]
        elif sizes_opt and isinstance(sizes_opt[0], list):
            size_grid = sizes_opt
        else:
            size_grid = [sizes_opt]
        for sizes in size_grid:
            for delta in config.as_list(cfg.params["delta"]):
                rec = covering_experiment_iid(e, sizes, eps, float(delta), trials, cfg.seed,
                                              cfg.threads, requirements=reqs)
                rows += _cover_rows(rec, {"eps": eps, "delta": float(delta), "sizes": list(sizes)})
                records.append(rec.as_dict())
    return COVER_COLS, rows, {"records": records,
                              "requirements": {"x".join(map(str, k)): v for k, v in reqs.items()}}


def run_covering_expander(cfg):
    from covercert.concentration import covering_experiment_expander
    from covercert.divergences import conditional_entropies
    from covercert.expander import second_eigenvalue

    e = load_cq(cfg)
    g = load_graph(cfg)
    prof = second_eigenvalue(g)
    trials = int(cfg.params["trials"])
    rows, records = [], []
    for eps in config.as_list(cfg.params["eps"]):
        eps = float(eps)
        hmin = conditional_entropies(e, eps).Hmin_eps
        if cfg.params["K"] == "auto":
            n = e.size
            rhs = math.log2(n) + math.log2(math.log2(n)) - hmin + math.log2(1 / eps)
            ks = [2 ** (max(0, math.ceil(rhs)) + int(cfg.params["K_margin"]))]
        else:
            ks = [int(k) for k in config.as_list(cfg.params["K"])]
        for K in ks:
            for delta in config.as_list(cfg.params["delta"]):
                rec = covering_experiment_expander(e, g, K, eps, float(delta), trials, cfg.seed,
                                                   cfg.threads, hmin_eps=hmin, profile=prof)
                rows += _cover_rows(rec, {"eps": eps, "delta": float(delta), "K": K, "lambda": prof.lam})
                records.append(rec.as_dict())
    return COVER_COLS, rows, {"records": records, "lambda": prof.lam}


def run_excision_verify(cfg):
    from covercert.concentration import (excision_parameters, trace_distance_excision_family,
                                         trace_distance_window_bounds, verify_excision_family)
    from covercert.expander import second_eigenvalue

    e = load_cq(cfg)
    g = load_graph(cfg)
    prof = second_eigenvalue(g)
    rows, reports = [], []
    for K in config.as_list(cfg.params["K"]):
        K = int(K)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(K,)))
        fam = trace_distance_excision_family(e, K)
        rep = verify_excision_family(fam, g, int(cfg.params["samples"]), rng,
                                     int(cfg.params["windows_per_walk"]))
        row = {"theorem": "bounded-excision", "hypothesis": 0 < prof.lam < 1, "K": K, "lambda": prof.lam,
               "windows": rep.windows, "violations": rep.violations, "worst_slack": rep.worst_slack,
               "pass": rep.passed}
        if 0 < prof.lam < 1:
            p = excision_parameters(K, e.size, prof.lam, 2.0, trace_distance_window_bounds(K))
            row.update(a=p.a, b=int(p.b[0]), d_i=float(p.d[0]), sum_d2=p.sum_d2())
        rows.append(row)
        reports.append(dict(rep.as_dict(), K=K))
    cols = ["theorem", "hypothesis", "K", "lambda", "windows", "violations", "worst_slack",
            "a", "b", "d_i", "sum_d2", "pass"]
    return cols, rows, {"reports": reports, "lambda": prof.lam}


BOUND_COLS = ["theorem", "hypothesis", "parameters", "bound", "threshold", "bound_const8",
              "a", "b", "d_i", "pass"]


def _params_text(d: dict) -> str:
    return ";".join(f"{k}={_cell(v)}" for k, v in d.items())


def _grid(table: dict, keys):
    vals = [config.as_list(table[k]) for k in keys]
    if any(not v for v in vals):
        raise ConfigError("parameter grids must be nonempty")
    for combo in itertools.product(*vals):
        yield dict(zip(keys, combo))


def _need(table, keys, name):
    for k in keys:
        if k not in table:
            raise ConfigError(f"bounds.{name} entry needs '{k}'")


def run_bounds(cfg):
    from covercert import concentration as cc

    rows = []

    def ok(b, hi):
        return bool(math.isfinite(b) and 0 <= b <= hi)

    for t in config.as_list(cfg.params.get("expander", [])):
        _need(t, ("alphabet", "K", "lambda", "delta"), "expander")
        keys = [k for k in ("alphabet", "K", "lambda", "delta", "eps") if k in t]
        for pt in _grid(t, keys):
            lam = float(pt["lambda"])
            b = cc.bound_expander_conc(int(pt["alphabet"]), int(pt["K"]), lam, float(pt["delta"]))
            row = {"theorem": "expander-concentration", "hypothesis": 0 < lam < 1,
                   "parameters": _params_text(pt), "bound": b,
                   "bound_const8": cc.bound_expander_conc(int(pt["alphabet"]), int(pt["K"]), lam,
                                                          float(pt["delta"]), 8.0),
                   "pass": ok(b, 2)}
            if "eps" in pt:
                row["threshold"] = cc.expander_expectation(float(pt["eps"])) + float(pt["delta"])
            if 0 < lam < 1:
                K = int(pt["K"])
                p = cc.excision_parameters(K, int(pt["alphabet"]), lam, 2.0, cc.trace_distance_window_bounds(K))
                row.update(a=p.a, b=int(p.b[0]), d_i=float(p.d[0]))
                rows.append(row)
                eb = cc.bound_bounded_excision(p, float(pt.get("eps", pt["delta"])))
                rows.append({"theorem": "bounded-excision", "hypothesis": True,
                             "parameters": _params_text(pt), "bound": eb, "a": p.a, "b": int(p.b[0]),
                             "d_i": float(p.d[0]), "pass": ok(eb, 2)})
            else:
                rows.append(row)
    for t in config.as_list(cfg.params.get("multipartite", [])):
        _need(t, ("sizes", "eps", "delta"), "multipartite")
        sizes_grid = t["sizes"] if t["sizes"] and isinstance(t["sizes"][0], list) else [t["sizes"]]
        for sizes in sizes_grid:
            for pt in _grid(t, ["eps", "delta"]):
                p = cc.ChernoffBoundParams(sizes, float(pt["eps"]), float(pt["delta"]), float(t.get("trace", 1.0)))
                b = cc.bound_multipartite_conc(p)
                rows.append({"theorem": "multipartite-concentration", "hypothesis": True,
                             "parameters": _params_text(dict(sizes=sizes, **pt)), "bound": b,
                             "threshold": cc.multipartite_threshold(p), "pass": ok(b, 1)})
    for t in config.as_list(cfg.params.get("unipartite", [])):
        _need(t, ("A", "delta"), "unipartite")
        keys = [k for k in ("A", "delta", "eps") if k in t]
        for pt in _grid(t, keys):
            b = cc.bound_unipartite_chernoff(float(pt["A"]), float(pt["delta"]))
            row = {"theorem": "unipartite-chernoff", "hypothesis": True, "parameters": _params_text(pt),
                   "bound": b, "pass": ok(b, 1)}
            if "eps" in pt:
                row["threshold"] = cc.unipartite_threshold(float(pt["eps"]), float(pt["delta"]))
            rows.append(row)
    for t in config.as_list(cfg.params.get("mcdiarmid", [])):
        _need(t, ("c", "delta"), "mcdiarmid")
        for pt in _grid(t, ["delta"]):
            b = cc.bound_mcdiarmid(t["c"], float(pt["delta"]))
            rows.append({"theorem": "mcdiarmid", "hypothesis": True,
                         "parameters": _params_text(dict(n=len(t["c"]), **pt)), "bound": b, "pass": ok(b, 1)})
    for t in config.as_list(cfg.params.get("garg", [])):
        _need(t, ("d", "eps", "lambda", "K"), "garg")
        t = dict(t)
        t.setdefault("C", 1.0)
        for pt in _grid(t, ["d", "eps", "lambda", "K", "C"]):
            b = cc.bound_garg_baseline(float(pt["d"]), float(pt["eps"]), float(pt["lambda"]),
                                       float(pt["K"]), float(pt["C"]))
            rows.append({"theorem": "garg-baseline", "hypothesis": True, "parameters": _params_text(pt),
                         "bound": b, "pass": ok(b, float(pt["d"]))})
    if not rows:
        raise ConfigError("bounds config lists no evaluations")
    return BOUND_COLS, rows, {"evaluations": len(rows)}


def run_rates(cfg):
    from covercert.rates import (qmac_from_json, qmac_iid_region, qmac_rate_region,
                                 wiretap_from_json, wiretap_rate_bound)

    inst = cfg.params["instance"]
    if isinstance(inst, str):
        inst = str(Path(inst) if Path(inst).is_absolute() else cfg.base_dir / inst)
    kind = cfg.params["kind"]
    eps_list = config.as_list(cfg.params.get("eps", [None]))
    rows, reports = [], []
    cols = ["theorem", "hypothesis", "eps", "bound", "IH_eps", "leakage", "penalty",
            "IH_is_lower_bound", "pass"]
    for eps in eps_list:
        eps = None if eps is None else float(eps)
        if kind == "wiretap":
            w = wiretap_from_json(inst, eps)
            r = wiretap_rate_bound(w)
            d = r.as_dict()
            rows.append({"theorem": "wiretap", "hypothesis": True, "eps": w.eps, "bound": r.rate,
                         "IH_eps": r.ih, "leakage": d["leakage"], "penalty": r.penalty,
                         "IH_is_lower_bound": r.ih_is_lower_bound, "pass": math.isfinite(r.rate)})
            reports.append(dict(d, eps=w.eps))
        elif kind == "qmac":
            q = qmac_from_json(inst, eps)
            reg = qmac_rate_region(q)
            iid = qmac_iid_region(q)
            for name, val in (("R1", reg.r1), ("R2", reg.r2), ("R12", reg.r12)):
                term = reg.terms[name]
                rows.append({"theorem": f"qmac-{name}", "hypothesis": True, "eps": q.eps, "bound": val,
                             "IH_eps": term["IH_eps"], "leakage": max(0.0, max(term["Imax_eps"])),
                             "penalty": reg.terms["penalty"], "IH_is_lower_bound": term["IH_is_lower_bound"],
                             "pass": math.isfinite(val)})
            for name, val in zip(("R1", "R2", "R12"), iid):
                rows.append({"theorem": f"qmac-iid-{name}", "hypothesis": True, "eps": q.eps,
                             "bound": val, "pass": math.isfinite(val)})
            reports.append(dict(reg.as_dict(), iid={"R1": iid[0], "R2": iid[1], "R12": iid[2]}, eps=q.eps))
        else:
            raise ConfigError(f"rates kind must be 'wiretap' or 'qmac', got {kind!r}")
    return cols, rows, {"reports": reports}


RUNNERS = {
    "divergences": run_divergences,
    "spectral": run_spectral,
    "covering-iid": run_covering_iid,
    "covering-expander": run_covering_expander,
    "excision-verify": run_excision_verify,
    "bounds": run_bounds,
    "rates": run_rates,
}


def run(config_path, subcommand: str, out_dir=".", seed=None, trials=None, threads=None) -> int:
    """Run one subcommand; returns the process exit status.

    Raises :class:`ConfigError` for bad configs and :class:`ValidationFailure`
    (after writing outputs) when any row fails its check.
    """
    cfg = config.load(config_path, subcommand, seed=seed, trials=trials, threads=threads)
    log.info("resolved config: %s", json.dumps(_jsonable(cfg.resolved()), sort_keys=True))
    cols, rows, summary = RUNNERS[subcommand](cfg)
    failed = [r for r in rows if not r.get("pass", True)]
    summary = dict(summary, config=cfg.resolved(), version=__version__, rows=len(rows),
                   failed=len(failed), passed=not failed)
    write_outputs(Path(out_dir), subcommand, cols, rows, summary)
    if failed:
        raise ValidationFailure(f"{len(failed)} of {len(rows)} checks failed in {subcommand}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covercert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"covercert {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out-dir", default=".", help="directory for the CSV and JSON outputs")
        p.add_argument("--trials", type=int, help="override the Monte Carlo trial count")
        p.add_argument("--threads", type=int, help="worker threads for Monte Carlo trials")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args.config, args.subcommand, args.out_dir, args.seed, args.trials, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    except CovercertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
