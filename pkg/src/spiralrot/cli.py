"""Command-line front end: build plans and emit deterministic check reports.

Every command reads an optional JSON config; scalar flags override it.
Exit codes: 0 when every check passes, 1 when a mathematical check fails,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import construction as con
from . import holder as hol
from . import modulus as mod
from . import rotation as rot
from .mapcore import PiecewiseRadialMap

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMANDS = ("build", "rotation-profile", "distortion-report", "modulus-check", "holder-fit", "sharpness")


class UsageError(Exception):
    pass


# -- serialisation -----------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(rows: list) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
    return buf.getvalue()


def _lin(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


# -- config ------------------------------------------------------------


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed config JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _number(cfg: dict, key: str, default, kind=float):
    v = cfg.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise UsageError(f"{key} must be a number")
    if kind is int:
        if float(v) != int(v):
            raise UsageError(f"{key} must be an integer")
        return int(v)
    return float(v)


def _seed(cfg: dict) -> int:
    s = _number(cfg, "seed", None, int)
    if s is None:
        raise UsageError("this command draws random samples: a seed is required (--seed or config 'seed')")
    if s < 0:
        raise UsageError("seed must be non-negative")
    return s


def plan_from_config(cfg: dict) -> con.SchedulePlan:
    """Plan from 'plan_file' or from p, N, mode and gauge."""
    if "plan_file" in cfg:
        try:
            with open(cfg["plan_file"], encoding="utf-8") as fh:
                return con.SchedulePlan.from_dict(json.load(fh))
        except OSError as exc:
            raise UsageError(f"cannot read plan file: {exc}") from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"malformed plan file: {exc}") from exc
    p = _number(cfg, "p", 2.0)
    if not p > 1.0 or not math.isfinite(p):
        raise UsageError("p must be a finite number > 1")
    N = _number(cfg, "N", 8, int)
    if not 0 <= N <= 64:
        raise UsageError("N must lie in 0..64")
    mode = cfg.get("mode", con.STRETCH_ROTATION)
    if mode not in con.MODES:
        raise UsageError(f"mode must be one of {con.MODES}")
    g = cfg.get("gauge", {})
    if not isinstance(g, dict):
        raise UsageError("gauge must be an object")
    try:
        gauge = con.GaugeSpec.from_dict(g) if g else con.GaugeSpec()
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"bad gauge: {exc}") from exc
    return con.generate_schedule(p, N, gauge, mode)


def map_from_config(cfg: dict, plan: con.SchedulePlan) -> PiecewiseRadialMap:
    if "map_file" in cfg:
        try:
            with open(cfg["map_file"], encoding="utf-8") as fh:
                return PiecewiseRadialMap.from_dict(json.load(fh))
        except OSError as exc:
            raise UsageError(f"cannot read map file: {exc}") from exc
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"malformed map file: {exc}") from exc
    return con.compose_schedule(plan)


def _alpha_below(cfg: dict, plan: con.SchedulePlan) -> float:
    a = _number(cfg, "alpha_below", 3.0 * plan.p / (plan.p - 1.0))
    if not a > 0:
        raise UsageError("alpha_below must be positive")
    return a


# -- commands ----------------------------------------------------------
# each returns (rows, summary, passed)


def cmd_build(cfg: dict, out: str | None):
    plan = plan_from_config(cfg)
    fmap = con.compose_schedule(plan)
    feas = con.check_feasibility(plan)
    rows = [{"constraint": c.name, "passed": c.passed, "slack": c.slack} for c in feas]
    hard = [c for c in feas if c.name != "gauge summability"]
    files = {}
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "plan.json").write_text(dumps_json(plan.to_dict()), encoding="utf-8")
        (d / "map.json").write_text(dumps_json(fmap.to_dict()), encoding="utf-8")
        files = {"plan": str(d / "plan.json"), "map": str(d / "map.json")}
    summary = {
        "plan": plan.to_dict(),
        "files": files,
        "feasible": all(c.passed for c in hard),
        "gauge_summable": all(c.passed for c in feas if c.name == "gauge summability"),
    }
    return rows, summary, summary["feasible"]


def cmd_rotation_profile(cfg: dict):
    plan = plan_from_config(cfg)
    fmap = map_from_config(cfg, plan)
    ab = _alpha_below(cfg, plan)
    k = _number(cfg, "grid_points", 40, int)
    if k < 2:
        raise UsageError("grid_points must be at least 2")
    method = cfg.get("method", "profile")
    if method not in ("profile", "track"):
        raise UsageError("method must be 'profile' or 'track'")
    deep = (plan.log_r[-1] - 1.0) if plan.N else math.log(1e-4)
    grid = np.linspace(deep, -1e-3, k)
    pts = sorted(set(grid.tolist()) | set(plan.log_r), reverse=True)
    marks = set(plan.log_r)
    if method == "track":
        prof = rot.continuous_arg(fmap, 0.0, log_t_start=0.0, log_t_end=pts[-1], stops=pts)
        args = [prof.at(L) for L in pts]
    else:
        args = [float(fmap.log_profile(L)[1]) for L in pts]
    rows = []
    worst = 0.0
    for L, a in zip(pts, args):
        lb = float(rot.bound_curve(L, plan.p, ab))
        lratio = math.log(abs(a)) - lb if a != 0.0 else -math.inf
        worst = max(worst, _lin(lratio))
        rows.append(
            {
                "t": math.exp(L),
                "log_t": L,
                "unwrapped_arg": a,
                "bound_value": _lin(lb),
                "log_bound_value": lb,
                "ratio": _lin(lratio),
                "at_r_n": L in marks,
            }
        )
    summary = {"p": plan.p, "alpha_below": ab, "method": method, "max_ratio": worst, "rows": len(rows)}
    return rows, summary, math.isfinite(worst)


def cmd_distortion_report(cfg: dict):
    plan = plan_from_config(cfg)
    fmap = map_from_config(cfg, plan)
    seed = _seed(cfg)
    n = _number(cfg, "samples", 1_000_000, int)
    if n < 10_000:
        raise UsageError("samples must be at least 10^4")
    thr = _number(cfg, "ratio_threshold", 0.9)
    li = con.log_distortion_lp_integral(plan)
    norm = math.exp(li / plan.p)
    mc_norm, mc_se = con.distortion_lp_norm_mc(fmap, plan.p, n, seed)
    z = abs(mc_norm - norm) / mc_se if mc_se > 0 else (0.0 if mc_norm == norm else math.inf)
    rep = con.series_report(plan, thr)
    dist = rep["distortion"]
    rows = []
    for i in range(plan.N):
        rows.append(
            {
                "n": i + 1,
                "log_r": plan.log_r[i],
                "log_alpha": plan.log_alpha[i],
                "log_q": plan.log_q[i],
                "log_K": float(con.log_block_distortions(plan)[i]),
                "log_term": dist.log_terms[i],
                "log_partial_sum": dist.log_partial_sums[i],
            }
        )
    # fewer than two terms leaves nothing to test
    convergent = dist.convergent if plan.N >= 2 else True
    summary = {
        "p": plan.p,
        "N": plan.N,
        "log_integral": li,
        "lp_norm": norm,
        "log_lp_norm": li / plan.p,
        "mc_lp_norm": mc_norm,
        "mc_standard_error": mc_se,
        "mc_samples": n,
        "seed": seed,
        "z_score": z,
        "mc_within_3se": z <= 3.0,
        "series": rep.to_dict(),
        "distortion_convergent": convergent,
    }
    return rows, summary, bool(convergent and z <= 3.0)


def _z0_list(cfg: dict, plan: con.SchedulePlan):
    if "z0" in cfg:
        vals = cfg["z0"]
        if not isinstance(vals, list) or not vals:
            raise UsageError("z0 must be a non-empty list")
        out = []
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
                raise UsageError("every z0 must be a number in (0, 1)")
            out.append(math.log(v))
        return out
    if "log_z0" in cfg:
        vals = cfg["log_z0"]
        if not isinstance(vals, list) or not vals or not all(isinstance(v, (int, float)) and v < 0 for v in vals):
            raise UsageError("log_z0 must be a non-empty list of negative numbers")
        return [float(v) for v in vals]
    count = _number(cfg, "z0_count", 20, int)
    if count < 1:
        raise UsageError("z0_count must be positive")
    lo = plan.log_r[-1] if plan.N else math.log(1e-4)
    hi = plan.log_r[0] if plan.N else math.log(0.5)
    lo = max(lo, math.log(np.finfo(float).tiny) + 1.0)
    rng = np.random.default_rng(np.random.SeedSequence(_seed(cfg)))
    return sorted(rng.uniform(lo, hi, count).tolist(), reverse=True)


def cmd_modulus_check(cfg: dict):
    plan = plan_from_config(cfg)
    fmap = map_from_config(cfg, plan)
    ab = _alpha_below(cfg, plan)
    hc = _number(cfg, "holder_constant", 1.0)
    direct = _number(cfg, "direct_samples", 0, int)
    Ls = _z0_list(cfg, plan)
    rows = []
    for i, L in enumerate(Ls):
        rep = mod.verify_bound_chain(fmap, plan, None, ab, hc, log_z0=L)
        row = rep.to_dict()
        if direct:
            up = mod.weighted_modulus_upper(
                plan, mod.build_ball_chain(rep.z0), fmap=fmap, mc_samples=direct, seed=_seed(cfg) + i
            )
            row["direct_weighted_integral"] = up.direct
            row["direct_within_split"] = up.direct_within_split()
        rows.append(row)
    ok = all(r["holds"] and r.get("direct_within_split", True) for r in rows)
    lu = np.array([r["log_upper"] for r in rows])
    lz = np.array(Ls)
    slope = float(np.polyfit(lz, lu, 1)[0]) if len(set(Ls)) >= 2 else math.nan
    summary = {
        "p": plan.p,
        "alpha_below": ab,
        "count": len(rows),
        "all_hold": ok,
        "upper_slope_vs_log_z0": slope,
        "expected_slope": -2.0 / plan.p,
    }
    return rows, summary, ok


def cmd_holder_fit(cfg: dict):
    plan = plan_from_config(cfg)
    fmap = map_from_config(cfg, plan)
    seed = _seed(cfg)
    per = _number(cfg, "pairs_per_region", 200, int)
    lo = _number(cfg, "scale_min", 1e-6)
    hi = _number(cfg, "scale_max", 1e-1)
    if not (0 < lo < hi <= 0.1):
        raise UsageError("need 0 < scale_min < scale_max <= 0.1")
    if hi / lo < 100:
        raise UsageError("scales must span at least two decades")
    scales = hol.dyadic_scales(lo, hi)
    sampler = hol.PairSampler.for_map(fmap, seed, per)
    above = hol.fit_exponent(fmap.eval, sampler, hol.ABOVE, scales)
    below = hol.fit_exponent(fmap.eval, sampler, hol.BELOW, scales)
    inv = hol.check_inverse_holder(fmap, plan, scales=scales, seed=seed, per_region=per)
    named = [("map", above), ("map", below), ("inverse", inv.inverse_above)]
    flags = {"map_above_at_least_1_minus_1_over_p_minus_0.05": above.exponent >= 1.0 - 1.0 / plan.p - 0.05}
    flags.update({f"inverse_{k}": v for k, v in inv.flags.items()})
    summary = {"map_above": above.to_dict(), "map_below": below.to_dict(), "inverse": inv.to_dict()}
    if plan.mode == con.STRETCH_ROTATION and plan.N:
        g = hol.check_g_bounds(plan, scales=scales, seed=seed, per_region=per)
        named += [("g", g.above), ("g", g.below)]
        flags.update({f"g_{k}": v for k, v in g.flags.items()})
        summary["g"] = g.to_dict()
    summary["flags"] = flags
    rows = [r for name, fit in named for r in fit.rows(name)]
    return rows, summary, all(flags.values())


def cmd_sharpness(cfg: dict):
    plan = plan_from_config(cfg)
    fmap = map_from_config(cfg, plan)
    ab = _alpha_below(cfg, plan)
    rtol = _number(cfg, "rtol", 1e-12)
    res = rot.sharpness_check(fmap, plan, rtol)
    ratios = [rot.log_theorem1_ratio(fmap, L, plan.p, ab) for L in plan.log_r]
    rows = [
        {
            "n": r.n,
            "log_r": r.log_r,
            "abs_arg": r.lhs,
            "log_abs_arg": r.log_lhs,
            "lower_bound": r.rhs,
            "log_lower_bound": r.log_rhs,
            "passed": r.passed,
            "growth_ratio": _lin(lr),
            "log_growth_ratio": lr,
        }
        for r, lr in zip(res, ratios)
    ]
    first_eq = abs(math.expm1(res[0].log_lhs - res[0].log_rhs)) <= rtol if res else True
    lin = np.exp(ratios) if ratios else np.array([])
    spread = float(lin.max() / np.median(lin)) if lin.size else math.nan
    summary = {
        "p": plan.p,
        "mode": plan.mode,
        "alpha_below": ab,
        "all_pass": all(r.passed for r in res),
        "equality_at_n1": first_eq,
        "growth_ratio_max": float(lin.max()) if lin.size else math.nan,
        "growth_ratio_max_over_median": spread,
    }
    return rows, summary, bool(summary["all_pass"] and first_eq)


# -- entry point -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spiralrot", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--seed", type=int, help="seed for Monte-Carlo and pair sampling")
    ap.add_argument("--out", help="output file (directory for build); stdout if omitted")
    ap.add_argument("--format", choices=("csv", "json"), help="report format")
    ap.add_argument("--p", type=float, dest="p", help="integrability exponent p > 1")
    ap.add_argument("--N", type=int, dest="N", help="number of blocks")
    ap.add_argument("--mode", choices=con.MODES)
    ap.add_argument("--samples", type=int, help="Monte-Carlo sample count")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        for key in ("seed", "p", "N", "mode", "samples"):
            v = getattr(args, key)
            if v is not None:
                cfg[key] = v
        fmt = args.format or ("csv" if args.command == "rotation-profile" else "json")
        if args.command == "build":
            rows, summary, ok = cmd_build(cfg, args.out)
        else:
            fn = {
                "rotation-profile": cmd_rotation_profile,
                "distortion-report": cmd_distortion_report,
                "modulus-check": cmd_modulus_check,
                "holder-fit": cmd_holder_fit,
                "sharpness": cmd_sharpness,
            }[args.command]
            rows, summary, ok = fn(cfg)
    except UsageError as exc:
        print(f"spiralrot: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except con.ConstraintViolation as exc:
        print(f"spiralrot: infeasible: constraint '{exc.constraint}' failed: {exc}", file=sys.stderr)
        return EXIT_FAIL

    cfg_echo = {k: v for k, v in sorted(cfg.items())}
    if fmt == "json":
        text = dumps_json({"command": args.command, "config": cfg_echo, "passed": ok, "summary": summary, "rows": rows})
    else:
        text = dumps_csv(rows)
    if args.command == "build" or args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return EXIT_OK if ok else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
