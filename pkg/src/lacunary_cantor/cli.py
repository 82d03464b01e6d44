"""Command line runner: construct, optimality, invariants, dimension.

Each command reads a JSON config, runs one experiment and writes a bundle
into --out: summary.json, CSV tables, two-column plot data (*.dat) and a
PNG rendering of each plot-data file.

Exit codes: 0 every asserted inequality passed, 1 the run finished but some
asserted inequality failed, 2 hypothesis gate failure, 3 construction
failure, 4 config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import blaschke, cantor, martingale
from .blaschke import BlaschkeProduct
from .circle_core import GaugeFunction
from .schedule import CoefficientSchedule, _parse_complex, explicit_schedule

EXIT_OK, EXIT_CHECK_FAILED, EXIT_GATE, EXIT_CONSTRUCTION, EXIT_CONFIG = 0, 1, 2, 3, 4

C_HAT = 1.5692622689739437   # pinned increment constant for nu = 2 (martingale module)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

DEFAULTS = {
    "blaschke": {"origin_multiplicity": 2},
    "schedule": {"kind": "paper_example", "beta": 0.5},
    "gauge": {"kind": "power", "s": 0.5},
    "target": {"re": 0.3, "im": 0.1},
    "depth": None,
    "horizon": None,
    "tolerance": 1e-3,
    "seed": None,
    "construct": {
        "N": 2,
        "gate": "enforce",
        "max_parents": 8,
        "artur": None,
        "delta1": None,
        "calibration_trials": 200,
        "frostman_arcs": 1000,
        "box_points": 131072,
        "box_scales": None,
    },
    "optimality": {
        "nu": 2,
        "C_hat": C_HAT,
        "R": [0.5, 1.0, 2.0],
        "cap": 131072,
        "fit_from": 3,
    },
    "invariants": {"trials": 1000},
    "dimension": {
        "source": "construction",
        "input": None,
        "middle_thirds_depth": 12,
        "points": 131072,
        "scales": None,
    },
}

COMMAND_DEFAULTS = {
    "construct": {"depth": 5, "horizon": 2000},
    "optimality": {"depth": 12, "horizon": 1200},
    "invariants": {"depth": 6, "horizon": 0},
    "dimension": {"depth": 3, "horizon": 0},
}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}{key!r}")
        sub = defaults[key]
        if isinstance(sub, dict) and key not in ("blaschke", "schedule", "gauge", "target"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be an object")
            out[key] = _merge(sub, value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path, command: str, overrides: dict) -> dict:
    """Validated config with defaults filled in; unknown keys are rejected."""
    given = {}
    if path is not None:
        try:
            given = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(given, dict):
            raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, given, "")
    for key, value in COMMAND_DEFAULTS[command].items():
        if cfg[key] is None:
            cfg[key] = value
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if cfg["seed"] is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    if not (isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2 ** 64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for key in ("depth", "horizon"):
        if not isinstance(cfg[key], int) or cfg[key] < 0:
            raise ConfigError(f"{key} must be a nonnegative integer")
    if not (isinstance(cfg["tolerance"], (int, float)) and cfg["tolerance"] > 0):
        raise ConfigError("tolerance must be positive")
    if set(cfg["target"]) - {"re", "im"}:
        raise ConfigError("target is given as {re, im}")
    return cfg


def parse_blaschke(cfg: dict) -> BlaschkeProduct:
    try:
        return BlaschkeProduct.from_config(cfg["blaschke"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"blaschke: {exc}") from exc


def parse_gauge(cfg: dict) -> GaugeFunction:
    try:
        return GaugeFunction.from_config(cfg["gauge"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"gauge: {exc}") from exc


def parse_schedule(cfg: dict):
    """'paper_example' (built once the outer sequences are known) or an explicit schedule."""
    spec = dict(cfg["schedule"])
    kind = spec.pop("kind", None)
    if kind == "paper_example":
        if set(spec) - {"beta"}:
            raise ConfigError(f"unknown schedule keys {sorted(set(spec) - {'beta'})}")
        return "paper_example", float(spec.get("beta", 0.5))
    if kind == "explicit":
        if set(spec) - {"values", "beta"}:
            raise ConfigError(f"unknown schedule keys {sorted(set(spec) - {'values', 'beta'})}")
        try:
            return explicit_schedule(spec["values"]), float(spec.get("beta", 0.5))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"schedule: {exc}") from exc
    if kind == "geometric":
        # a_n = ratio^n; summable for |ratio| < 1
        if set(spec) - {"ratio", "length", "beta"}:
            raise ConfigError("geometric schedule takes ratio, length, beta")
        n = int(spec.get("length", 4000))
        vals = [complex(_parse_complex(spec["ratio"])) ** k for k in range(1, n + 1)]
        return explicit_schedule(vals), float(spec.get("beta", 0.5))
    raise ConfigError(f"unknown schedule kind {kind!r}")


# ---------------------------------------------------------------- writers

def fmt(x) -> str:
    """17 significant digits for reals, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating, Fraction)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        x = float(obj)
        return float(format(x, ".17g")) if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    return obj


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_plot(out: Path, stem: str, x, y, xlabel: str, ylabel: str, logx=False, logy=False,
               title: str = ""):
    """Two-column whitespace data file plus its PNG rendering."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with open(out / f"{stem}.dat", "w") as fh:
        fh.write(f"# {xlabel} {ylabel}\n")
        for a, b in zip(x, y):
            fh.write(f"{fmt(float(a))} {fmt(float(b))}\n")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(x, y, "o-", ms=3, lw=1)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(out / f"{stem}.png", dpi=120, metadata={"Software": None})
    plt.close(fig)


def _all_pass(checks: dict) -> bool:
    return all(v.get("status") == "pass" for v in checks.values())


# ---------------------------------------------------------------- construct

TREND_CHECKS = ("MaxBranchDistanceDecreasing", "Stall")


def run_construction(cfg: dict):
    f = parse_blaschke(cfg)
    if f.is_rotation:
        raise ConfigError("blaschke: f must not be a rotation")
    g = parse_gauge(cfg)
    sched, beta = parse_schedule(cfg)
    c = cfg["construct"]
    artur = None
    if c["artur"] is not None:
        try:
            artur = cantor.ArturConstants.from_config(c["artur"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"artur: {exc}") from exc
    if c["gate"] not in ("report", "enforce"):
        raise ConfigError("construct.gate must be 'report' or 'enforce'")
    a, ccfg = cantor.prepare_construction(
        f, g, sched, int(c["N"]), beta, cfg["horizon"], artur=artur, delta1=c["delta1"],
        calibration_trials=int(c["calibration_trials"]), seed=cfg["seed"], gate=c["gate"],
        max_parents=int(c["max_parents"]), tolerance=float(cfg["tolerance"]))
    w = complex(cfg["target"].get("re", 0.0), cfg["target"].get("im", 0.0))
    state = cantor.build_cantor_set(f, a, g, w, cfg["depth"], ccfg)
    return f, g, a, state


def cmd_construct(cfg: dict, out: Path) -> int:
    f, g, a, state = run_construction(cfg)
    c = cfg["construct"]
    ccfg = state.config
    fm = cantor.frostman_measure(state)
    scan = fm.ratio_scan(g, int(c["frostman_arcs"]), seed=cfg["seed"])
    pts = cantor.sample_construction_points(state, int(c["box_points"]), seed=cfg["seed"])
    scales = c["box_scales"] or [2.0 ** -j for j in range(2, 11)]
    box = cantor.box_dimension_estimate(pts, scales)

    checks = dict(state.checks)
    checks.update(fm.checks)
    checks["FrostmanRatioFinite"] = cantor._check(
        scan["finite"] and scan["max_ratio"] > 0, scan["content_bound"] - scan["max_ratio"],
        "nu(K) <= (3 C^-1 / m(J0)) phi(m(K))", max_ratio=scan["max_ratio"],
        bound=scan["content_bound"])
    hyp = {k: dict(v) for k, v in state.hypotheses.checks.items()}
    if ccfg.gate == "report":
        for name in ("FirstInequalityN", "SecondInequalityN"):
            hyp[name]["gated"] = False
    art = ccfg.step.artur
    summary = {
        "command": "construct",
        "config": cfg,
        "inner_gate_note": "FirstInequalityN and SecondInequalityN are treated as the complete "
                           "admissibility test for N; no further largeness is imposed",
        "blaschke": f.to_config(),
        "constants": {
            "artur": art.to_config(), "artur_provenance": art.provenance, "c0": art.c0,
            "delta1": ccfg.step.delta1, "eta": ccfg.step.eta, "K": ccfg.step.K,
            "C0": ccfg.step.C0, "covering_C": ccfg.step.covering, "Q": ccfg.outer.Q,
            "gamma": ccfg.extras["gamma"], "gamma1": ccfg.extras["gamma1"], "r": state.r,
            "R": state.hypotheses.R, "z0": state.z0,
        },
        "hypotheses": hyp,
        "checks": checks,
        "trend_checks": list(TREND_CHECKS),
        "generations": state.generations,
        "final_d": state.final_d,
        "frostman": {k: v for k, v in scan.items() if k != "ratios"},
        "level_mass": [float(m) for m in fm.level_mass],
        "box_dimension": box,
        "family_counts": [fam.count for fam in state.families],
    }
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    write_csv(out / "generations.csv",
              ["generation", "level", "max_d", "min_d", "max_alpha", "branches", "case1", "case2",
               "U"],
              [[gr[k] for k in ("generation", "level", "max_d", "min_d", "max_alpha", "branches",
                                "case1", "case2", "U")] for gr in state.generations])
    rows = []
    for lvl, branches in enumerate(state.branches):
        for i, b in enumerate(branches):
            rows.append([lvl, i, b.parent, b.generation, b.arc.start, b.arc.length, b.mass,
                         b.target, b.case, b.U, b.L, b.d, b.alpha, b.phase.real, b.phase.imag])
    write_csv(out / "arcs.csv",
              ["level", "index", "parent", "generation", "start", "length", "mass", "target",
               "case", "U", "L", "d", "alpha", "phase_re", "phase_im"], rows)
    rows = []
    for lvl, fam in enumerate(state.families, start=1):
        for ci, cl in enumerate(fam.classes):
            rows.append([lvl, ci, cl.parent, cl.kind, cl.count, cl.origin, cl.unit, cl.period,
                         cl.offset, cl.width, cl.arc_length, cl.total_length,
                         state.density(lvl - 1, cl.parent)])
    write_csv(out / "classes.csv",
              ["level", "class", "parent", "kind", "count", "origin", "unit", "period", "offset",
               "width", "arc_length", "total_length", "density"], rows)
    write_csv(out / "checks.csv", ["name", "status", "margin", "anchor"],
              [[k, v["status"], v["margin"], v["anchor"]] for k, v in sorted(checks.items())])
    write_csv(out / "points.csv", ["turn"], [[p] for p in pts])
    gens = [gr["generation"] for gr in state.generations]
    write_plot(out, "max_distance", gens, [gr["max_d"] for gr in state.generations],
               "generation", "max d_k", title="largest branch distance to target")
    write_plot(out, "box_counts", np.log(1 / np.asarray(box["scales"])), np.log(box["counts"]),
               "log(1/s)", "log N(s)", title=f"slope {box['slope']:.3f}")
    write_plot(out, "frostman_ratio", np.arange(1, len(scan["ratios"]) + 1),
               np.sort(scan["ratios"])[::-1], "rank", "nu(K)/phi(m(K))", logy=True,
               title="Frostman ratio over random arcs")
    hard = {k: v for k, v in checks.items() if k not in TREND_CHECKS}
    return EXIT_OK if _all_pass(hard) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- optimality

def run_optimality(cfg: dict) -> dict:
    g = parse_gauge(cfg)
    o = cfg["optimality"]
    nu = int(o["nu"])
    sur = martingale.gauge_surrogates(g)
    failed = [k for k, v in sur.items() if not v]
    if failed:
        raise cantor.GateFailure(f"gauge restrictiveness: {', '.join(failed)}", 0.0)
    try:
        run = martingale.generate_optimality_coefficients(g, nu, cfg["horizon"],
                                                          float(o["C_hat"]))
    except ValueError as exc:
        raise ConfigError(f"horizon {cfg['horizon']}: {exc}") from exc
    s = run.state
    k_max = cfg["depth"]
    ks = list(range(1, k_max + 1))
    nbars = [run.n_bar(k) for k in ks]
    if nbars[-1] is None or nbars[-1] > s.horizon:
        raise cantor.ConstructionError(f"horizon {cfg['horizon']} does not reach Nbar({k_max})")
    sweep = {}
    for R in o["R"]:
        rows = martingale.survivor_measure(s, float(R), nbars[-1], cap=int(o["cap"]),
                                           seed=cfg["seed"])
        sweep[float(R)] = rows
    return {"run": run, "ks": ks, "nbars": nbars, "sweep": sweep, "gauge": g, "surrogates": sur}


def cmd_optimality(cfg: dict, out: Path) -> int:
    res = run_optimality(cfg)
    run, ks, nbars, sweep, g = res["run"], res["ks"], res["nbars"], res["sweep"], res["gauge"]
    s = run.state
    nu = run.nu
    o = cfg["optimality"]
    checks = {}
    measures = {R: [rows[n].measure(nu) for n in nbars] for R, rows in sweep.items()}
    R0 = 1.0 if 1.0 in measures else sorted(measures)[0]
    ms = measures[R0]
    mono = all(y <= x for x, y in zip(ms, ms[1:]))
    checks["SurvivorNonincreasing"] = cantor._check(
        mono, min((x - y for x, y in zip(ms, ms[1:])), default=0.0),
        "m(A(R, Nbar(k))) nonincreasing in k")
    lo = int(o["fit_from"])
    fit = martingale.decay_regression(ks[lo - 1:], ms[lo - 1:])
    checks["SurvivorDecay"] = cantor._check(
        fit["slope"] < -0.05 and fit["r2"] >= 0.8, -0.05 - fit["slope"],
        "m(A(R, Nbar(k))) <= C' c^k", slope=fit["slope"], r2=fit["r2"])
    kol_rows, kol_ok, kol_margin = [], True, math.inf
    for R, rows in sorted(sweep.items()):
        for k, n in zip(ks, nbars):
            kc = martingale.kolmogorov_bound_check(s, R, n, rows[n].measure(nu))
            kol_rows.append([R, k, n, kc["measure"], kc["K"], kc["K_source"], kc["sigma2"],
                             kc["bound"], kc["holds"]])
            kol_ok &= kc["holds"]
            kol_margin = min(kol_margin, kc["bound"] - kc["measure"])
    checks["KolmogorovReverseInequality"] = cantor._check(
        kol_ok, kol_margin, "m(A(R, N)) <= (R + K)^2 / sigma(N)^2")
    Rs = sorted(measures)
    nested = all(measures[R1][i] <= measures[R2][i] + 1e-300
                 for R1, R2 in zip(Rs, Rs[1:]) for i in range(len(ks)))
    checks["SurvivorMonotoneInR"] = cantor._check(nested, 0.0 if nested else -1.0,
                                                  "A(R) subset of A(R') for R < R'")
    nv = martingale.n_to_variance_check(run)
    checks["NToVariance"] = cantor._check(nv["failures"] == 0, -nv["failures"],
                                          "k >= c0^2 nu^-2l / (2(m0+l+1)) Nbar(k)",
                                          rows=len(nv["rows"]))
    pe = martingale.psi_estimate_check(run, g)
    checks["PsiEstimate"] = cantor._check(pe["failures"] == 0, -pe["failures"],
                                          "psi(nu^-Nbar(k)) <= nu^(2(m0+l+1) nu^-l k / c0^2)",
                                          rows=len(pe["rows"]))
    # Hausdorff estimate C' c^k psi(nu^-Nbar(k)) with the fitted C', c
    hrows = []
    log_nu = math.log(nu)
    for k, n in zip(ks, nbars):
        log_psi = float(g.log_psi_neglog(n * log_nu))
        log_bound = math.log(fit["C"]) + k * math.log(fit["c"]) + log_psi
        hrows.append([k, n, log_psi, log_bound])
    tail = [r[3] for r in hrows[lo - 1:]]
    checks["HausdorffEstimateDecreasing"] = cantor._check(
        all(y < x for x, y in zip(tail, tail[1:])),
        min((x - y for x, y in zip(tail, tail[1:])), default=0.0),
        "H_phi(A(R)) <= C' c^k psi(nu^-Nbar(k))")

    summary = {
        "command": "optimality", "config": cfg, "nu": nu, "m0": run.m0, "c": run.c,
        "c0": run.c0, "C_lemma": run.C_lemma, "n_bar": nbars, "surrogates": res["surrogates"],
        "fit": fit, "checks": checks, "R_reference": R0,
        "measures": {str(R): v for R, v in measures.items()},
        "estimators": {str(R): rows[nbars[-1]].estimator for R, rows in sweep.items()},
        "blocks": run.blocks,
    }
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    write_csv(out / "coefficients.csv", ["n", "a_n"],
              [[int(n), run.coefficients[n - 1]] for n in run.tau])
    write_csv(out / "survivors.csv", ["R", "k", "N", "measure", "estimator", "stored_arcs"],
              [[R, k, n, rows[n].measure(nu), rows[n].estimator, rows[n].surviving_count]
               for R, rows in sorted(sweep.items()) for k, n in zip(ks, nbars)])
    write_csv(out / "kolmogorov.csv",
              ["R", "k", "N", "measure", "K", "K_source", "sigma2", "bound", "holds"], kol_rows)
    write_csv(out / "hausdorff_estimate.csv", ["k", "N", "log_psi", "log_bound"], hrows)
    write_csv(out / "checks.csv", ["name", "status", "margin", "anchor"],
              [[k, v["status"], v["margin"], v["anchor"]] for k, v in sorted(checks.items())])
    write_plot(out, "survivor_decay", ks, ms, "k", f"m(A({R0:g}, Nbar(k)))", logy=True,
               title=f"slope {fit['slope']:.3f}, R^2 {fit['r2']:.4f}")
    write_plot(out, "hausdorff_estimate", ks, [r[3] for r in hrows], "k",
               "log(C' c^k psi(nu^-Nbar(k)))")
    return EXIT_OK if _all_pass(checks) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- invariants

def run_invariants(f: BlaschkeProduct, trials: int, seed: int, n_max: int = 6) -> dict:
    return {
        "expansion": blaschke.expansion_suite(f, trials, seed),
        "oscillation": blaschke.oscillation_suite(f, trials, seed, n_max=n_max),
        "corollary_oscillation": blaschke.corollary_oscillation_suite(f, trials, seed,
                                                                      n_max=n_max),
        "quasi_constant_derivative": blaschke.quasi_constant_derivative_suite(
            f, trials, seed, n_max=n_max),
        "schwarz": blaschke.schwarz_suite(f, trials, seed),
        "interior_boundary": blaschke.interior_boundary_suite(f),
    }


def cmd_invariants(cfg: dict, out: Path) -> int:
    f = parse_blaschke(cfg)
    if f.is_rotation:
        raise cantor.GateFailure("not a rotation", 0.0)
    suites = run_invariants(f, int(cfg["invariants"]["trials"]), cfg["seed"],
                            n_max=max(1, cfg["depth"]))
    consts = blaschke.iterate_constants(f)
    checks = {}
    for name, res in suites.items():
        margin = res.get("min_margin", -res["failures"])
        checks[name] = cantor._check(res["failures"] == 0, margin, res["name"])
    summary = {"command": "invariants", "config": cfg, "blaschke": f.to_config(),
               "K_min": consts.K_min, "K_max": consts.K_max, "C2_max": consts.C2_max,
               "suites": suites, "checks": checks}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    write_csv(out / "checks.csv", ["name", "status", "failures", "margin"],
              [[k, checks[k]["status"], suites[k]["failures"], checks[k]["margin"]]
               for k in sorted(checks)])
    return EXIT_OK if _all_pass(checks) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------- dimension

def cmd_dimension(cfg: dict, out: Path) -> int:
    d = cfg["dimension"]
    src = d["source"]
    default_scales = [2.0 ** -j for j in range(2, 11)]
    if src == "full_circle":
        data = [cantor.Arc.full()]
        default_scales = [10.0 ** -j for j in (1, 2, 3, 4)]
    elif src == "middle_thirds":
        depth = int(d["middle_thirds_depth"])
        data = cantor.middle_thirds_arcs(depth)
        default_scales = [3.0 ** -j for j in range(1, min(depth, 8) + 1)]
    elif src == "construction":
        if d["input"] is None:
            raise ConfigError("dimension.input must name a construct output directory")
        src_dir = Path(d["input"])
        try:
            summ = json.loads((src_dir / "summary.json").read_text())
            with open(src_dir / "points.csv") as fh:
                data = np.array([float(r["turn"]) for r in csv.DictReader(fh)])
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read construction dump {src_dir}: {exc}") from exc
        gens = len(summ.get("generations", []))
        if gens < cfg["depth"]:
            raise cantor.ConstructionError(
                f"construction too shallow: {gens} generations < {cfg['depth']}")
    elif src == "points":
        if d["input"] is None:
            raise ConfigError("dimension.input must name a CSV with a 'turn' column")
        with open(d["input"]) as fh:
            data = np.array([float(r["turn"]) for r in csv.DictReader(fh)])
    else:
        raise ConfigError(f"unknown dimension source {src!r}")
    scales = d["scales"] or default_scales
    try:
        box = cantor.box_dimension_estimate(data, scales)
    except ValueError as exc:
        raise ConfigError(f"dimension: {exc}") from exc
    summary = {"command": "dimension", "config": cfg, "source": src, "box_dimension": box}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    write_csv(out / "box_counts.csv", ["scale", "count", "residual"],
              list(zip(box["scales"], box["counts"], box["residuals"])))
    write_plot(out, "box_counts", np.log(1 / np.asarray(box["scales"])), np.log(box["counts"]),
               "log(1/s)", "log N(s)", title=f"{src}: slope {box['slope']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

COMMANDS = {"construct": cmd_construct, "optimality": cmd_optimality,
            "invariants": cmd_invariants, "dimension": cmd_dimension}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lacunary-cantor", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="RNG seed (u64)")
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--depth", type=int)
        sp.add_argument("--tolerance", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "horizon": args.horizon, "depth": args.depth,
                 "tolerance": args.tolerance}
    try:
        cfg = load_config(args.config, args.command, overrides)
        code = COMMANDS[args.command](cfg, Path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except cantor.GateFailure as exc:
        if exc.condition == "NonSummable":
            print("out of scope: sum |a_n| < infinity (NonSummable)", file=sys.stderr)
        else:
            print(f"hypothesis gate failed: {exc.condition} (margin {exc.margin:.6g})",
                  file=sys.stderr)
        return EXIT_GATE
    except (cantor.ConstructionError, cantor.CalibrationError) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    status = "all checks passed" if code == EXIT_OK else "some checks failed"
    print(f"{args.command}: {status}; bundle in {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
