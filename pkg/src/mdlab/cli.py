"""Batch front door: per-model experiments and the diagnostics suite.

Exit codes: 0 success, 2 validation error, 3 model-integrity error (an
exact identity failed), 4 resource error.  Outputs are deterministic
functions of (config, seed, workers); the worker count only partitions
the seeded Monte Carlo streams (merged in worker order), it does not
auto-detect hardware.  The environment variable MDLAB_WORKERS overrides
the configured worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dist import ExactDistribution, total_variation
from .errors import DomainError, MDLabError, ModelIntegrityError, ResourceError
from .stein import DiagnosticsReport, RatioTable, pair_antisymmetry_check
from .models import antivoter, binarycode, combinatorial, curieweiss, independent

MODELS = ("antivoter", "binarycode", "curieweiss", "combinatorial", "independent")


@dataclass
class ExperimentConfig:
    model: str
    model_params: dict
    grid_x_max: float | str
    grid_points: int
    mc: dict | None
    output_format: str
    output_path: str | None
    workers: int

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise DomainError("config must be a JSON object")
        model = obj.get("model")
        if model not in MODELS:
            raise DomainError(f"config.model must be one of {MODELS}, got {model!r}")
        params = obj.get("model_params", {})
        if not isinstance(params, dict):
            raise DomainError("config.model_params must be an object")
        grid = obj.get("grid", {})
        x_max = grid.get("x_max", "auto")
        if x_max != "auto":
            x_max = float(x_max)
            if not (x_max > 0 and np.isfinite(x_max)):
                raise DomainError(f"config.grid.x_max must be positive or 'auto', got {x_max}")
        points = int(grid.get("points", 25))
        if points < 2:
            raise DomainError(f"config.grid.points must be >= 2, got {points}")
        mc = obj.get("mc")
        if mc is not None:
            if not isinstance(mc, dict) or "seed" not in mc or "samples" not in mc:
                raise DomainError("config.mc must carry at least seed and samples")
            if int(mc["samples"]) < 1:
                raise DomainError(f"config.mc.samples must be >= 1, got {mc['samples']}")
        output = obj.get("output", {})
        fmt = output.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise DomainError(f"config.output.format must be csv or json, got {fmt!r}")
        workers = int(obj.get("workers", 1))
        if workers < 1:
            raise DomainError(f"config.workers must be >= 1, got {workers}")
        return cls(
            model=model,
            model_params=params,
            grid_x_max=x_max,
            grid_points=points,
            mc=mc,
            output_format=fmt,
            output_path=output.get("path"),
            workers=workers,
        )


@dataclass
class RunResult:
    table: RatioTable
    report: DiagnosticsReport
    law: ExactDistribution


def _grid(cap: float, cfg: ExperimentConfig) -> np.ndarray:
    x_max = cap if cfg.grid_x_max == "auto" else min(float(cfg.grid_x_max), 1e9)
    return np.linspace(0.0, x_max, cfg.grid_points)


def _passes(residuals: dict, fitted: float | None) -> bool:
    ok = all(
        v <= 1e-8 for k, v in residuals.items() if k.endswith("residual") and v is not None
    )
    if fitted is not None and not math.isnan(fitted):
        ok = ok and np.isfinite(fitted)
    return bool(ok)


def _mc_tv(cfg: ExperimentConfig, exact: ExactDistribution, sampler) -> float | None:
    if cfg.mc is None:
        return None
    seed = int(cfg.mc["seed"])
    samples = int(cfg.mc["samples"])
    burnin = int(cfg.mc.get("burnin", 0))
    thin = int(cfg.mc.get("thin", 1))
    empirical = sampler(seed, samples, burnin, thin, cfg.workers)
    return total_variation(exact, empirical)


def _run_antivoter(cfg: ExperimentConfig) -> RunResult:
    n = int(cfg.model_params.get("n", 0))
    chain = antivoter.transition_rates(n)
    law = antivoter.stationary_law(chain)
    ident = antivoter.exact_pair_identities(chain)
    table, fitted = antivoter.band_report(n, grid=_grid(n ** (1.0 / 6.0), cfg))
    residuals = {
        "drift_residual": ident.residual_drift,
        "e_d_residual": ident.residual_d,
        "pair_antisymmetry_residual": pair_antisymmetry_check(antivoter.pair_kernel(chain)),
        "variance_residual": abs(law.moments()[1] - 1.0),
    }

    def sampler(seed, samples, burnin, thin, workers):
        ts = antivoter.sample(n, seed, samples, burnin=burnin or None, thin=thin, workers=workers)
        return antivoter.empirical_w_law(chain, ts)

    tv = _mc_tv(cfg, law, sampler)
    if tv is not None:
        residuals["mc_tv"] = tv
    report = DiagnosticsReport(
        model="antivoter", n=n, budget=ident.budget, fitted_constant=fitted,
        identity_residuals=residuals, passed=_passes(residuals, fitted),
    )
    return RunResult(table, report, law)


def _run_binarycode(cfg: ExperimentConfig) -> RunResult:
    n = int(cfg.model_params.get("n", 0))
    raw_system = cfg.model_params.get("system", "binary-expansion")
    try:
        system = binarycode.System(raw_system)
    except ValueError as exc:
        raise DomainError(
            f"model_params.system must be one of "
            f"{[s.value for s in binarycode.System]}, got {raw_system!r}"
        ) from exc
    perturb = float(cfg.model_params.get("_perturb", 0.0))
    ident = binarycode.pair_identities_report(n, _perturb=perturb)
    tables = binarycode.band_report(n, grid=_grid(n.bit_length() ** (1.0 / 6.0), cfg))
    table, fitted = tables[system if system in tables else binarycode.System.BINARY_EXPANSION]
    law = binarycode.standardized_law(n, system)
    residuals = {
        "drift_residual": ident.residual_drift,
        "e_d_residual": ident.residual_d,
        "q_bound_constant": ident.q_bound_constant,
    }
    if n <= (1 << 12):
        residuals["pair_antisymmetry_residual"] = pair_antisymmetry_check(
            binarycode.pair_kernel(n)
        )

    def sampler(seed, samples, burnin, thin, workers):
        s = binarycode.sample(n, seed, samples, workers=workers)
        counts = np.bincount(s, minlength=n.bit_length() + 1)
        keep = counts > 0
        sup = binarycode.standardized_support(n.bit_length(), np.arange(counts.size))
        return ExactDistribution.from_probs(sup[keep], counts[keep] / counts.sum())

    tv = _mc_tv(cfg, binarycode.standardized_law(n, binarycode.System.BINARY_EXPANSION), sampler)
    if tv is not None:
        residuals["mc_tv"] = tv
    report = DiagnosticsReport(
        model="binarycode", n=n, budget=ident.budget, fitted_constant=fitted,
        identity_residuals=residuals, passed=_passes(residuals, fitted),
    )
    return RunResult(table, report, law)


def _run_curieweiss(cfg: ExperimentConfig) -> RunResult:
    p = cfg.model_params
    n = int(p.get("n", 0))
    beta = float(p.get("beta", 0.0))
    h = float(p.get("h", 0.0))
    sign = p.get("sign")
    params = curieweiss.solve_magnetization(n, beta, h)
    if params.case_id is curieweiss.Case.CASE3:
        raise DomainError(
            "curieweiss beta = 1, h = 0 is the non-Gaussian critical case: "
            "band operations are undefined (case3)"
        )
    if params.case_id is curieweiss.Case.CASE2 and sign is None:
        raise DomainError('curieweiss case2 (beta > 1, h = 0) requires model_params.sign "+" or "-"')
    bud, window = curieweiss.budget(params, sign)
    table, fitted = curieweiss.band_report(params, sign, grid=_grid(n ** (1.0 / 6.0), cfg))
    law, _ = curieweiss.conditional_standardized_law(params, sign)
    s_law = curieweiss.exact_spin_sum_law(params)
    s = s_law.support
    pu, pd = curieweiss._heat_bath_rates(params, s)
    pi = np.exp(s_law.logp)
    flow = pi * (1.0 - pu - pd)
    flow[1:] += (pi * pu)[:-1]
    flow[:-1] += (pi * pd)[1:]
    residuals = {
        "stationarity_residual": float(np.abs(flow - pi).max()),
        "truncated_mass": window.truncated_mass,
        "zero_atom_mass": window.zero_atom_mass,
        "fixed_point_residual": max(
            abs(m - math.tanh(beta * (m + h))) for m in params.roots
        ),
    }

    def sampler(seed, samples, burnin, thin, workers):
        ss = curieweiss.glauber_sampler(
            params, seed, burnin=burnin, count=samples, thin=thin, workers=workers
        )
        return curieweiss.empirical_s_law(params, ss)

    tv = _mc_tv(cfg, s_law, sampler)
    if tv is not None:
        residuals["mc_tv"] = tv
    report = DiagnosticsReport(
        model="curieweiss", n=n, budget=bud, fitted_constant=fitted,
        identity_residuals=residuals, passed=_passes(residuals, fitted),
    )
    return RunResult(table, report, law)


def _combinatorial_array(cfg: ExperimentConfig) -> np.ndarray:
    p = cfg.model_params
    if "csv" in p:
        path = Path(p["csv"])
        if not path.exists():
            raise DomainError(f"combinatorial array CSV not found: {path}")
        return np.loadtxt(path, delimiter=",", ndmin=2)
    if "a" in p:
        return np.asarray(p["a"], dtype=float)
    raise DomainError('combinatorial requires model_params.csv (path) or model_params.a (matrix)')


def _run_combinatorial(cfg: ExperimentConfig) -> RunResult:
    arr = combinatorial.validate_and_sigma(_combinatorial_array(cfg))
    law = combinatorial.exact_law(arr)
    cap = arr.delta ** (-1.0 / 3.0)
    table, fitted = combinatorial.band_report(arr, grid=_grid(cap, cfg))
    vals = combinatorial.permutation_values(arr)
    enum_var = float(vals.var())
    residuals = {
        "sigma_formula_residual": abs(enum_var - arr.sigma**2) / arr.sigma**2,
        "mean_residual": abs(law.moments()[0]),
    }

    def sampler(seed, samples, burnin, thin, workers):
        w = combinatorial.sample(arr, seed, samples, workers=workers)
        sup, counts = np.unique(w, return_counts=True)
        return ExactDistribution.from_probs(sup, counts / counts.sum())

    tv = _mc_tv(cfg, law, sampler)
    if tv is not None:
        residuals["mc_tv"] = tv
    report = DiagnosticsReport(
        model="combinatorial", n=arr.n, budget=combinatorial.budget(arr),
        fitted_constant=fitted, identity_residuals=residuals,
        passed=_passes(residuals, fitted),
    )
    return RunResult(table, report, law)


def _independent_components(cfg: ExperimentConfig) -> independent.ComponentList:
    p = cfg.model_params
    if p.get("family") == "rademacher":
        return independent.rademacher_components(int(p.get("n", 0)))
    if "components" in p:
        parts = []
        for item in p["components"]:
            if "logp" in item:
                parts.append(ExactDistribution(np.asarray(item["support"], float),
                                               np.asarray(item["logp"], float)))
            elif "probs" in item:
                parts.append(ExactDistribution.from_probs(item["support"], item["probs"]))
            else:
                raise DomainError("each component needs support plus logp or probs")
        return independent.ComponentList.of(parts)
    raise DomainError(
        'independent requires model_params.family = "rademacher" with n, '
        "or model_params.components"
    )


def _independent_cap(components: independent.ComponentList) -> float:
    lo, hi = 0.0, 1.0
    while 4.0 * hi**3 * independent.gamma(components, hi) < independent.LOW_INFORMATION_EXPONENT:
        hi *= 2.0
        if hi > 64.0:
            return 64.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if 4.0 * mid**3 * independent.gamma(components, mid) < independent.LOW_INFORMATION_EXPONENT:
            lo = mid
        else:
            hi = mid
    return lo


def _run_independent(cfg: ExperimentConfig) -> RunResult:
    components = _independent_components(cfg)
    table, fitted = independent.band_report(components, _grid(_independent_cap(components), cfg))
    law = independent.sum_law(components)
    residuals = {
        "variance_sum_residual": abs(components.sum_variance - 1.0),
    }

    def sampler(seed, samples, burnin, thin, workers):
        w = independent.sample_sum(components, seed, samples, workers=workers)
        sup, counts = np.unique(np.round(w, 12), return_counts=True)
        return ExactDistribution.from_probs(sup, counts / counts.sum())

    tv = _mc_tv(cfg, law, sampler)
    if tv is not None:
        residuals["mc_tv"] = tv
    report = DiagnosticsReport(
        model="independent", n=len(components.components), budget=None,
        fitted_constant=fitted, identity_residuals=residuals,
        passed=_passes(residuals, fitted if fitted is not None else None),
    )
    return RunResult(table, report, law)


_RUNNERS = {
    "antivoter": _run_antivoter,
    "binarycode": _run_binarycode,
    "curieweiss": _run_curieweiss,
    "combinatorial": _run_combinatorial,
    "independent": _run_independent,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return _RUNNERS[cfg.model](cfg)


def _write_outputs(result: RunResult, cfg: ExperimentConfig) -> list[Path]:
    if cfg.output_path is None:
        sys.stdout.write(result.table.csv_text())
        sys.stdout.write(result.report.to_json() + "\n")
        return []
    stem = Path(cfg.output_path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if cfg.output_format == "csv":
        table_path = stem.with_suffix(".csv")
        result.table.to_csv(table_path)
    else:
        table_path = stem.with_suffix(".table.json")
        rows = {
            name: getattr(result.table, name).tolist()
            for name in RatioTable.COLUMNS
        }
        table_path.write_text(json.dumps(rows, indent=1))
    written.append(table_path)
    report_path = stem.with_suffix(".diagnostics.json")
    report_path.write_text(result.report.to_json() + "\n")
    written.append(report_path)
    return written


SMOKE_MATRIX = [
    ("antivoter", "antivoter", {"n": 200}),
    ("binarycode", "binarycode", {"n": (1 << 10) - 2}),
    ("curieweiss-case1", "curieweiss", {"n": 2000, "beta": 0.5, "h": 0.0}),
    ("curieweiss-case2", "curieweiss", {"n": 2000, "beta": 1.5, "h": 0.0, "sign": "+"}),
    ("combinatorial", "combinatorial", {"a": None}),  # seeded double-centered array
    ("independent", "independent", {"family": "rademacher", "n": 400}),
]

FULL_SCHEDULES = {
    "antivoter": [{"n": n} for n in (100, 1000, 10000)],
    "binarycode": [{"n": (1 << k) - 2} for k in (10, 14, 20)],
    "curieweiss-case1": [
        {"n": n, "beta": 0.5, "h": 0.0} for n in (1000, 10000, 100000)
    ],
    "curieweiss-case2": [
        {"n": n, "beta": 1.5, "h": 0.0, "sign": "+"} for n in (1000, 10000, 100000)
    ],
    "independent": [{"family": "rademacher", "n": n} for n in (100, 400, 1600)],
}


def _suite_array(seed: int, n: int = 6) -> list[list[float]]:
    rng = np.random.Generator(np.random.PCG64(seed))
    return combinatorial.double_center(rng.standard_normal((n, n))).tolist()


def run_suite(size: str, out_dir: str | None, seed: int, workers: int) -> dict:
    if size not in ("smoke", "full"):
        raise DomainError(f"suite size must be smoke or full, got {size!r}")
    entries = []
    jobs: list[tuple[str, str, dict]] = []
    if size == "smoke":
        for family, model, params in SMOKE_MATRIX:
            params = dict(params)
            if model == "combinatorial":
                params["a"] = _suite_array(seed)
            jobs.append((family, model, params))
    else:
        for family, schedule in FULL_SCHEDULES.items():
            model = family.split("-")[0]
            for params in schedule:
                jobs.append((family, model, dict(params)))
        jobs.append(("combinatorial", "combinatorial", {"a": _suite_array(seed)}))
    for family, model, params in jobs:
        cfg = ExperimentConfig(
            model=model, model_params=params, grid_x_max="auto",
            grid_points=17, mc=None, output_format="csv",
            output_path=None, workers=workers,
        )
        result = run_experiment(cfg)
        label_n = result.report.n
        if out_dir is not None:
            cfg.output_path = str(Path(out_dir) / f"{family}_n{label_n}")
            _write_outputs(result, cfg)
        entries.append(
            {
                "family": family,
                "model": model,
                "n": label_n,
                "fitted_constant": result.report.fitted_constant,
                "pass": result.report.passed,
            }
        )
    families: dict[str, list[float]] = {}
    for e in entries:
        c = e["fitted_constant"]
        if c is not None and not math.isnan(c):
            families.setdefault(e["family"], []).append(c)
    stability = {
        fam: all(b <= 2.0 * a + 1e-9 for a, b in zip(cs, cs[1:]))
        for fam, cs in families.items()
    }
    summary = {
        "size": size,
        "seed": seed,
        "workers": workers,
        "entries": entries,
        "fitted_constant_bounded": stability,
        "all_pass": all(e["pass"] for e in entries),
    }
    if out_dir is not None:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return summary


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise DomainError(f"config file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"config file is not valid JSON: {exc}") from exc


def _apply_overrides(obj: dict, args) -> dict:
    if args.seed is not None:
        obj.setdefault("mc", {"samples": 1})
        if obj["mc"] is not None:
            obj["mc"]["seed"] = args.seed
    if args.out is not None:
        obj.setdefault("output", {})["path"] = args.out
    if args.format is not None:
        obj.setdefault("output", {})["format"] = args.format
    workers_env = os.environ.get("MDLAB_WORKERS")
    if workers_env is not None:
        try:
            obj["workers"] = int(workers_env)
        except ValueError as exc:
            raise DomainError(f"MDLAB_WORKERS must be an integer, got {workers_env!r}") from exc
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mdlab",
        description="Exact and Monte Carlo tail-ratio experiments for five model families.",
    )
    parser.add_argument("--version", action="version", version=f"mdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--format", choices=("csv", "json"), default=None)

    p_suite = sub.add_parser("suite", help="run the model diagnostics matrix")
    p_suite.add_argument("--size", choices=("smoke", "full"), default="smoke")
    p_suite.add_argument("--out", default=None)
    p_suite.add_argument("--seed", type=int, default=20240801)

    p_dump = sub.add_parser("dump-dist", help="dump a model's exact law as JSON")
    p_dump.add_argument("--config", required=True)
    p_dump.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = ExperimentConfig.from_dict(_apply_overrides(_load_config(args.config), args))
            result = run_experiment(cfg)
            written = _write_outputs(result, cfg)
            for path in written:
                print(f"wrote {path}")
            return 0
        if args.command == "suite":
            workers = int(os.environ.get("MDLAB_WORKERS", "1"))
            summary = run_suite(args.size, args.out, args.seed, workers)
            print(json.dumps(summary, indent=1, sort_keys=True))
            return 0 if summary["all_pass"] else 1
        if args.command == "dump-dist":
            obj = _load_config(args.config)
            obj.setdefault("grid", {"points": 2})
            cfg = ExperimentConfig.from_dict(obj)
            result = run_experiment(cfg)
            text = result.law.to_json()
            if args.out is None:
                print(text)
            else:
                Path(args.out).write_text(text)
                print(f"wrote {args.out}")
            return 0
    except DomainError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except ModelIntegrityError as exc:
        print(f"model integrity error: {exc}", file=sys.stderr)
        return 3
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 4
    except MDLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"validation error: invalid configuration value ({exc})", file=sys.stderr)
        return 2
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
