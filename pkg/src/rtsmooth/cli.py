"""
Command-line entry points: ``rtsmooth fit``, ``rtsmooth simulate`` and
``rtsmooth benchmark``.

Exit status is 0 on success, 2 for configuration errors, 3 when a fit breaks
the convergence thresholds (outputs are still written) and 4 for runtime
failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, RtSmoothError
from .evaluation import (
    RtPosteriorSummary,
    batch_benchmark,
    realtime_protocol,
    realtime_scores,
    simulate_replicate,
    write_metrics_csv,
    write_realtime_csv,
    write_summary_csv,
    write_timing_csv,
)
from .fit import fit
from .seirs import write_truth_csv
from .timeseries import read_case_csv, write_case_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIAGNOSTICS, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("rtsmooth")


def versions() -> dict:
    import numba
    import scipy
    import yaml

    return {"rtsmooth": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pyyaml": yaml.__version__}


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _output_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.output_dir or cfg.output.get("dir") or "rtsmooth-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _level_name(level) -> str:
    return "q" + f"{100 * level:g}".replace(".", "_")


def write_rt_summary(summary: RtPosteriorSummary, dates, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["week", "date", *(_level_name(v) for v in summary.levels)])
        for t, row in enumerate(summary.quantiles):
            w.writerow([t + 1, dates[t].isoformat(), *(repr(float(v)) for v in row)])


def write_params_summary(params: dict, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "median", "q2_5", "q97_5"])
        for name, s in params.items():
            w.writerow([name, repr(s["median"]), repr(s["q025"]), repr(s["q975"])])


def write_draws(draws, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "draw", *draws.names])
        for c in range(draws.chains):
            for i in range(draws.iters):
                w.writerow([c, i, *(repr(float(v)) for v in draws.draws[c, i])])


# ---------------------------------------------------------------- commands


def cmd_fit(args, cfg: RunConfig) -> int:
    path = cfg.data.get("cases")
    if not path:
        raise ConfigError("missing required config key 'data.cases'")
    if cfg.source and not Path(path).is_absolute():
        # relative paths resolve against the config file
        candidate = Path(cfg.source).parent / path
        path = candidate if candidate.exists() else Path(path)
    if not Path(path).exists():
        raise ConfigError(f"data.cases: {path} does not exist")
    cases = read_case_csv(path)
    cfg.data = {**cfg.data, "cases": str(Path(path).resolve())}
    sampler = cfg.sampler_config(args.seed, args.jobs)
    kinds = cfg.priors(args.prior)
    specs = {k: cfg.model_spec(k) for k in kinds}  # validate everything before sampling
    out = _output_dir(args, cfg)
    save_draws = args.save_draws or bool(cfg.output.get("save_draws", False))
    status = EXIT_OK
    for kind, spec in specs.items():
        target = out / kind if len(specs) > 1 else out
        target.mkdir(parents=True, exist_ok=True)
        log.info("fitting %s to %d weeks", kind, cases.T)
        res = fit(spec, cases, sampler)
        write_rt_summary(res.rt_summary(), cases.dates, target / "rt_summary.csv")
        write_params_summary(res.param_summary(), target / "params_summary.csv")
        rep = res.report
        diag = {"prior": kind, **rep.to_dict(), "cpu_minutes": res.cpu_minutes,
                "step_sizes": res.draws.step_sizes.tolist(), "passed": rep.passed}
        _write_json(diag, target / "diagnostics.json")
        if save_draws:
            write_draws(res.draws, target / "draws.csv")
        if not rep.passed:
            log.warning("%s: convergence thresholds not met (max R-hat %.3f, min ESS %.0f, "
                        "divergences %d)", kind, rep.max_rhat, rep.min_ess, int(np.sum(rep.divergences)))
            status = EXIT_DIAGNOSTICS
    resolved = cfg.to_config()
    resolved["seed"] = sampler.seed
    resolved["sampler"] = {**cfg.sampler, **{k: v for k, v in sampler.to_config().items() if k != "jobs"}}
    _write_json({"command": "fit", "config": resolved, "versions": versions()}, out / "manifest.json")
    return status


def cmd_simulate(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        seed = 0
    params = cfg.seirs_params()
    obs = cfg.observation()
    out = _output_dir(args, cfg)
    truth = simulate_replicate(params, 0, seed, obs["rho"], obs["kappa"], obs["dt"])
    write_truth_csv(truth, out / "truth.csv")
    write_case_csv(truth.cases, out / "cases.csv")
    resolved = cfg.to_config()
    resolved["seed"] = int(seed)
    resolved["scenario"] = {**params.to_config(), **obs}
    _write_json({"command": "simulate", "config": resolved, "parameters": params.to_config(),
                 "observation": obs, "versions": versions()}, out / "manifest.json")
    return EXIT_OK


def cmd_benchmark(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise ConfigError("benchmark runs need a seed ('seed' in the config or --seed)")
    seed = int(seed)
    bcfg = dict(cfg.benchmark)
    params = cfg.seirs_params()
    obs = cfg.observation()
    sampler = cfg.sampler_config(seed, 1)
    kinds = cfg.priors(args.prior)
    specs = {k: cfg.model_spec(k) for k in kinds}
    jobs = args.jobs or int(bcfg.get("jobs", 1))
    realtime = args.realtime or bool(bcfg.get("realtime", False))
    retrospective = bool(bcfg.get("retrospective", not realtime))
    start_weeks = args.start_weeks or int(bcfg.get("start_weeks", 10))
    out = _output_dir(args, cfg)

    manifest = {"command": "benchmark", "versions": versions(), "failures": [], "timing": {}}
    status = EXIT_OK
    t0 = time.time()
    if retrospective:
        n = int(bcfg.get("replicates", 10))
        res = batch_benchmark(n, params, specs, seed, sampler, obs["rho"], obs["kappa"], obs["dt"], jobs)
        write_metrics_csv(res.rows, out / "metrics.csv")
        write_summary_csv(res.summary, out / "summary.csv")
        write_timing_csv(res.summary, out / "timing.csv")
        manifest["seeds"] = res.seeds
        manifest["timing"]["retrospective"] = {
            p: {"cpu_minutes_mean": e["cpu_minutes"][0], "cpu_minutes_min": e["cpu_min"],
                "cpu_minutes_max": e["cpu_max"]} for p, e in res.summary.items()}
        for r in res.rows:
            if r.status != "ok":
                manifest["failures"].append({"replicate": r.replicate, "prior": r.prior, "reason": r.reason})
                status = EXIT_RUNTIME
            elif not r.diagnostics_ok and status == EXIT_OK:
                status = EXIT_DIAGNOSTICS
    if realtime:
        replicate = int(bcfg.get("realtime_replicate", 0))
        stop = bcfg.get("stop_weeks")
        dataset = simulate_replicate(params, replicate, seed, obs["rho"], obs["kappa"], obs["dt"])
        write_truth_csv(dataset, out / "realtime_truth.csv")
        scores = {}
        for kind, spec in specs.items():
            records = realtime_protocol(dataset, spec, start_weeks, sampler, seed, stop, jobs)
            target = out / "realtime" / kind
            target.mkdir(parents=True, exist_ok=True)
            write_realtime_csv(records, target / "realtime.csv")
            scores[kind] = realtime_scores(records)
            cpu = [r.cpu_seconds / 60.0 for r in records]
            manifest["timing"].setdefault("realtime", {})[kind] = {
                "cpu_minutes_mean": float(np.mean(cpu)), "cpu_minutes_min": min(cpu),
                "cpu_minutes_max": max(cpu)}
            for r in records:
                if r.status != "ok":
                    manifest["failures"].append({"T_prime": r.T_prime, "prior": kind, "reason": r.reason})
                    status = EXIT_RUNTIME
                elif not r.diagnostics_ok and status == EXIT_OK:
                    status = EXIT_DIAGNOSTICS
        _write_json(scores, out / "realtime_scores.json")
    manifest["timing"]["wall_seconds"] = time.time() - t0
    resolved = cfg.to_config()
    resolved["seed"] = seed
    resolved["scenario"] = {**params.to_config(), **obs}
    resolved["benchmark"] = {**bcfg, "realtime": realtime, "retrospective": retrospective,
                             "start_weeks": start_weeks}
    resolved["model"] = {**cfg.model, "priors": kinds}
    resolved["model"].pop("prior", None)
    manifest["config"] = resolved
    _write_json(manifest, out / "manifest.json")
    return status


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtsmooth", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"rtsmooth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("fit", "fit one or more priors to a weekly case CSV"),
                        ("simulate", "simulate a SEIRS outbreak and its observed cases"),
                        ("benchmark", "replicated SEIRS benchmark and/or real-time protocol")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name != "simulate",
                       help="YAML run configuration, or a manifest.json from an earlier run")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--jobs", type=int, help="worker processes for chains or replicates")
        p.add_argument("--output-dir", help="directory for outputs (overrides output.dir)")
        p.add_argument("--prior", help="prior kind(s), comma separated (overrides model.prior)")
        p.add_argument("--realtime", action="store_true", help="run the week-by-week refitting protocol")
        p.add_argument("--start-weeks", type=int, help="first truncation length for --realtime")
        p.add_argument("--save-draws", action="store_true", help="also write draws.csv")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_run_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    from .config import load_yaml

    doc = load_yaml(path)
    if "command" in doc and "config" in doc:  # replaying a manifest
        doc = doc["config"]
    return RunConfig.from_dict(doc, source=path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_run_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RtSmoothError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
