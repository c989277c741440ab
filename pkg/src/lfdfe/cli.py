"""Command line front end.

Examples
--------
::

    lfdfe codebook build --nt 6 --k 3 --size 64 --metric proj2 --seed 1 --out cb.json
    lfdfe simulate ber --config system.json --codebook cb.json \\
        --scheme grassmann-zfdfe:avg-ber --scheme ordering-norm-zfdfe --snr 10 13 16
    lfdfe verify --suite gmd

Exit codes: 0 success, 2 usage or invalid input, 3 infeasible, 4 property
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

from .channel import SystemConfig, generate_channel
from .codebook import (DEFAULT_BUDGET, METRICS, Codebook, build_grassmann_codebook,
                       min_pairwise_distance)
from .errors import AllInfeasible, CampaignInfeasible, LfdfeError, RankDeficient
from .objectives import OBJECTIVES
from .selection import (DISTORTION_KINDS, estimate_distortion, evaluate_distortion_bound,
                        select_precoder)
from .simkit import SCHEMES, Scheme, results_to_csv, run_ber_campaign, run_mi_campaign
from .verify import SUITES, run_suite

log = logging.getLogger("lfdfe")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_PROPERTY = 0, 2, 3, 4
SYSTEM_KEYS = ("nt", "nr", "k", "p_total", "sigma2_n")


class UsageError(Exception):
    pass


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _resolve(args, keys, defaults) -> dict:
    """Merge defaults < config file < explicit flags."""
    merged = dict(defaults)
    merged.update({k: v for k, v in _load_config(getattr(args, "config", None)).items()})
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _system(resolved: dict) -> SystemConfig:
    missing = [k for k in ("nt", "nr", "k") if k not in resolved]
    if missing:
        raise UsageError(f"missing system parameters: {', '.join(missing)}")
    return SystemConfig.from_dict({k: resolved[k] for k in SYSTEM_KEYS if k in resolved})


def _out_dir(args, command: str, name: str) -> Path:
    root = Path(args.out_root)
    path = root / command / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(path: Path, command, resolved, seeds, outputs, filename="manifest.json"):
    manifest = {
        "command": command,
        "config": resolved,
        "seeds": seeds,
        "code_version": code_version(),
        "outputs": sorted(str(p) for p in outputs),
    }
    (path / filename).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _emit(obj):
    print(json.dumps(obj, indent=2))


def _load_codebook(path) -> Codebook:
    try:
        return Codebook.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load codebook {path}: {exc}") from exc


# ---------------------------------------------------------------- commands

def cmd_codebook_build(args) -> int:
    history = []
    cb = build_grassmann_codebook(args.nt, args.k, args.size, metric=args.metric,
                                  budget=args.budget, seed=args.seed, history=history)
    name = args.name or f"grassmann-{args.nt}x{args.k}-{args.size}-{args.metric}-seed{args.seed}"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        manifest_dir = out.parent
    else:
        manifest_dir = _out_dir(args, "codebook", name)
        out = manifest_dir / "codebook.json"
    cb.save(out)
    outputs = [out]
    if args.plot:
        from .plotting import plot_packing_history
        outputs.append(plot_packing_history(history, out.with_suffix(".png")))
    resolved = {k: getattr(args, k) for k in ("nt", "k", "size", "metric", "budget")}
    _write_manifest(manifest_dir, "codebook build", resolved, {"build_seed": args.seed}, outputs,
                    filename=f"{out.stem}.manifest.json" if args.out else "manifest.json")
    print(f"min_distance {cb.min_distance!r}")
    return EXIT_OK


def cmd_codebook_stats(args) -> int:
    cb = _load_codebook(args.path)
    stats = {"size": len(cb), "nt": cb.nt, "k": cb.k, "kind": cb.kind, "metric": cb.metric,
             "build_seed": cb.build_seed, "orthonormality_residual": cb.validate()}
    for metric in METRICS:
        d = min_pairwise_distance(cb, metric) if len(cb) > 1 else math.inf
        stats[f"min_distance_{metric}"] = d if math.isfinite(d) else "inf"
    _emit(stats)
    return EXIT_OK


def cmd_select(args) -> int:
    cb = _load_codebook(args.codebook)
    resolved = _resolve(args, SYSTEM_KEYS, {"nt": cb.nt, "k": cb.k, "p_total": 1.0,
                                             "sigma2_n": 1.0})
    cfg = _system(resolved)
    channel = generate_channel(cfg, args.seed, args.index)
    result = select_precoder(channel, cb, args.objective, receiver=args.receiver,
                             keep_values=args.all)
    _emit(result.to_dict())
    return EXIT_OK


def _parse_scheme(text: str, codebook) -> Scheme:
    tag, _, objective = text.partition(":")
    if tag not in SCHEMES:
        raise UsageError(f"unknown scheme {tag!r}; choose from {', '.join(SCHEMES)}")
    needs_cb = tag in ("grassmann-zfdfe", "lin-zf-grassmann")
    if needs_cb and codebook is None:
        raise UsageError(f"scheme {tag} requires --codebook")
    return Scheme(tag, codebook if needs_cb else None, objective or "sum-mse")


CAMPAIGN_KEYS = SYSTEM_KEYS + ("snr", "channels", "frames", "seed", "schemes", "codebook",
                               "genie", "workers", "m", "name")
CAMPAIGN_DEFAULTS = {"p_total": None, "channels": 1000, "frames": 50, "seed": 0,
                     "genie": "off", "workers": 1, "m": 16}


def cmd_simulate(args) -> int:
    resolved = _resolve(args, CAMPAIGN_KEYS, CAMPAIGN_DEFAULTS)
    if resolved.get("p_total") is None:
        resolved["p_total"] = float(resolved.get("k", 1))
    for key in ("snr", "schemes"):
        if not resolved.get(key):
            raise UsageError(f"{key} must be given by flag or config file")
    cfg = _system(resolved)
    codebook = _load_codebook(resolved["codebook"]) if resolved.get("codebook") else None
    schemes = [_parse_scheme(s, codebook) for s in resolved["schemes"]]
    name = resolved.get("name") or f"{args.kind}-seed{resolved['seed']}"
    genie_modes = {"off": [False], "on": [True], "both": [False, True]}.get(resolved["genie"])
    if genie_modes is None:
        raise UsageError("genie must be one of off, on, both")
    results = []
    for scheme in schemes:
        if args.kind == "ber":
            for genie in genie_modes:
                results.append(run_ber_campaign(
                    cfg, scheme, resolved["snr"], resolved["channels"], resolved["frames"],
                    genie=genie, master_seed=resolved["seed"], m=resolved["m"],
                    workers=resolved["workers"]))
        else:
            results.append(run_mi_campaign(cfg, scheme, resolved["snr"], resolved["channels"],
                                           master_seed=resolved["seed"],
                                           workers=resolved["workers"]))
    out = _out_dir(args, "simulate", name)
    csv_path, json_path = out / "results.csv", out / "results.json"
    fig_path = out / f"{args.kind}.png"
    csv_path.write_text(results_to_csv(results))
    json_path.write_text(json.dumps({"manifest": "manifest.json",
                                     "results": [r.to_dict() for r in results]}, indent=2) + "\n")
    if not args.no_plot:
        from .plotting import plot_ber, plot_mi
        (plot_ber if args.kind == "ber" else plot_mi)(results, fig_path)
    outputs = [csv_path, json_path] + ([] if args.no_plot else [fig_path])
    _write_manifest(out, f"simulate {args.kind}", resolved, {"master_seed": resolved["seed"]},
                    outputs)
    print(csv_path.read_text(), end="")
    return EXIT_OK


def cmd_distortion(args) -> int:
    cb = _load_codebook(args.codebook)
    resolved = _resolve(args, SYSTEM_KEYS, {"nt": cb.nt, "k": cb.k, "p_total": float(cb.k),
                                             "sigma2_n": 1.0})
    if "nr" not in resolved:
        raise UsageError("nr must be given by flag or config file")
    cfg = _system(resolved)
    est = estimate_distortion(cb, args.kind, cfg, args.samples, args.seed)
    report = {"estimate": est.to_dict()}
    if args.density is not None:
        report["bound"] = evaluate_distortion_bound(cb, args.kind, cfg, density_d=args.density,
                                                    n_samples=args.samples, seed=args.seed)
    _emit(report)
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite, args.samples, args.seed)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {report.suite}: {check.name} worst={check.worst:.3e} "
              f"tol={check.tolerance:.1e} failures={check.failures}")
    if not report.passed:
        print(f"failed properties: {', '.join(report.failed)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_system_flags(p):
    p.add_argument("--config", help="JSON file with defaults; flags override it")
    p.add_argument("--nt", type=int)
    p.add_argument("--nr", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p-total", dest="p_total", type=float)
    p.add_argument("--sigma2", dest="sigma2_n", type=float, help="noise variance per antenna")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfdfe",
                                     description="Limited-feedback ZF-DFE precoding toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--out-root", default="out", help="root of the output tree")
    sub = parser.add_subparsers(dest="command", required=True)

    cb = sub.add_parser("codebook", help="build or inspect codebooks")
    cb_sub = cb.add_subparsers(dest="action", required=True)
    build = cb_sub.add_parser("build", help="pack a Grassmann codebook")
    build.add_argument("--nt", type=int, required=True)
    build.add_argument("--k", type=int, required=True)
    build.add_argument("--size", type=int, required=True)
    build.add_argument("--metric", choices=METRICS, default="proj2")
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    build.add_argument("--out", help="codebook JSON path (default out/codebook/<name>/codebook.json)")
    build.add_argument("--name", help="output directory name when --out is not given")
    build.add_argument("--plot", action="store_true", help="also write the packing history figure")
    build.set_defaults(func=cmd_codebook_build)
    stats = cb_sub.add_parser("stats", help="print codebook statistics")
    stats.add_argument("path")
    stats.set_defaults(func=cmd_codebook_stats)

    sel = sub.add_parser("select", help="select a codebook entry for a generated channel")
    _add_system_flags(sel)
    sel.add_argument("--codebook", required=True)
    sel.add_argument("--objective", choices=sorted(OBJECTIVES), default="sum-mse")
    sel.add_argument("--receiver", choices=("dfe", "linear"), default="dfe")
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--index", type=int, default=None, help="channel index within the seed")
    sel.add_argument("--all", action="store_true", help="include every entry's objective value")
    sel.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="run a BER or mutual-information campaign")
    sim.add_argument("kind", choices=("ber", "mi"))
    _add_system_flags(sim)
    sim.add_argument("--codebook")
    sim.add_argument("--scheme", dest="schemes", action="append",
                     help="scheme tag, optionally tag:objective; repeatable")
    sim.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
    sim.add_argument("--channels", type=int)
    sim.add_argument("--frames", type=int, help="symbol vectors per channel and SNR point")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--genie", choices=("off", "on", "both"))
    sim.add_argument("--workers", type=int)
    sim.add_argument("--m", type=int, help="constellation size")
    sim.add_argument("--name", help="output directory name")
    sim.add_argument("--no-plot", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    dist = sub.add_parser("distortion", help="estimate codebook distortion and its bound")
    _add_system_flags(dist)
    dist.add_argument("--codebook", required=True)
    dist.add_argument("--kind", choices=DISTORTION_KINDS, default="min-snr-loss")
    dist.add_argument("--samples", type=int, default=2000)
    dist.add_argument("--seed", type=int, default=0)
    dist.add_argument("--density", type=float, help="packing density D for the bound")
    dist.set_defaults(func=cmd_distortion)

    ver = sub.add_parser("verify", help="run a property suite")
    ver.add_argument("--suite", choices=SUITES, required=True)
    ver.add_argument("--samples", type=int, default=None)
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CampaignInfeasible, AllInfeasible, RankDeficient) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, LfdfeError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
