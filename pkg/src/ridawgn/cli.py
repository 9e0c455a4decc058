"""Command-line runner: one subcommand per library surface, JSON out.

Every run produces a document {command, params, seed, results, diagnostics}.
Only ``diagnostics.started`` / ``diagnostics.finished`` vary between reruns;
``ridawgn replay doc.json`` re-executes a stored document.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds, channel, idcodec, resolvability, shellquant
from .numerics import DomainError, RngStream, q_inverse

SEED_ENV = "RIDAWGN_SEED"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


# ---------------------------------------------------------------------------
# subcommand bodies: params dict in, (results, csv text or None) out
# ---------------------------------------------------------------------------

def _spec(n, power):
    return channel.ChannelSpec(int(n), float(power))


def cmd_bounds(p: dict, seed: int, workers: int):
    rows = []
    for n in p["n"]:
        spec = _spec(n, p["power"])
        for eps in p["eps"]:
            est = bounds.id_second_order(spec, eps)
            rows.append({"n": spec.n, "power": spec.power, "eps": eps,
                         "capacity": bounds.capacity(spec.power),
                         "dispersion": bounds.dispersion(spec.power),
                         **est.to_dict(),
                         "log2_M_transmission": bounds.transmission_second_order(spec, eps).value})
    return {"rows": rows}, None


def cmd_plan(p: dict, seed: int, workers: int):
    plan = bounds.plan_achievability(_spec(p["n"], p["power"]), p["eps"], p["berry_b"])
    return plan.to_dict(), None


def cmd_sandwich(p: dict, seed: int, workers: int):
    rows = bounds.sandwich_report(p["n"], p["power"], p["eps"], p["berry_b"], p["delta"])
    return {"rows": rows}, None


def _shell_point(spec):
    return np.full(spec.n, math.sqrt(spec.power))


def cmd_clt(p: dict, seed: int, workers: int):
    spec = _spec(p["n"], p["power"])
    x = _shell_point(spec)
    rng = RngStream(seed)
    ks, summary = channel.clt_diagnostic(spec, x, p["trials"], rng.child(0), workers=workers)
    out = {"ks_distance": ks, "summary": summary}
    if p["trials"] >= 100:
        out["moments"] = channel.estimate_moments(spec, x, p["trials"], rng.child(0), workers=workers)
        out["capacity"] = spec.capacity
        out["dispersion"] = spec.dispersion
    return out, None


def cmd_simulate_id(p: dict, seed: int, workers: int):
    spec = _spec(p["n"], p["power"])
    if p["log2_k"] is not None:
        log2_K = p["log2_k"]
    else:
        log2_K = spec.n * spec.capacity - q_inverse(p["design_eps"]) * math.sqrt(spec.n * spec.dispersion)
    rng = RngStream(seed)
    code = idcodec.build_id_code(spec, p["N"], p["M"], log2_K, p["construction"], p["T"], rng.child(0))
    prof = idcodec.code_error_profile(code, p["trials"], rng.child(1), p["eps"], p["delta"],
                                      budget=p["budget"], workers=workers)
    res = {"log2_K": log2_K, "N": code.N,
           "type2_bound_proxy": bounds.type2_bound_proxy(spec.n, log2_K, code.per_message_codewords),
           **prof.to_dict()}
    return res, None


def cmd_resolvability(p: dict, seed: int, workers: int):
    spec = _spec(p["n"], p["power"])
    if p["rates"] is not None:
        rates = list(p["rates"])
    else:
        rates = [spec.capacity + off for off in p["rate_offsets"]]
    rows = resolvability.resolvability_experiment(spec, rates, p["trials"], RngStream(seed),
                                                  target=p["target"], workers=workers)
    return {"capacity": spec.capacity, "spearman": resolvability.rate_tv_spearman(rows) if len(rows) > 1
            else None, "rows": rows}, resolvability.curve_to_csv(rows)


def cmd_quantize(p: dict, seed: int, workers: int):
    spec = _spec(p["n"], p["power"])
    qs = shellquant.QuantizerSpec.for_channel(spec, p["theta"])
    rng = RngStream(seed)
    gen = rng.child(0).generator()
    atoms = shellquant.sample_shell(spec, gen, p["atoms"])
    weights = gen.dirichlet(np.ones(p["atoms"]))
    report = shellquant.quantization_tv_report(atoms, qs, spec, p["trials"], rng.child(1), weights,
                                               workers=workers)
    out = {"log2_sector_count": shellquant.sector_count(qs).value,
           "grid_sector_count": shellquant.grid_sector_count(qs),
           "report": report}
    if spec.n >= 3:
        out["growth_ratio"] = shellquant.sector_growth_ratio(spec.n, spec.power)
    return out, None


def cmd_frey(p: dict, seed: int, workers: int):
    P = p["power"]
    rho = p["rho"]
    if rho is None:
        single = channel.ChannelSpec(1, P)
        rho = channel.estimate_moments(single, [math.sqrt(P)], p["trials"], RngStream(seed),
                                       workers=workers).third_abs
    V = p["dispersion"] if p["dispersion"] is not None else bounds.dispersion(P)
    I = p["mutual_info"] if p["mutual_info"] is not None else bounds.capacity(P)
    fp = resolvability.FreyParams(I, V, rho, p["xi"], p["c"], p["d"], p["n"])
    return {"params": fp.__dict__, "bound": resolvability.frey_bound(fp)}, None


COMMANDS = {
    "bounds": cmd_bounds,
    "plan": cmd_plan,
    "sandwich": cmd_sandwich,
    "clt": cmd_clt,
    "simulate-id": cmd_simulate_id,
    "resolvability": cmd_resolvability,
    "quantize": cmd_quantize,
    "frey": cmd_frey,
}


def execute(command: str, params: dict, seed: int, workers: int = 1) -> tuple[dict, str | None]:
    """Run a subcommand and return (document without timestamps, csv text)."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    results, csv_text = COMMANDS[command](params, seed, workers)
    doc = {
        "command": command,
        "params": params,
        "seed": seed,
        "results": results,
        "diagnostics": {"artifact_version": __version__, "started": started,
                        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }
    return _jsonable(doc), csv_text


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sp: argparse.ArgumentParser, power=True):
    sp.add_argument("--seed", type=int, default=None, help=f"RNG seed (default ${SEED_ENV} or 0)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", type=Path, default=None, help="write JSON here instead of stdout")
    sp.add_argument("--csv", type=Path, default=None, help="also write a CSV table (where available)")
    if power:
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--power", type=float, default=None, help="linear SNR P")
        g.add_argument("--snr-db", type=float, default=None, help="SNR in dB")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ridawgn",
                                 description="Second-order identification bounds for AWGN channels")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("bounds", help="normal approximations for ID and transmission")
    sp.add_argument("--n", type=int, nargs="+", required=True)
    sp.add_argument("--eps", type=float, nargs="+", required=True)
    _add_common(sp)

    sp = sub.add_parser("plan", help="achievability planner and feasibility")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--berry-b", type=float, default=1.0)
    _add_common(sp)

    sp = sub.add_parser("sandwich", help="achievability / approximation / converse table")
    sp.add_argument("--n", type=int, nargs="+", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--berry-b", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=1e-12)
    _add_common(sp)

    sp = sub.add_parser("clt", help="CLT / Berry-Esseen diagnostic of the information density")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    _add_common(sp)

    sp = sub.add_parser("simulate-id", help="build an ID code and profile its errors")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--M", type=int, default=1, help="codewords per message, or pool size")
    sp.add_argument("--T", type=int, default=None, help="subset size (shared pool)")
    sp.add_argument("--construction", choices=[idcodec.INDEPENDENT, idcodec.SHARED],
                    default=idcodec.INDEPENDENT)
    th = sp.add_mutually_exclusive_group()
    th.add_argument("--log2-k", type=float, default=None)
    th.add_argument("--design-eps", type=float, default=0.1)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--budget", type=int, default=idcodec.DEFAULT_BUDGET)
    _add_common(sp)

    sp = sub.add_parser("resolvability", help="TV-vs-rate curve for random codebooks")
    sp.add_argument("--n", type=int, required=True)
    rg = sp.add_mutually_exclusive_group()
    rg.add_argument("--rates", type=float, nargs="+", default=None)
    rg.add_argument("--rate-offsets", type=float, nargs="+", default=[-0.25, 0.0, 0.25, 0.5],
                    help="rates relative to C(P)")
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--target", choices=["shell", "cao"], default="shell")
    _add_common(sp)

    sp = sub.add_parser("quantize", help="sector counts and quantization TV vs Pinsker")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--theta", type=float, default=math.pi / 8)
    sp.add_argument("--atoms", type=int, default=64)
    sp.add_argument("--trials", type=int, default=10_000)
    _add_common(sp)

    sp = sub.add_parser("frey", help="Frey second-order resolvability bound")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--c", type=float, default=2.0)
    sp.add_argument("--d", type=float, default=0.5)
    sp.add_argument("--mutual-info", type=float, default=None, help="default C(P)")
    sp.add_argument("--dispersion", type=float, default=None, help="default V(P)")
    sp.add_argument("--rho", type=float, default=None, help="default: Monte Carlo estimate")
    sp.add_argument("--trials", type=int, default=100_000)
    _add_common(sp)

    sp = sub.add_parser("replay", help="re-run a stored result document")
    sp.add_argument("document", type=Path)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--csv", type=Path, default=None)
    return ap


_NON_PARAMS = {"command", "seed", "workers", "out", "csv", "snr_db", "power"}


def _params_from_args(args: argparse.Namespace) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in _NON_PARAMS}
    if hasattr(args, "power"):
        if args.snr_db is not None:
            params["snr_db"] = args.snr_db
            params["power"] = 10.0 ** (args.snr_db / 10.0)
        else:
            params["power"] = 1.0 if args.power is None else args.power
    return params


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        stored = json.loads(args.document.read_text())
        command, params, seed = stored["command"], stored["params"], stored["seed"]
        if command not in COMMANDS:
            print(f"error: unknown command {command!r} in {args.document}", file=sys.stderr)
            return 2
    else:
        command = args.command
        params = _params_from_args(args)
        seed = _default_seed() if args.seed is None else args.seed
    try:
        doc, csv_text = execute(command, params, seed, args.workers)
    except (DomainError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = dumps(doc)
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv is not None and csv_text is not None:
        args.csv.write_text(csv_text)
    manifest = {"command": command, "params": doc["params"], "seed": seed, **doc["diagnostics"]}
    print(json.dumps(manifest, sort_keys=True), file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
