"""Command-line entry point: every verification as a subcommand with
machine-readable output.

Exit codes: 0 all embedded assertions pass, 1 an assertion failed (the
failing invariant is named on stderr), 2 usage or configuration error.
The OSP_SEED environment variable overrides --seed; an optional flat
key=value config file supplies defaults that flags override.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import checks
from .anyres import pad_grid, write_mask
from .gridseq import GridShape, read_ospt, write_ospt
from .hif8 import DEFAULT_SPEC, decode, dequantize, encode, quantize_tensor
from .mixflow import marginal_report, mixed_rollout, standard_ou, uniform_schedule
from .skiparse import SparsePattern, assignment_of
from .ssp import comm_comparison

DEFAULT_SEED = 7

ACCEPTANCE_GRIDS = (
    GridShape(1, 4, 4, 2),
    GridShape(2, 4, 4, 2),
    GridShape(1, 8, 8, 2),
    GridShape(2, 8, 8, 2),
    GridShape(1, 9, 9, 3),
)

_PATTERNS = {
    "original": SparsePattern.ORIGINAL,
    "tsa": SparsePattern.TOKEN_WISE,
    "gsa": SparsePattern.GROUP_WISE,
}


class UsageError(ValueError):
    pass


def _parse_grid(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--grid expects T,H,W, got {text!r}")
    try:
        t, h, w = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"--grid expects integers, got {text!r}") from None
    return t, h, w


def _load_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _failures(payload: dict, prefix: str = "") -> list[str]:
    names: list[str] = []
    if isinstance(payload, dict):
        for name, value in payload.get("checks", {}).items():
            if value is False:
                names.append(prefix + name)
        for key, value in payload.items():
            if key != "checks" and isinstance(value, (dict, list)):
                names.extend(_failures_from(value, f"{prefix}{key}."))
    return names


def _failures_from(node, prefix: str) -> list[str]:
    if isinstance(node, dict):
        return _failures(node, prefix)
    if isinstance(node, list):
        names = []
        for i, item in enumerate(node):
            names.extend(_failures_from(item, f"{prefix}{i}."))
        return names
    return []


def _finish(args, payload: dict) -> int:
    _emit(args, _dump_json(payload))
    if payload.get("pass", True):
        return 0
    names = _failures(payload) or ["pass"]
    print(f"FAIL: {', '.join(names)}", file=sys.stderr)
    return 1


def _grid_arg(args) -> GridShape:
    t, h, w = _parse_grid(args.grid)
    try:
        return GridShape(t, h, w, args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_rearrange_check(args) -> int:
    g = _grid_arg(args)
    payload = checks.rearrange_checks(g, seed=args.seed)
    payload["assignments"] = {
        pattern.value: assignment_of(pad_grid(g).padded, pattern).to_rows()
        for pattern in (SparsePattern.TOKEN_WISE, SparsePattern.GROUP_WISE)
    }
    return _finish(args, payload)


def _cmd_reach(args) -> int:
    return _finish(args, checks.reach_check(_grid_arg(args)))


def _cmd_mask_dump(args) -> int:
    g = _grid_arg(args)
    pg = pad_grid(g)
    if args.out:
        write_mask(args.out, pg)
    summary = {
        "grid": [g.t, g.h, g.w],
        "k": g.k,
        "padded_grid": [pg.padded.t, pg.padded.h, pg.padded.w],
        "real_tokens": int(pg.mask.sum()),
        "pad_tokens": int((~pg.mask).sum()),
        "trivial": pg.trivial,
        "pass": True,
    }
    sys.stdout.write(_dump_json(summary))
    return 0


def _cmd_attn_verify(args) -> int:
    g = _grid_arg(args)
    pattern = _PATTERNS[args.pattern]
    return _finish(args, checks.attention_check(g, pattern, chan=args.chan, seed=args.seed))


def _cmd_comm_sim(args) -> int:
    g = _grid_arg(args)
    live = None
    per_rank = (g.seq_len * args.chan) // args.group_size
    k2 = g.k * g.k
    if k2 % args.group_size == 0 and g.h % k2 == 0 and g.w % k2 == 0:
        live = checks.ssp_check(g, args.group_size, chan=args.chan, seed=args.seed)
        per_rank = live["per_rank_elements"]
    comparison = comm_comparison(args.group_size, per_rank, blocks=args.blocks)
    comparison["per_rank_bytes"] = per_rank * args.elem_bytes
    comparison["element_bytes"] = args.elem_bytes
    payload = {
        "grid": [g.t, g.h, g.w],
        "k": g.k,
        "comparison": comparison,
        "ssp_events": comparison["ssp_events"],
        "ulysses_events": comparison["ulysses_events"],
        "volume_ratio": comparison["volume_ratio"],
        "pass": comparison["volume_ratio"] == 0.25,
    }
    if live is not None:
        payload["protocol"] = live
        payload["pass"] = payload["pass"] and live["pass"]
    if args.format == "csv":
        rows = [[r["group_size"], r["ssp_global"], r["naive_global"], r["naive_over_ssp"]]
                for r in comparison["growth_table"]]
        _emit(args, _csv_text(["group_size", "ssp_global", "naive_global", "naive_over_ssp"], rows))
        return 0 if payload["pass"] else 1
    return _finish(args, payload)


def _cmd_hif8_enum(args) -> int:
    header = ["code_hex", "sign", "exponent", "mantissa_width", "fraction", "value"]
    rows = []
    for code in range(256):
        f = DEFAULT_SPEC.code_fields(code)
        rows.append([
            f"0x{code:02X}",
            f["sign"],
            "" if f["exponent"] is None else f["exponent"],
            "" if f["mantissa_width"] is None else f["mantissa_width"],
            "" if f["fraction"] is None else f["fraction"],
            repr(f["value"]),
        ])
    _emit(args, _csv_text(header, rows))
    return 0


def _cmd_hif8_encode(args) -> int:
    code = encode(args.value)
    payload = {
        "value": args.value,
        "code": code,
        "code_hex": f"0x{code:02X}",
        "decoded": decode(code),
        "abs_err": abs(decode(code) - args.value),
        "pass": True,
    }
    return _finish(args, payload)


def _cmd_hif8_quantize(args) -> int:
    x = read_ospt(args.input)
    q = quantize_tensor(x, args.mode)
    write_ospt(args.output, dequantize(q))
    sidecar_path = args.sidecar or (args.output + ".json")
    Path(sidecar_path).write_text(_dump_json({
        "scale": q.scale, "mode": q.mode, "amax": q.amax,
    }))
    sys.stdout.write(_dump_json({
        "input": args.input, "output": args.output, "sidecar": sidecar_path,
        "scale": q.scale, "mode": q.mode, "amax": q.amax, "pass": True,
    }))
    return 0


def _cmd_sampler(args) -> int:
    if args.sde_steps > args.steps:
        raise UsageError(f"--sde-steps {args.sde_steps} exceeds --steps {args.steps}")
    proc = standard_ou(2)
    sched = uniform_schedule(args.steps, set(range(args.sde_steps)))
    rng = np.random.Generator(np.random.PCG64(args.seed))
    x0 = rng.standard_normal((args.ensemble, proc.dim)) * np.sqrt(proc.var_at(float(sched.times[0])))
    result = mixed_rollout(x0, sched, proc, rng)
    report = marginal_report(result, proc, sched)
    if args.out:
        rows = [[repr(s["t"]), repr(s["mean"]), repr(s["var"]),
                 repr(s["analytic_mean"]), repr(s["analytic_var"])]
                for s in report["steps"]]
        Path(args.out).write_text(
            _csv_text(["t", "mean", "var", "analytic_mean", "analytic_var"], rows))
    verdict = {
        "steps": args.steps,
        "sde_steps": args.sde_steps,
        "ensemble": args.ensemble,
        "seed": args.seed,
        "noise_draws": result.noise_draws,
        "marginals": report,
        "pass": report["pass"],
    }
    sys.stdout.write(_dump_json(verdict))
    if not verdict["pass"]:
        print("FAIL: marginals_within_4_se", file=sys.stderr)
        return 1
    return 0


def _cmd_report_all(args) -> int:
    payload = build_full_report(args.seed)
    return _finish(args, payload)


def build_full_report(seed: int) -> dict:
    """Every verification on the standard grids, as one deterministic JSON
    document. Byte-identical across runs for a fixed seed."""
    rearrange = [checks.rearrange_checks(g, seed=seed) for g in ACCEPTANCE_GRIDS]
    reach = [checks.reach_check(g) for g in ACCEPTANCE_GRIDS]
    local_eq = [checks.local_equivalence_check(g, seed=seed + 1)
                for g in (GridShape(1, 8, 8, 2), GridShape(1, 9, 9, 3))]
    attn = [checks.attention_check(g, p, seed=seed + 2)
            for g in (GridShape(1, 4, 4, 2), GridShape(1, 8, 8, 2), GridShape(1, 9, 9, 3))
            for p in (SparsePattern.TOKEN_WISE, SparsePattern.GROUP_WISE)]
    anyres = checks.anyres_check(seed=seed + 3)
    ssp = [checks.ssp_check(g, n, seed=seed + 4) for g, n in
           ((GridShape(1, 4, 4, 2), 4), (GridShape(1, 8, 8, 2), 2), (GridShape(1, 8, 8, 2), 4))]
    comm = comm_comparison(4, 1024, blocks=1)
    flops = checks.flops_check()
    hif8_fmt = checks.hif8_format_check()
    quant = checks.quantizer_check()
    probe = checks.probe_check(seed=seed + 5)
    sampler = checks.sampler_check(seed=seed)
    schedule = checks.schedule_check()

    sections = {
        "rearrange": {"grids": rearrange, "pass": all(r["pass"] for r in rearrange)},
        "reachability": {"grids": reach, "pass": all(r["pass"] for r in reach)},
        "local_equivalence": {"grids": local_eq, "pass": all(r["pass"] for r in local_eq)},
        "attention": {"cases": attn, "pass": all(r["pass"] for r in attn)},
        "anyres": anyres,
        "ssp": {"cases": ssp, "pass": all(r["pass"] for r in ssp)},
        "communication": {**comm, "pass": comm["volume_ratio"] == 0.25
                          and comm["ssp_events"] == 1 and comm["ulysses_events"] == 4},
        "flops": flops,
        "hif8_format": hif8_fmt,
        "quantizer": quant,
        "quantized_attention_probe": probe,
        "sampler": sampler,
        "layer_schedule": schedule,
    }
    return {
        "seed": seed,
        "sections": sections,
        "pass": all(s["pass"] for s in sections.values()),
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osp",
        description="verification subcommands for the sparse rearrange, "
                    "parallelism, quantization and sampling mechanisms",
    )
    parser.add_argument("--config", help="flat key = value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, grid=True, seed=True, out=True):
        if grid:
            p.add_argument("--grid", default="1,8,8", help="T,H,W latent grid")
            p.add_argument("--k", type=int, default=2, help="sparse ratio (skip interval)")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        if out:
            p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("rearrange-check", help="pattern map round-trips and coherence")
    add_common(p)
    p.set_defaults(func=_cmd_rearrange_check)

    p = sub.add_parser("reach", help="two-hop reachability by exhaustive enumeration")
    add_common(p, seed=False)
    p.set_defaults(func=_cmd_reach)

    p = sub.add_parser("mask-dump", help="padding mask summary and binary dump")
    add_common(p, seed=False)
    p.set_defaults(func=_cmd_mask_dump)

    p = sub.add_parser("attn-verify", help="sparse attention vs masked dense oracle")
    add_common(p)
    p.add_argument("--pattern", choices=sorted(_PATTERNS), default="tsa")
    p.add_argument("--chan", type=int, default=8)
    p.set_defaults(func=_cmd_attn_verify)

    p = sub.add_parser("comm-sim", help="collective counts and volumes per block")
    add_common(p)
    p.add_argument("--group-size", type=int, default=4)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--chan", type=int, default=4)
    p.add_argument("--elem-bytes", type=int, default=2,
                   help="element width used for the bytes column")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=_cmd_comm_sim)

    p = sub.add_parser("hif8", help="8-bit codec utilities")
    hif8_sub = p.add_subparsers(dest="hif8_command", required=True)

    pe = hif8_sub.add_parser("enum", help="dump the full code/value table as CSV")
    pe.add_argument("--out")
    pe.set_defaults(func=_cmd_hif8_enum)

    pc = hif8_sub.add_parser("encode", help="encode one value")
    pc.add_argument("--value", type=float, required=True)
    pc.add_argument("--out")
    pc.set_defaults(func=_cmd_hif8_encode)

    pq = hif8_sub.add_parser("quantize", help="quantize an OSPT tensor file")
    pq.add_argument("--mode", choices=("forward", "backward"), required=True)
    pq.add_argument("--input", required=True)
    pq.add_argument("--output", required=True)
    pq.add_argument("--sidecar", help="sidecar JSON path (default: <output>.json)")
    pq.set_defaults(func=_cmd_hif8_quantize)

    p = sub.add_parser("sampler", help="mixed SDE/ODE rollout marginal check")
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--sde-steps", type=int, default=10)
    p.add_argument("--ensemble", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="per-step CSV path")
    p.set_defaults(func=_cmd_sampler)

    p = sub.add_parser("report-all", help="run every verification, one JSON report")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report_all)

    return parser


_CONFIG_CONVERTERS = {
    "k": int, "seed": int, "group_size": int, "blocks": int, "chan": int,
    "elem_bytes": int, "steps": int, "sde_steps": int, "ensemble": int,
    "value": float,
}


def _apply_config(args: argparse.Namespace, parser_defaults: dict, config: dict[str, str]) -> None:
    for key, raw in config.items():
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} does not match any option")
        current = getattr(args, key)
        if current != parser_defaults.get(key, current):
            continue  # an explicit flag wins over the file
        converter = _CONFIG_CONVERTERS.get(key, str)
        try:
            setattr(args, key, converter(raw))
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            defaults = {a.dest: a.default for a in parser._actions}
            for group in parser._subparsers._group_actions:
                for sp in group.choices.values():
                    defaults.update({a.dest: a.default for a in sp._actions})
            _apply_config(args, defaults, _load_config(args.config))
        if "OSP_SEED" in os.environ and hasattr(args, "seed"):
            args.seed = int(os.environ["OSP_SEED"])
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
