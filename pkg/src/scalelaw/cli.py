"""Command-line entry point: mix, pack, params, flops, fit, plan.

Exit codes: 0 success, 2 invalid input, 3 insufficient data / failed fit,
4 infeasible target. Every output file gets a sidecar
`<name>.manifest.json` recording the command, resolved configuration, input
digests, tool version, and seed; reruns with identical manifests write
identical outputs. All writes are atomic (temp file + rename), so failures
never leave partial outputs behind.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .accounting import (
    BASE_PRESETS,
    SCALED_PRESETS,
    ModelArch,
    arch_from_dict,
    flops,
    format_scaling_table,
    get_preset,
    param_count,
    scaling_table,
)
from .errors import (
    InfeasibleTarget,
    InsufficientData,
    InvalidInput,
    FitFailed,
    ScalelawError,
    ShardFormatError,
)
from .fitting import (
    ChinchillaFit,
    FitConfig,
    fit_chinchilla,
    fit_from_dict,
    fit_grouped,
    fit_power_law,
    holdout_extrapolation,
)
from .mixing import grouped_mix, load_manifest, materialize_indices, mix_plan
from .observations import load_observations, select_final_checkpoints
from .packing import format_sample, load_registry, load_samples_jsonl, pack, shard_stats, write_shard
from .planning import (
    BudgetQuery,
    data_needed,
    isoflop_optimum,
    match_model,
    params_needed,
    sixnd_flops_per_unit,
)


CONFIG_DIR_VAR = "SCALELAW_CONFIG_DIR"


def _resolve_input(path: str) -> str:
    """Fall back to $SCALELAW_CONFIG_DIR for input paths that don't exist as given."""
    if os.path.exists(path):
        return path
    config_dir = os.environ.get(CONFIG_DIR_VAR)
    if config_dir:
        candidate = os.path.join(config_dir, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out_path: Path, command: str, args: argparse.Namespace, inputs: list[str | Path]) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "func" and not k.startswith("_")
    }
    manifest = {
        "command": command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    _atomic_write_text(Path(str(out_path) + ".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _emit_json(out_path: Path, payload: dict, command: str, args: argparse.Namespace, inputs: list) -> None:
    _atomic_write_text(out_path, json.dumps(payload, indent=2) + "\n")
    _write_manifest(out_path, command, args, inputs)


def _emit_csv(out_path: Path, header: list[str], rows: list, command: str, args: argparse.Namespace, inputs: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(out_path, buf.getvalue())
    _write_manifest(out_path, command, args, inputs)


# ---------------------------------------------------------------------------
# mix


def cmd_mix(args: argparse.Namespace) -> int:
    args.manifest = _resolve_input(args.manifest)
    specs = load_manifest(args.manifest)
    if args.group_by == "none":
        plans = {"all": mix_plan(specs, args.temperature)}
    else:
        plans = grouped_mix(specs, args.temperature)

    payload = {
        "temperature": args.temperature,
        "plans": {g: p.to_dict() for g, p in sorted(plans.items())},
    }
    _emit_json(Path(args.out), payload, "mix", args, [args.manifest])

    for group in sorted(plans):
        plan = plans[group]
        print(f"group {group}: {len(plan.entries)} datasets, {plan.total_size:,} oversampled references")

    if args.indices_out:
        rows = []
        for group in sorted(plans):
            for dataset_id, index in materialize_indices(plans[group], args.seed):
                rows.append((group, dataset_id, index))
        _emit_csv(Path(args.indices_out), ["group", "dataset_id", "index"], rows, "mix", args, [args.manifest])
        print(f"wrote {len(rows):,} index references to {args.indices_out}")
    return 0


# ---------------------------------------------------------------------------
# pack


def cmd_pack(args: argparse.Namespace) -> int:
    args.samples = _resolve_input(args.samples)
    args.registry = _resolve_input(args.registry)
    registry = load_registry(args.registry)
    formatted = (format_sample(pair, registry) for pair in load_samples_jsonl(args.samples))
    result = pack(formatted, args.seq_len, args.policy, registry, lead_eos=args.eos_prefix)
    write_shard(result.shard, args.out)
    _write_manifest(Path(args.out), "pack", args, [args.samples, args.registry])

    stats = shard_stats(result.shard)
    print(f"packed {result.n_packed} samples into {result.shard.n_sequences} sequences of {args.seq_len}")
    print(
        f"tokens {stats.total_tokens} | loss-bearing {stats.loss_tokens} | pad {stats.pad_tokens} "
        f"| samples started {stats.samples_started} | loss fraction {stats.loss_fraction:.4f}"
    )
    if result.n_skipped:
        print(
            f"skipped {result.n_skipped} samples longer than seq_len "
            f"(lengths {list(result.skipped_lengths)})",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------------------
# params / flops


def _resolve_arch(spec: str) -> list[ModelArch]:
    if spec == "all":
        return [get_preset(name) for name in BASE_PRESETS]
    if spec == "scaled":
        return [get_preset(name) for name in SCALED_PRESETS]
    if spec.endswith(".json") or "/" in spec or os.path.exists(spec):
        raw = json.loads(Path(_resolve_input(spec)).read_text())
        return [arch_from_dict(r) for r in (raw if isinstance(raw, list) else [raw])]
    return [get_preset(spec)]


def cmd_params(args: argparse.Namespace) -> int:
    archs = _resolve_arch(args.arch)
    if args.compare:
        base = archs[0]
        variants = [a for spec in args.compare.split(",") for a in _resolve_arch(spec.strip())]
        rows = scaling_table(base, variants, mode=args.mode)
        print(format_scaling_table(rows))
        if args.csv_out:
            _emit_csv(
                Path(args.csv_out),
                ["name", "layers", "dim", "non_embedding", "embedding", "train_flops_per_sample", "relative_flops", "note"],
                [
                    (r.name, r.layers, r.dim, r.non_embedding, r.embedding,
                     f"{r.train_flops_per_sample:.6e}", f"{r.relative_flops:.6f}", r.note)
                    for r in rows
                ],
                "params", args, [],
            )
        return 0

    header = ("model", "layers", "dim", "heads", "non-embedding", "embedding", "total", "padded vocab")
    lines = [header]
    for arch in archs:
        pc = param_count(arch)
        lines.append(
            (arch.name, str(arch.layers), str(arch.dim), str(arch.heads),
             f"{pc.non_embedding:,}", f"{pc.embedding:,}", f"{pc.total:,}", str(pc.padded_vocab))
        )
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    for row in lines:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)))
    return 0


def cmd_flops(args: argparse.Namespace) -> int:
    for arch in _resolve_arch(args.arch):
        est = flops(arch, args.mode, avg_context=args.avg_context)
        print(
            f"{arch.name}: mode {est.mode} | forward/token {est.forward_per_token:.6e} | "
            f"train/token {est.train_per_token:.6e} | train/sample {est.train_per_sample:.6e}"
        )
        if args.tokens:
            print(f"{arch.name}: train total over {args.tokens:.3e} tokens = {est.train_total(args.tokens):.6e} FLOP")
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_config(args: argparse.Namespace) -> FitConfig:
    return FitConfig(huber_delta=args.delta, residual_space=args.residual, seed=args.seed)


def _curve_rows(fit, observations) -> list[tuple]:
    n_values = np.array([o.n for o in observations])
    rows: list[tuple] = []
    if isinstance(fit, ChinchillaFit):
        d_values = np.array([o.d for o in observations])
        d_sweep = np.geomspace(d_values.min(), d_values.max(), 65)
        for n in sorted(set(n_values.tolist())):
            for d in d_sweep:
                rows.append((f"{n:.8e}", f"{d:.8e}", f"{fit.predict(n, d):.8e}"))
    else:
        for n in np.geomspace(n_values.min() / 2, n_values.max() * 2, 129):
            rows.append((f"{n:.8e}", "", f"{fit.predict(n):.8e}"))
    return rows


def cmd_fit(args: argparse.Namespace) -> int:
    args.observations = _resolve_input(args.observations)
    observations = load_observations(args.observations)
    cfg = _fit_config(args)

    if args.holdout_ladder:
        ladder = [m.strip() for m in args.holdout_ladder.split(",") if m.strip()]
        report = holdout_extrapolation(observations, ladder, cfg, law=args.law)
        _emit_json(Path(args.out), report.to_dict(), "fit", args, [args.observations])
        for row in report.rows:
            print(
                f"drop {row.n_dropped}: held-out {row.held_out_model} actual {row.actual:.5f} "
                f"predicted {row.predicted:.5f} rel err {row.relative_error:+.4%}"
            )
        if args.holdout_out:
            _emit_csv(
                Path(args.holdout_out),
                ["n_dropped", "fit_models", "held_out_model", "N", "actual", "predicted", "signed_error", "relative_error"],
                [
                    (r.n_dropped, ";".join(r.fit_models), r.held_out_model, f"{r.n:.8e}",
                     f"{r.actual:.8e}", f"{r.predicted:.8e}", f"{r.signed_error:.8e}", f"{r.relative_error:.8e}")
                    for r in report.rows
                ],
                "fit", args, [args.observations],
            )
        return 0

    if args.group_by:
        result = fit_grouped(observations, args.group_by, cfg, law=args.law)
        payload = result.to_dict()
        payload["d_unit"] = args.d_unit
        _emit_json(Path(args.out), payload, "fit", args, [args.observations])
        for group, fit in sorted(result.fits.items()):
            print(f"group {group}: {_fit_summary(fit)}")
        for group, reason in sorted(result.skipped.items()):
            print(f"group {group}: skipped ({reason})", file=sys.stderr)
        if not result.fits:
            raise InsufficientData(f"no group could be fitted: {result.skipped}")
        return 0

    if args.law == "power":
        fit = fit_power_law(select_final_checkpoints(observations), cfg)
    else:
        fit = fit_chinchilla(observations, cfg, d_unit=args.d_unit)
    _emit_json(Path(args.out), fit.to_dict(), "fit", args, [args.observations])
    print(_fit_summary(fit))
    if args.curve_out:
        _emit_csv(Path(args.curve_out), ["N", "D", "predicted_loss"], _curve_rows(fit, observations),
                  "fit", args, [args.observations])
    return 0


def _fit_summary(fit) -> str:
    if isinstance(fit, ChinchillaFit):
        return (
            f"L(N,D) = {fit.e:.6g} + {fit.a:.6g}/N^{fit.alpha:.6g} + {fit.b:.6g}/D^{fit.beta:.6g} "
            f"| objective {fit.objective:.3e} | converged {fit.converged} | points {fit.n_points}"
        )
    return (
        f"L(N) = {fit.alpha:.6g} * N^(-{fit.p:.6g}) + {fit.beta:.6g} "
        f"| objective {fit.objective:.3e} | converged {fit.converged} | points {fit.n_points}"
    )


# ---------------------------------------------------------------------------
# plan


def _load_chinchilla_fit(path: str) -> ChinchillaFit:
    raw = json.loads(Path(_resolve_input(path)).read_text())
    fit = fit_from_dict(raw)
    if not isinstance(fit, ChinchillaFit):
        raise InvalidInput("planning needs a bivariate (chinchilla) fit; this file holds a power-law fit")
    return fit


def _flops_callable(args: argparse.Namespace, fit: ChinchillaFit):
    if args.mode == "sixnd":
        return sixnd_flops_per_unit(fit.d_unit, args.tokens_per_sample), fit.d_unit
    if not args.arch:
        raise InvalidInput("exact FLOP mode needs --arch to anchor the per-parameter cost")
    arch = _resolve_arch(args.arch)[0]
    est = flops(arch, "exact")
    per_param = est.train_per_token / param_count(arch).non_embedding
    scale = 1.0 if fit.d_unit == "tokens" else float(args.tokens_per_sample)

    def per_unit(n: float) -> float:
        return per_param * n * scale

    return per_unit, fit.d_unit


def cmd_plan(args: argparse.Namespace) -> int:
    args.fit = _resolve_input(args.fit)
    fit = _load_chinchilla_fit(args.fit)
    inputs = [args.fit]

    if args.match:
        try:
            small_s, big_s = args.match.split(":")
            small_n, big_n = float(small_s), float(big_s)
        except ValueError:
            raise InvalidInput(f"--match expects SMALL_N:BIG_N, got {args.match!r}") from None
        if args.big_d is None:
            raise InvalidInput("--match needs --big-d (the big model's data amount)")
        per_unit, unit = _flops_callable(args, fit)
        result = match_model(fit, small_n, big_n, args.big_d, per_unit, unit)
        query = BudgetQuery(kind="match", fit=fit, flop_mode=args.mode, arch_name=args.arch)
        payload = {"query": query.to_dict(), "result": result.to_dict()}
        print(
            f"target loss {result.target_loss:.6f}: N={small_n:.4g} needs D={result.small_d:.6g} "
            f"({result.multiplier:.4g}x the big model's data); FLOP ratio small/big {result.flops_ratio:.4g}"
        )
    elif args.flop_budget is not None:
        per_unit, unit = _flops_callable(args, fit)
        result = isoflop_optimum(fit, args.flop_budget, per_unit, unit)
        query = BudgetQuery(kind="isoflop", fit=fit, flop_mode=args.mode, arch_name=args.arch,
                            flop_budget=args.flop_budget)
        payload = {"query": query.to_dict(), "result": {k: v for k, v in result.to_dict().items() if k != "curve"}}
        print(
            f"budget {args.flop_budget:.4g} FLOP: N* = {result.n_opt:.6g}, D* = {result.d_opt:.6g} "
            f"{result.d_unit}, predicted loss {result.loss_opt:.6f}"
        )
        if args.curve_out:
            _emit_csv(
                Path(args.curve_out), ["N", "D", "predicted_loss"],
                [(f"{n:.8e}", f"{d:.8e}", f"{l:.8e}") for n, d, l in result.curve],
                "plan", args, inputs,
            )
    elif args.target_loss is not None:
        if (args.n is None) == (args.d is None):
            raise InvalidInput("--target-loss needs exactly one of --n (solve for data) or --d (solve for size)")
        query = BudgetQuery(kind="data_needed" if args.d is None else "params_needed", fit=fit,
                            flop_mode=args.mode, arch_name=args.arch, target_loss=args.target_loss)
        if args.d is None:
            value = data_needed(fit, args.n, args.target_loss)
            payload = {"query": query.to_dict(), "result": {"N": args.n, "D_needed": value, "d_unit": fit.d_unit}}
            print(f"loss {args.target_loss} at N={args.n:.6g} needs D = {value:.6g} {fit.d_unit}")
        else:
            value = params_needed(fit, args.d, args.target_loss)
            payload = {"query": query.to_dict(), "result": {"D": args.d, "N_needed": value}}
            print(f"loss {args.target_loss} at D={args.d:.6g} {fit.d_unit} needs N = {value:.6g}")
    else:
        raise InvalidInput("plan needs one of --target-loss, --flop-budget, or --match")

    if args.out:
        _emit_json(Path(args.out), payload, "plan", args, inputs)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scalelaw",
        description="Corpus mixing, sequence packing, parameter/FLOP accounting, "
        "scaling-law fitting, and training-budget planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", help="temperature-sample a dataset manifest into a mix plan")
    p.add_argument("manifest", help="CSV or JSON manifest with id, group, size")
    p.add_argument("--temperature", "-t", type=float, required=True)
    p.add_argument("--group-by", choices=["group", "none"], default="group",
                   help="apply the temperature per group column (default) or over all datasets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="mix-plan JSON output")
    p.add_argument("--indices-out", help="optional CSV of materialized (group,dataset,index) references")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("pack", help="format and pack tokenized sentence pairs into a shard")
    p.add_argument("samples", help="JSON-lines sentence pairs")
    p.add_argument("--registry", required=True, help="special-token registry JSON")
    p.add_argument("--seq-len", type=int, default=512)
    p.add_argument("--policy", choices=["split", "droptail"], default="split")
    p.add_argument("--eos-prefix", action="store_true",
                   help="start the stream with a loss-masked <eos> so even the first source follows one")
    p.add_argument("--out", required=True, help="shard output path")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("params", help="parameter counts for presets or arch files")
    p.add_argument("--arch", required=True, help="preset name, 'all', 'scaled', or an arch JSON file")
    p.add_argument("--compare", help="comma-separated variant archs for a scaling table")
    p.add_argument("--mode", choices=["sixnd", "exact"], default="sixnd")
    p.add_argument("--csv-out", help="write comparison rows as CSV")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("flops", help="FLOP estimates for presets or arch files")
    p.add_argument("--arch", required=True)
    p.add_argument("--mode", choices=["sixnd", "exact"], default="sixnd")
    p.add_argument("--avg-context", type=float, default=None,
                   help="average attention context for exact mode (default seq_len/2)")
    p.add_argument("--tokens", type=float, default=None, help="also print total train FLOPs for this many tokens")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("fit", help="fit scaling laws to loss observations")
    p.add_argument("observations", help="CSV (model,N,D,loss[,direction,domain]) or JSONL")
    p.add_argument("--law", choices=["power", "chinchilla"], default="power")
    p.add_argument("--delta", type=float, default=0.01, help="huber transition (default 0.01)")
    p.add_argument("--residual", choices=["log", "linear"], default="log")
    p.add_argument("--group-by", choices=["direction", "domain", "both"], default=None)
    p.add_argument("--holdout-ladder", help="comma-separated model names, ascending N")
    p.add_argument("--d-unit", choices=["samples", "tokens"], default="samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="fit/report JSON output")
    p.add_argument("--curve-out", help="CSV of predicted-loss curve samples")
    p.add_argument("--holdout-out", help="CSV of holdout rows")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plan", help="budget questions against a fitted bivariate law")
    p.add_argument("fit", help="fit JSON from `scalelaw fit --law chinchilla`")
    p.add_argument("--target-loss", type=float)
    p.add_argument("--n", type=float, help="with --target-loss: solve for data at this N")
    p.add_argument("--d", type=float, help="with --target-loss: solve for size at this D")
    p.add_argument("--flop-budget", type=float, help="iso-FLOP optimum for this training budget")
    p.add_argument("--match", help="SMALL_N:BIG_N, solve the small model's data multiplier to match the big one")
    p.add_argument("--big-d", type=float, help="big model's data amount for --match")
    p.add_argument("--mode", choices=["sixnd", "exact"], default="sixnd")
    p.add_argument("--arch", help="arch preset/file anchoring exact-mode FLOPs")
    p.add_argument("--tokens-per-sample", type=int, default=512)
    p.add_argument("--out", help="result JSON output")
    p.add_argument("--curve-out", help="CSV of the iso-FLOP constraint curve")
    p.set_defaults(func=cmd_plan)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 4
    except (InsufficientData, FitFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InvalidInput, ShardFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return 2
    except ScalelawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
