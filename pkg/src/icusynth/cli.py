"""Command-line surface for the full pipeline.

Every command takes --seed, --out and optionally --config plus repeatable
--set dotted-key overrides; each writes its artifact(s) plus one line in the
output directory's append-only ``manifest.ndjson`` (command, config hash,
seed, input hashes, outputs, wall time). Artifacts themselves are
byte-identical across reruns with the same (config, seed); the manifest is
an audit log and grows by one line per invocation.

Exit codes: 0 success, 2 config error, 3 prerequisite missing, 4 numeric
failure, 5 undefined metric.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig
from .autoencoder import VaeParams, encode_cohort, train_vae
from .data import Cohort, load_cohort, normalize, save_cohort, stratified_split, synth_toy_cohort
from .diffusion import GeneratorBundle, generate, make_schedule, train_diffusion
from .errors import (
    ConfigError,
    InputError,
    NumericError,
    PrerequisiteError,
    RareConditionError,
    UndefinedMetricError,
)
from .evaluation import (
    default_weight_grid,
    evaluation_utility,
    fidelity_eval,
    subgroup_eval,
    utility_report,
    verify_report_consistency,
    weight_sweep,
)
from .numerics import RngStream
from .serialize import canonical_dumps, read_json, write_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PREREQUISITE = 3
EXIT_NUMERIC = 4
EXIT_UNDEFINED_METRIC = 5


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _hash_input(path: Path) -> str:
    path = Path(path)
    if path.is_dir():
        parts = []
        for name in ("meta.json", "records.ndjson"):
            child = path / name
            if child.is_file():
                parts.append(f"{name}:{_sha256_file(child)}")
        return hashlib.sha256("|".join(parts).encode()).hexdigest()
    return _sha256_file(path)


def _require(path: Path, what: str, produced_by: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise PrerequisiteError(
            f"missing {what} at {path}; run `icusynth {produced_by}` first"
        )
    return path


def _manifest_line(
    out_dir: Path,
    command: str,
    config: RunConfig,
    seed: int,
    inputs: dict[str, Path],
    outputs: list[Path],
    started: float,
    overrides: list[str],
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    line = canonical_dumps(
        {
            "command": command,
            "version": __version__,
            "config_hash": config.hash,
            "seed": seed,
            "overrides": overrides,
            "inputs": {name: _hash_input(p) for name, p in inputs.items()},
            "outputs": [str(p) for p in outputs],
            "wall_time_s": round(time.monotonic() - started, 3),
        }
    )
    with (out_dir / "manifest.ndjson").open("a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def _provenance(command: str, config: RunConfig, seed: int) -> dict:
    return {"command": command, "config_hash": config.hash, "seed": seed}


def _stamp_report(report: dict, config: RunConfig) -> dict:
    report["config_hash"] = config.hash
    return report


def _load_split_dirs(args) -> tuple[Cohort, Cohort, Cohort]:
    train = load_cohort(_require(args.train, "training split", "split"))
    holdout = load_cohort(_require(args.holdout, "holdout split", "split"))
    holdout_val = load_cohort(_require(args.holdout_val, "holdout-val split", "split"))
    return train, holdout, holdout_val


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_toy(args, config: RunConfig) -> int:
    started = time.monotonic()
    preset = config.toy_preset()
    cohort = synth_toy_cohort(preset, seed=args.seed)
    cohort.meta.provenance = _provenance("gen-toy", config, args.seed)
    out = Path(args.out)
    save_cohort(cohort, out)
    print(f"wrote toy cohort: {len(cohort)} records -> {out}")
    _manifest_line(out, "gen-toy", config, args.seed, {}, [out / "records.ndjson"], started, args.set)
    return EXIT_OK


def cmd_split(args, config: RunConfig) -> int:
    started = time.monotonic()
    data_dir = _require(args.data, "dataset directory", "gen-toy")
    cohort = load_cohort(data_dir)
    spec = config.split_spec(args.seed)
    train, holdout, holdout_val = stratified_split(cohort, spec)
    out = Path(args.out)
    outputs = []
    for name, split in (("train", train), ("holdout", holdout), ("holdout_val", holdout_val)):
        split.meta = dataclasses.replace(
            split.meta, provenance=_provenance("split", config, args.seed) | {"split": name}
        )
        save_cohort(split, out / name)
        outputs.append(out / name / "records.ndjson")
    print(
        f"split {len(cohort)} records -> train {len(train)} / holdout {len(holdout)} / "
        f"holdout_val {len(holdout_val)}"
    )
    _manifest_line(out, "split", config, args.seed, {"data": data_dir}, outputs, started, args.set)
    return EXIT_OK


def cmd_train_vae(args, config: RunConfig) -> int:
    started = time.monotonic()
    data_dir = _require(args.data, "training split", "split")
    cohort = normalize(load_cohort(data_dir))
    rng = RngStream(args.seed).child("train-vae")
    params, log = train_vae(cohort, config.vae_config(), rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vae_path = out / "vae.json"
    params.save(vae_path)
    write_json(
        out / "vae_log.json",
        {"provenance": _provenance("train-vae", config, args.seed), "epochs": log},
    )
    print(f"trained VAE: recon {log[0]['recon']:.4f} -> {log[-1]['recon']:.4f}; wrote {vae_path}")
    _manifest_line(
        out, "train-vae", config, args.seed, {"data": data_dir},
        [vae_path, out / "vae_log.json"], started, args.set,
    )
    return EXIT_OK


def cmd_train_diff(args, config: RunConfig) -> int:
    started = time.monotonic()
    data_dir = _require(args.data, "training split", "split")
    vae_path = _require(args.vae, "VAE checkpoint", "train-vae")
    raw = load_cohort(data_dir)
    normed = normalize(raw)
    vae_params = VaeParams.load(vae_path)
    latents = encode_cohort(normed, vae_params)
    sched_cfg = config.raw["schedule"]
    schedule = make_schedule(
        sched_cfg["steps"], beta_min=sched_cfg["beta_min"], beta_max=sched_cfg["beta_max"]
    )
    rng = RngStream(args.seed).child("train-diff")
    denoiser, log = train_diffusion(
        latents, normed.conditions_with_outcomes(), schedule, config.diffusion_config(), rng
    )
    bundle = GeneratorBundle(
        vae=vae_params,
        denoiser=denoiser,
        schedule=schedule,
        guidance_weight=config.raw["weights"]["guidance"],
        norm_mean=normed.meta.norm_mean,
        norm_sd=normed.meta.norm_sd,
        fill_medians=raw.meta.fill_medians,
        feature_names=raw.meta.feature_names,
        n_timesteps=raw.meta.n_timesteps,
        task_name=raw.meta.task_name,
        config_hash=config.hash,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = out / "bundle.json"
    bundle.save(bundle_path)
    write_json(
        out / "diffusion_log.json",
        {"provenance": _provenance("train-diff", config, args.seed), "epochs": log},
    )
    print(
        f"trained denoiser: base {log[0]['base']:.4f} -> {log[-1]['base']:.4f}; wrote {bundle_path}"
    )
    _manifest_line(
        out, "train-diff", config, args.seed, {"data": data_dir, "vae": vae_path},
        [bundle_path, out / "diffusion_log.json"], started, args.set,
    )
    return EXIT_OK


def cmd_generate(args, config: RunConfig) -> int:
    started = time.monotonic()
    bundle_path = _require(args.bundle, "generator bundle", "train-diff")
    conds_dir = _require(args.conds_from, "conditioning dataset", "split")
    bundle = GeneratorBundle.load(bundle_path)
    source = load_cohort(conds_dir)
    rng = RngStream(args.seed).child("generate")
    cohort = generate(bundle, source.conditions_with_outcomes(), rng)
    cohort.meta.provenance = _provenance("generate", config, args.seed)
    out = Path(args.out)
    save_cohort(cohort, out)
    print(f"generated {len(cohort)} synthetic records -> {out}")
    _manifest_line(
        out, "generate", config, args.seed,
        {"bundle": bundle_path, "conds_from": conds_dir},
        [out / "records.ndjson"], started, args.set,
    )
    return EXIT_OK


def cmd_eval_utility(args, config: RunConfig) -> int:
    started = time.monotonic()
    bundle_path = _require(args.bundle, "generator bundle", "train-diff")
    bundle = GeneratorBundle.load(bundle_path)
    train, holdout, holdout_val = _load_split_dirs(args)
    rng = RngStream(args.seed).child("eval-utility")
    report, _ = utility_report(bundle, train, holdout, holdout_val, config.protocol(), rng)
    _stamp_report(report, config)
    out = Path(args.out)
    write_json(out / "utility_report.json", report)
    print(
        f"utility: delta_TSTR {report['delta_tstr']['value']:.4f}, "
        f"delta_TRTS {report['delta_trts']['value']:.4f} -> {out / 'utility_report.json'}"
    )
    _manifest_line(
        out, "eval-utility", config, args.seed,
        {"bundle": bundle_path, "train": Path(args.train), "holdout": Path(args.holdout),
         "holdout_val": Path(args.holdout_val)},
        [out / "utility_report.json"], started, args.set,
    )
    return EXIT_OK


def cmd_eval_fidelity(args, config: RunConfig) -> int:
    started = time.monotonic()
    real_dir = _require(args.real, "real dataset", "split")
    synth_dir = _require(args.synth, "synthetic dataset", "generate")
    real = load_cohort(real_dir)
    synth = load_cohort(synth_dir)
    rng = RngStream(args.seed).child("eval-fidelity")
    report = fidelity_eval(real, synth, config.protocol(), rng)
    _stamp_report(report, config)
    out = Path(args.out)
    write_json(out / "fidelity_report.json", report)
    print(f"fidelity: DiscAUC {report['disc_auc']['mean']:.4f} -> {out / 'fidelity_report.json'}")
    _manifest_line(
        out, "eval-fidelity", config, args.seed,
        {"real": real_dir, "synth": synth_dir},
        [out / "fidelity_report.json"], started, args.set,
    )
    return EXIT_OK


def cmd_eval_subgroups(args, config: RunConfig) -> int:
    started = time.monotonic()
    bundle_path = _require(args.bundle, "generator bundle", "train-diff")
    bundle = GeneratorBundle.load(bundle_path)
    train, holdout, holdout_val = _load_split_dirs(args)
    rng = RngStream(args.seed).child("eval-subgroups")
    protocol = config.protocol()
    _, models = evaluation_utility(
        bundle, train, holdout, holdout_val, protocol, rng.child("models")
    )
    report = subgroup_eval(models, train, bundle, protocol, rng.child("subgroups"))
    _stamp_report(report, config)
    out = Path(args.out)
    write_json(out / "subgroup_report.json", report)
    agg = report["aggregates"]
    frac = agg["fraction_synth_wins"]
    print(
        f"subgroups: synthetic wins {agg['wins']}/{32 - agg['n_skipped']}"
        + (f" ({100 * frac:.0f}%)" if frac is not None else "")
        + f", skipped {agg['n_skipped']} -> {out / 'subgroup_report.json'}"
    )
    _manifest_line(
        out, "eval-subgroups", config, args.seed,
        {"bundle": bundle_path, "train": Path(args.train), "holdout": Path(args.holdout),
         "holdout_val": Path(args.holdout_val)},
        [out / "subgroup_report.json"], started, args.set,
    )
    return EXIT_OK


def cmd_sweep_weights(args, config: RunConfig) -> int:
    started = time.monotonic()
    train, holdout, holdout_val = _load_split_dirs(args)
    grid_ref = config.raw["sweep"]["grid"]
    grid = default_weight_grid() if grid_ref == "default" else grid_ref
    if not isinstance(grid, list):
        raise ConfigError("sweep.grid must be 'default' or a list of weight dicts")
    rng = RngStream(args.seed).child("sweep-weights")
    report = weight_sweep(
        train, holdout, holdout_val, config.generator_config(), grid, config.protocol(), rng,
        max_workers=args.workers,
    )
    _stamp_report(report, config)
    out = Path(args.out)
    write_json(out / "sweep_report.json", report)
    best = next((e for e in report["ranked"] if "error" not in e), None)
    if best is not None:
        print(
            f"sweep: best weights {best['weights']} "
            f"(delta_TRTS {best['delta_trts']:.4f}) -> {out / 'sweep_report.json'}"
        )
    else:
        print(f"sweep: all {len(grid)} configurations failed -> {out / 'sweep_report.json'}")
    _manifest_line(
        out, "sweep-weights", config, args.seed,
        {"train": Path(args.train), "holdout": Path(args.holdout),
         "holdout_val": Path(args.holdout_val)},
        [out / "sweep_report.json"], started, args.set,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------


def _fmt_ci(block: dict) -> str:
    return f"{block['mean']:.4f} [{block['lo']:.4f}, {block['hi']:.4f}]"


def _render_utility(report: dict, rows: list[list]) -> None:
    print(f"task: {report['task']}   (utility; seed {report['seed']})")
    print(f"{'metric':<14}{'value':<10}{'paired-diff 95% CI':<30}{'runs'}")
    for name in ("delta_tstr", "delta_trts"):
        block = report[name]
        ci = block["paired_diff_ci"]
        print(f"{name:<14}{block['value']:<10.4f}{_fmt_ci(ci):<30}{ci['n_runs']}")
        rows.append(
            ["utility", report["task"], name, block["value"], ci["lo"], ci["hi"], ci["n_runs"]]
        )


def _render_subgroup(report: dict, rows: list[list]) -> None:
    agg = report["aggregates"]
    active = 32 - agg["n_skipped"]
    print(f"task: {report['task']}   (subgroups; seed {report['seed']})")
    print(
        f"mean eps: naive {agg['mean_eps_naive']:.4f} vs synthetic {agg['mean_eps_synth']:.4f}"
        if agg["mean_eps_naive"] is not None
        else "no evaluable subgroups"
    )
    if agg["fraction_synth_wins"] is not None:
        print(
            f"% subgroups where synthetic error < test error: "
            f"{100 * agg['fraction_synth_wins']:.0f}% "
            f"({agg['wins']}/{active}; paired-majority "
            f"{100 * agg['fraction_synth_wins_paired_majority']:.0f}%)"
        )
    print(f"wins {agg['wins']} / losses {agg['losses']} / ties {agg['ties']} / skipped {agg['n_skipped']}")
    for entry in report["subgroups"]:
        key = "|".join(entry["group"])
        if entry["skipped"]:
            rows.append(["subgroup", report["task"], key, None, None, None, "skipped"])
        else:
            rows.append(
                [
                    "subgroup",
                    report["task"],
                    key,
                    entry["eps_naive"]["mean"],
                    entry["eps_synth"]["mean"],
                    entry["n_valid_seeds"],
                    "win" if entry["eps_synth"]["mean"] < entry["eps_naive"]["mean"] else "loss",
                ]
            )


def _render_fidelity(report: dict, rows: list[list]) -> None:
    block = report["disc_auc"]
    print(f"task: {report['task']}   (fidelity; seed {report['seed']})")
    print(f"DiscAUC {_fmt_ci(block)} over {block['n_runs']} discriminator seeds")
    rows.append(
        ["fidelity", report["task"], "disc_auc", block["mean"], block["lo"], block["hi"], block["n_runs"]]
    )


def _render_sweep(report: dict, rows: list[list]) -> None:
    print(f"task: {report['task']}   (weight sweep; seed {report['seed']})")
    print(f"{'rank':<6}{'weights (vae_mmd, vae_cons, diff_mmd, diff_cons)':<52}{'d_TRTS':<10}{'d_TSTR'}")
    for rank, entry in enumerate(report["ranked"]):
        w = entry["weights"]
        weights_txt = (
            f"({w['vae_mmd']:.1f}, {w['vae_consistency']:.1f}, "
            f"{w['diff_mmd']:.1f}, {w['diff_consistency']:.1f})"
        )
        if "error" in entry:
            print(f"{rank:<6}{weights_txt:<52}failed: {entry['error']}")
            rows.append(["sweep", report["task"], weights_txt, None, None, None, entry["error"]])
        else:
            print(f"{rank:<6}{weights_txt:<52}{entry['delta_trts']:<10.4f}{entry['delta_tstr']:.4f}")
            rows.append(
                ["sweep", report["task"], weights_txt, entry["delta_trts"], entry["delta_tstr"],
                 None, "ok"]
            )


def cmd_report(args, config: RunConfig) -> int:
    started = time.monotonic()
    reports = []
    for path in args.reports:
        path = _require(Path(path), "report file", "eval-utility / eval-subgroups / eval-fidelity")
        report = read_json(path)
        problems = verify_report_consistency(report)
        if problems:
            raise ConfigError(f"{path}: report fails self-consistency: {problems}")
        reports.append((Path(path), report))
    hashes = {
        r.get("classifier_config_hash")
        for _, r in reports
        if r.get("classifier_config_hash") is not None
    }
    if len(hashes) > 1:
        raise ConfigError(
            "refusing to aggregate reports with mismatched downstream-classifier "
            f"config hashes: {sorted(hashes)}"
        )
    rows: list[list] = []
    renderers = {
        "utility": _render_utility,
        "subgroup": _render_subgroup,
        "fidelity": _render_fidelity,
        "sweep": _render_sweep,
    }
    for path, report in reports:
        print(f"== {path}")
        kind = report.get("kind")
        if kind not in renderers:
            raise ConfigError(f"{path}: unknown report kind {kind!r}")
        renderers[kind](report, rows)
        print()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "summary.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "task", "item", "value_a", "value_b", "value_c", "note"])
        writer.writerows(rows)
    print(f"wrote {csv_path}")
    _manifest_line(
        out, "report", config, args.seed,
        {str(i): p for i, (p, _) in enumerate(reports)}, [csv_path], started, args.set,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    sub.add_argument("--seed", type=int, required=True, help="root seed for this command")
    sub.add_argument("--out", type=Path, required=True, help="output directory")
    sub.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted-key config override, e.g. weights.vae_mmd=0.5 (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icusynth",
        description=(
            "Synthetic ICU time-series generation (recurrent beta-VAE + conditional "
            "latent diffusion) and evaluation (utility gaps, fidelity, subgroup errors)."
        ),
    )
    parser.add_argument("--version", action="version", version=f"icusynth {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-toy", help="generate the toy ground-truth cohort")
    _add_common(p)
    p.set_defaults(func=cmd_gen_toy)

    p = subs.add_parser("split", help="stratified 45/45/10 split of a dataset")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.set_defaults(func=cmd_split)

    p = subs.add_parser("train-vae", help="phase 1: train the sequence VAE")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="training split directory")
    p.set_defaults(func=cmd_train_vae)

    p = subs.add_parser("train-diff", help="phase 2: train the latent denoiser")
    _add_common(p)
    p.add_argument("--data", type=Path, required=True, help="training split directory")
    p.add_argument("--vae", type=Path, required=True, help="VAE checkpoint from train-vae")
    p.set_defaults(func=cmd_train_diff)

    p = subs.add_parser("generate", help="sample a synthetic cohort from a bundle")
    _add_common(p)
    p.add_argument("--bundle", type=Path, required=True, help="generator bundle file")
    p.add_argument(
        "--conds-from", type=Path, required=True,
        help="dataset whose (condition, outcome) list the synthetic cohort copies",
    )
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("eval-utility", help="training- and evaluation-utility workflows")
    _add_common(p)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--holdout", type=Path, required=True)
    p.add_argument("--holdout-val", dest="holdout_val", type=Path, required=True)
    p.set_defaults(func=cmd_eval_utility)

    p = subs.add_parser("eval-fidelity", help="discriminative fidelity score")
    _add_common(p)
    p.add_argument("--real", type=Path, required=True)
    p.add_argument("--synth", type=Path, required=True)
    p.set_defaults(func=cmd_eval_fidelity)

    p = subs.add_parser("eval-subgroups", help="32-subgroup estimation-error evaluation")
    _add_common(p)
    p.add_argument("--bundle", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--holdout", type=Path, required=True)
    p.add_argument("--holdout-val", dest="holdout_val", type=Path, required=True)
    p.set_defaults(func=cmd_eval_subgroups)

    p = subs.add_parser("sweep-weights", help="9-point alignment-weight sweep")
    _add_common(p)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--holdout", type=Path, required=True)
    p.add_argument("--holdout-val", dest="holdout_val", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1, help="concurrent sweep workers")
    p.set_defaults(func=cmd_sweep_weights)

    p = subs.add_parser("report", help="render report JSONs to tables + summary.csv")
    _add_common(p)
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.set_defaults(func=cmd_report)

    return parser


_ERROR_CODES: list[tuple[type, int]] = [
    (PrerequisiteError, EXIT_PREREQUISITE),
    (UndefinedMetricError, EXIT_UNDEFINED_METRIC),
    (RareConditionError, EXIT_NUMERIC),
    (NumericError, EXIT_NUMERIC),
    (ConfigError, EXIT_CONFIG),
    (InputError, EXIT_CONFIG),
]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.load(args.config, args.set)
        return args.func(args, config)
    except Exception as err:  # noqa: BLE001 - mapped to documented exit codes
        for exc_type, code in _ERROR_CODES:
            if isinstance(err, exc_type):
                print(
                    json.dumps(
                        {"error": type(err).__name__, "exit_code": code, "message": str(err)}
                    ),
                    file=sys.stderr,
                )
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
