"""Command-line surface for batch experiments.

Conventions shared by every subcommand:

* the resolved full configuration is echoed as one `resolved-config:` JSON
  line before work starts, so any run can be reproduced from its log
* flags override config-file values, which override defaults
* human-readable output goes to stdout; machine output (JSON, CSV, binary
  artifacts) is only ever written to explicitly flagged paths
* exit 0 on success, 1 on usage/configuration errors, 2 on data or
  numerical errors
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .embedstore import read_dataset, validate_dataset
from .errors import ConfigError, PromptGeoError
from .grad import run_gradcheck
from .regions import SoftmaxConfig
from .scoring import as_scored_samples, score_dataset, write_scores_csv
from .synth import SynthConfig, generate, write_synth
from .trainer import (
    TrainConfig,
    build_encoder,
    config_meta,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _load_config_file(path, allowed: set[str]) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config file keys: {sorted(unknown)}")
    return data


def _resolve(defaults: dict, config_path, flag_values: dict) -> dict:
    """defaults < config file < explicit flags (None means flag unset)."""
    merged = dict(defaults)
    if config_path is not None:
        merged.update(_load_config_file(config_path, set(defaults)))
    for key, val in flag_values.items():
        if val is not None:
            merged[key] = val
    return merged


def _echo(command: str, cfg: dict) -> None:
    print(f"resolved-config: {json.dumps({'command': command, **cfg}, sort_keys=True)}")


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--encoder-seed", type=int, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--lambda3", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--rank-c", type=int, default=None, dest="rank_c")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--prompts", type=int, default=None, metavar="M")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--init-std", type=float, default=None)
    p.add_argument("--modulation", choices=["sct", "none"], default=None)
    p.add_argument("--encoder", choices=["surrogate", "frozen"], default=None)
    p.add_argument("--frozen-text", default=None, metavar="PATH")
    p.add_argument("--shots", type=int, default=None)


_TRAIN_DEFAULTS = {
    **{f.name: f.default for f in dataclasses.fields(TrainConfig)},
    "encoder": "surrogate",
    "frozen_text": None,
}

_FLAG_TO_KEY = {
    "prompts": "M",
    "rank_c": "C",
}


def _train_merged(args) -> dict:
    flags = {}
    for flag in (
        "seed", "encoder_seed", "lambda1", "lambda2", "lambda3", "tau", "rank_c",
        "epsilon", "prompts", "lr", "batch_size", "epochs", "weight_decay",
        "init_std", "modulation", "encoder", "frozen_text", "shots",
    ):
        flags[_FLAG_TO_KEY.get(flag, flag)] = getattr(args, flag)
    return _resolve(_TRAIN_DEFAULTS, args.config, flags)


def _encoder_from_merged(ds, merged: dict):
    cfg_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in merged.items() if k in cfg_fields})
    if merged["encoder"] == "frozen":
        if not merged.get("frozen_text"):
            raise ConfigError("--encoder frozen needs --frozen-text PATH")
        return cfg, build_encoder(ds, cfg, frozen_text_path=merged["frozen_text"])
    return cfg, build_encoder(ds, cfg)


def _cmd_train(args) -> int:
    merged = _train_merged(args)
    _echo("train", {**merged, "data": args.data, "checkpoint": args.checkpoint})
    ds = read_dataset(args.data)
    cfg, enc = _encoder_from_merged(ds, merged)
    result = train(
        ds, cfg, enc,
        on_epoch=lambda row: print(
            f"epoch {row['epoch']:4d}  total {row['total']:.6f}  ce {row['ce']:.6f}"
        ),
    )
    meta = config_meta(cfg, {
        "encoder": merged["encoder"],
        "frozen_text": merged.get("frozen_text"),
        "data": str(args.data),
    })
    save_checkpoint(args.checkpoint, result.pm, meta, result.history)
    print(f"checkpoint written: {args.checkpoint}")
    return 0


def _rebuild_encoder_for_scoring(args, meta: dict, ds):
    merged = dict(meta) if meta else {}
    if getattr(args, "encoder", None):
        merged["encoder"] = args.encoder
    if getattr(args, "frozen_text", None):
        merged["frozen_text"] = args.frozen_text
    if getattr(args, "seed", None) is not None:
        merged["seed"] = args.seed
    merged.setdefault("encoder", "surrogate")
    merged.setdefault("seed", 0)
    cfg_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    cfg_kwargs = {k: v for k, v in merged.items() if k in cfg_fields}
    cfg = TrainConfig(**cfg_kwargs)
    if merged["encoder"] == "frozen":
        if not merged.get("frozen_text"):
            raise ConfigError(
                "checkpoint was trained with frozen text features; pass --frozen-text"
            )
        enc = build_encoder(ds, cfg, frozen_text_path=merged["frozen_text"])
    else:
        enc = build_encoder(ds, cfg)
    tau = args.tau if args.tau is not None else merged.get("tau", 0.01)
    C = args.rank_c if args.rank_c is not None else merged.get("C")
    return enc, SoftmaxConfig(tau=tau, C=C)


def _cmd_eval(args) -> int:
    _echo("eval", {
        "checkpoint": args.checkpoint, "id_test": args.id_test,
        "ood_test": args.ood_test, "out": args.out, "method": args.method,
        "tau": args.tau, "C": args.rank_c,
    })
    pm, meta = load_checkpoint(args.checkpoint)
    id_ds = read_dataset(args.id_test)
    ood_ds = read_dataset(args.ood_test)
    enc, scfg = _rebuild_encoder_for_scoring(args, meta, id_ds)
    outs = evaluate(pm, enc, id_ds, ood_ds, scfg, method=args.method)
    print(outs.report.format_table())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(outs.report.to_json())
            fh.write("\n")
        print(f"report written: {args.out}")
    return 0


def _cmd_score(args) -> int:
    _echo("score", {
        "checkpoint": args.checkpoint, "data": args.data, "out": args.out,
        "method": args.method, "source": args.source,
        "tau": args.tau, "C": args.rank_c,
    })
    pm, meta = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    enc, scfg = _rebuild_encoder_for_scoring(args, meta, ds)
    scores, predicted = score_dataset(ds, pm, enc, scfg, method=args.method)
    write_scores_csv(args.out, as_scored_samples(scores, predicted, args.source))
    print(f"scored {len(scores)} samples -> {args.out}")
    return 0


_SYNTH_DEFAULTS = {f.name: f.default for f in dataclasses.fields(SynthConfig)}


def _cmd_synth(args) -> int:
    flags = {
        "D": args.dim, "K": args.classes, "M_star": args.planted_dim,
        "n_train_per_class": args.per_class, "n_id_test": args.id_test_count,
        "n_ood_test": args.ood_test_count, "H_loc": args.h_loc,
        "W_map": args.w_map, "noise_sigma": args.noise_sigma,
        "ood_leak": args.ood_leak, "seed": args.seed,
    }
    merged = _resolve(_SYNTH_DEFAULTS, args.config, flags)
    _echo("synth", {**merged, "out": args.out})
    result = generate(SynthConfig(**merged))
    paths = write_synth(result, args.out)
    for key in ("train", "id_test", "ood_test", "truth", "manifest"):
        print(f"{key}: {paths[key]}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = {"seed": args.seed, "seeds": args.seeds, "step": args.step, "tol": args.tol}
    _echo("gradcheck", cfg)
    rows = run_gradcheck(
        seeds=range(args.seed, args.seed + args.seeds), h=args.step, tol=args.tol
    )
    worst = 0.0
    all_ok = True
    for row in rows:
        status = "ok" if row["ok"] else "FAIL"
        print(
            f"{row['config']:<14s} seed {row['seed']:<4d} "
            f"max_rel_error {row['max_rel_error']:.3e}  {status}"
        )
        worst = max(worst, row["max_rel_error"])
        all_ok = all_ok and row["ok"]
    print(f"worst max_rel_error {worst:.3e} over {len(rows)} runs (tol {args.tol:g})")
    return 0 if all_ok else 2


def _cmd_inspect(args) -> int:
    _echo("inspect", {"data": args.data})
    ds = read_dataset(args.data, validate=False)
    h = ds.header
    print(f"version        {h.version}")
    print(f"D              {h.D}")
    print(f"K              {h.K}")
    print(f"H_loc x W_map  {h.H_loc} x {h.W_map}")
    print(f"N              {h.N}")
    print(f"flags          {h.flags} (locals={h.has_locals}, pre_normalized={h.pre_normalized})")
    report = validate_dataset(ds)
    if report.ok:
        print("validation     ok (0 violations)")
        return 0
    print(f"validation     {len(report.violations)} violation(s)")
    for v in report.violations:
        print(f"  - {v}")
    return 2


def build_parser() -> _Parser:
    parser = _Parser(prog="promptgeo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the planted-subspace benchmark")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--config", default=None, metavar="JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--planted-dim", type=int, default=None)
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--id-test-count", type=int, default=None)
    p.add_argument("--ood-test-count", type=int, default=None)
    p.add_argument("--h-loc", type=int, default=None)
    p.add_argument("--w-map", type=int, default=None)
    p.add_argument("--noise-sigma", type=float, default=None)
    p.add_argument("--ood-leak", type=float, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit the prompt matrix on a training file")
    p.add_argument("--data", required=True, metavar="SBCP")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--config", default=None, metavar="JSON")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="detection metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--id-test", required=True, metavar="SBCP")
    p.add_argument("--ood-test", required=True, metavar="SBCP")
    p.add_argument("--out", default=None, metavar="JSON")
    p.add_argument("--method", choices=["mcm", "glmcm"], default="glmcm")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--rank-c", type=int, default=None, dest="rank_c")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--encoder", choices=["surrogate", "frozen"], default=None)
    p.add_argument("--frozen-text", default=None, metavar="PATH")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("score", help="per-sample scores as CSV")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="SBCP")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--source", default="id")
    p.add_argument("--method", choices=["mcm", "glmcm"], default="glmcm")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--rank-c", type=int, default=None, dest="rank_c")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--encoder", choices=["surrogate", "frozen"], default=None)
    p.add_argument("--frozen-text", default=None, metavar="PATH")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("gradcheck", help="finite-difference audit of the loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=3, help="number of consecutive seeds")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("inspect", help="print an .sbcp header and validation report")
    p.add_argument("--data", required=True, metavar="SBCP")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PromptGeoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
