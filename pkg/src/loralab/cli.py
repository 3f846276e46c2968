"""Command-line entry point.

Commands cover the whole experiment pipeline: pretraining, corpus export,
per-emotion adapter training, rank/scheme sweeps, the fine-tune
comparison, hot-swap synthesis, and evaluation. Every command resolves a
full config snapshot and writes it to a manifest before any training
starts; `rerun` replays a manifest and reproduces the output bytes.

Exit codes: 0 success, 2 config/usage error, 3 training failure,
4 artifact incompatibility.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import adapterio, reports, schemes, trainer
from .emotions import EMOTIONS, NON_NEUTRAL, gen_corpus, classify_distribution
from .errors import (
    CompatError,
    ConfigError,
    FormatError,
    InputError,
    NumericError,
    StateError,
    TrainingError,
)
from .rng import RngState
from .synthesizer import ModelConfig, Synthesizer
from .trainer import TrainConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_INCOMPATIBLE = 4

# config file keys and their defaults; unknown keys are rejected
CONFIG_DEFAULTS: dict[str, object] = {
    "vocab": 64,
    "hidden": 32,
    "out_dim": 16,
    "flow_layers": 2,
    "kernel": 3,
    "max_duration": 4.0,
    "corpus_utts": 200,
    "min_tokens": 4,
    "max_tokens": 8,
    "lr": 1e-3,
    "steps": 2000,
    "batch": 8,
    "lambda_out": 1.0,
    "lambda_dur": 1.0,
}


def parse_config(path: str | None) -> dict:
    """Read a `key = value` file ('#' comments); missing keys take defaults."""
    resolved = dict(CONFIG_DEFAULTS)
    if path is None:
        return resolved
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"{p}:{lineno}: unknown config key {key!r}")
        kind = type(CONFIG_DEFAULTS[key])
        try:
            resolved[key] = kind(value)
        except ValueError:
            raise ConfigError(f"{p}:{lineno}: bad value for {key}: {value!r}") from None
    return resolved


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        vocab=cfg["vocab"], hidden=cfg["hidden"], out_dim=cfg["out_dim"],
        flow_layers=cfg["flow_layers"], kernel=cfg["kernel"],
        max_duration=cfg["max_duration"],
    ).validate()


def train_config(cfg: dict, seed: int, steps: int | None = None, lr: float | None = None) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"] if lr is None else lr,
        steps=cfg["steps"] if steps is None else steps,
        batch=cfg["batch"], seed=seed,
        lambda_out=cfg["lambda_out"], lambda_dur=cfg["lambda_dur"],
    ).validate()


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def write_manifest(out_dir: Path, command: str, seed: int, cfg: dict, args: dict) -> Path:
    """Record the resolved run inputs before any training output exists.

    The file is named after the command so that commands sharing an output
    directory never clobber each other's manifests."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command = {command}", f"seed = {seed}", f"out = {out_dir}"]
    for key in sorted(args):
        if args[key] is not None:
            lines.append(f"arg.{key} = {args[key]}")
    for key in sorted(cfg):
        lines.append(f"cfg.{key} = {cfg[key]!r}")
    path = out_dir / f"manifest_{command.replace('-', '_')}.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path: str) -> tuple[str, int, dict, dict]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"manifest not found: {p}")
    command, seed, out, cfg, args = None, None, None, {}, {}
    for raw in p.read_text().splitlines():
        if "=" not in raw:
            continue
        key, value = (part.strip() for part in raw.split("=", 1))
        if key == "command":
            command = value
        elif key == "seed":
            seed = int(value)
        elif key == "out":
            out = value
        elif key.startswith("cfg."):
            name = key[4:]
            kind = type(CONFIG_DEFAULTS[name])
            cfg[name] = kind(value.strip("'\""))
        elif key.startswith("arg."):
            args[key[4:]] = value
    if command is None or seed is None or out is None:
        raise ConfigError(f"manifest {p} is missing command/seed/out")
    args["out"] = out
    return command, seed, cfg, args


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_pretrain(cfg: dict, seed: int, out: str, config_path: str | None = None) -> int:
    out_dir = Path(out)
    write_manifest(out_dir, "pretrain", seed, cfg, {"config": config_path})
    model = Synthesizer(model_config(cfg), RngState(seed))
    teacher = trainer.make_pretrain_corpus(
        model.config, n_utts=cfg["corpus_utts"],
        len_range=(cfg["min_tokens"], cfg["max_tokens"]), seed=seed,
    )
    curve = trainer.pretrain_base(model, teacher, train_config(cfg, seed))
    adapterio.save_base(model, out_dir / "base.eela")
    reports.write_csv(out_dir / "loss_curve.csv", ["step", "loss"],
                      [[i, repr(v)] for i, v in enumerate(curve)])
    print(f"pretrained base -> {out_dir / 'base.eela'} "
          f"(checksum {model.base_checksum():#010x})")
    return EXIT_OK


def cmd_gen_corpus(cfg: dict, seed: int, out: str, base: str) -> int:
    out_dir = Path(out)
    write_manifest(out_dir, "gen-corpus", seed, cfg, {"base": base})
    model = adapterio.load_base(base)
    corpus = gen_corpus(
        model, n_utts=cfg["corpus_utts"],
        len_range=(cfg["min_tokens"], cfg["max_tokens"]), seed=seed,
    )
    adapterio.save_corpus(corpus, out_dir / "corpus.eela")
    print(f"corpus ({len(corpus.train_idx)} train / {len(corpus.test_idx)} test) "
          f"-> {out_dir / 'corpus.eela'}")
    return EXIT_OK


def _load_pair(base: str, corpus_path: str):
    model = adapterio.load_base(base)
    corpus = adapterio.load_corpus(corpus_path)
    if corpus.base_checksum != model.base_checksum():
        raise CompatError(
            f"corpus was generated from base {corpus.base_checksum:#010x}, "
            f"checkpoint is {model.base_checksum():#010x}"
        )
    return model, corpus


def cmd_train_adapter(cfg: dict, seed: int, out: str, base: str, corpus: str,
                      scheme: str, emotion: str, rank: int, alpha: float | None,
                      steps: int | None) -> int:
    schemes.modules_of(scheme)  # reject unknown ids before loading anything
    if emotion not in NON_NEUTRAL:
        raise ConfigError(f"emotion must be one of {NON_NEUTRAL}, got {emotion!r}")
    out_dir = Path(out)
    write_manifest(out_dir, "train-adapter", seed, cfg, {
        "base": base, "corpus": corpus, "scheme": scheme, "emotion": emotion,
        "rank": rank, "alpha": alpha, "steps": steps,
    })
    model, corp = _load_pair(base, corpus)
    bundle, report = trainer.train_adapter(
        model, scheme, emotion, corp, rank, alpha, train_config(cfg, seed, steps)
    )
    bundle_path = out_dir / f"{emotion}_{scheme}_r{rank}.eela"
    adapterio.save_bundle(bundle, bundle_path)
    reports.write_csv(out_dir / "report.csv", trainer.RunReport.csv_header(),
                      [report.csv_row()])
    print(f"bundle -> {bundle_path} "
          f"(match_{emotion} = {report.match_rates[emotion]:.6f}, "
          f"{report.trainable_params} trainable params, {report.wall_time:.2f}s)")
    return EXIT_OK


def cmd_sweep(cfg: dict, seed: int, out: str, base: str, corpus: str,
              mode: str, steps: int | None) -> int:
    if mode not in ("rank", "scheme"):
        raise ConfigError(f"sweep mode must be 'rank' or 'scheme', got {mode!r}")
    out_dir = Path(out)
    write_manifest(out_dir, "sweep", seed, cfg,
                   {"base": base, "corpus": corpus, "mode": mode, "steps": steps})
    model, corp = _load_pair(base, corpus)
    tcfg = train_config(cfg, seed, steps)
    emotions_rows = [e.capitalize() for e in NON_NEUTRAL]

    if mode == "rank":
        ranks = (2, 4, 8, 16)
        table = []
        all_reports = []
        for emo, row_name in zip(NON_NEUTRAL, emotions_rows):
            reps = trainer.rank_sweep(model, "g", emo, corp, ranks, tcfg)
            all_reports.extend(reps)
            table.append([row_name] + [repr(rep.match_rates[emo]) for rep in reps])
        header = ["emotion"] + [f"r={r}" for r in ranks]
        reports.write_table(out_dir / "rank_table", header, table)
    else:
        table = []
        all_reports = []
        for emo, row_name in zip(NON_NEUTRAL, emotions_rows):
            reps = trainer.scheme_sweep(model, emo, corp, r=4, cfg=tcfg)
            all_reports.extend(reps)
            table.append([row_name] + [repr(rep.match_rates[emo]) for rep in reps])
        header = ["emotion", "tts", *schemes.SCHEME_IDS]
        reports.write_table(out_dir / "scheme_table", header, table)

    reports.write_csv(out_dir / "run_reports.csv", trainer.RunReport.csv_header(),
                      [rep.csv_row() for rep in all_reports])
    print((out_dir / f"{mode}_table.txt").read_text(), end="")
    return EXIT_OK


def cmd_compare_finetune(cfg: dict, seed: int, out: str, base: str, corpus: str,
                         rank: int, steps: int | None) -> int:
    out_dir = Path(out)
    write_manifest(out_dir, "compare-finetune", seed, cfg,
                   {"base": base, "corpus": corpus, "rank": rank, "steps": steps})
    model, corp = _load_pair(base, corpus)
    tcfg = train_config(cfg, seed, steps)
    table = []
    all_reports = []
    for emo in NON_NEUTRAL:
        _, rep_g = trainer.train_adapter(model, "g", emo, corp, rank, None, tcfg)
        _, rep_ft = trainer.fine_tune_full(model, emo, corp, tcfg)
        all_reports.extend([rep_g, rep_ft])
        table.append([emo.capitalize(),
                      repr(rep_g.match_rates[emo]), repr(rep_ft.match_rates[emo])])
    reports.write_table(out_dir / "compare_table", ["emotion", "g", "fine-tune"], table)
    reports.write_csv(out_dir / "run_reports.csv", trainer.RunReport.csv_header(),
                      [rep.csv_row() for rep in all_reports])
    print((out_dir / "compare_table.txt").read_text(), end="")
    return EXIT_OK


def cmd_synth(base: str, adapter: str | None, tokens: str, out: str) -> int:
    model = adapterio.load_base(base)
    registry = adapterio.AdapterRegistry()
    if adapter is not None:
        bundle = adapterio.load_bundle(adapter)
        registry.register(bundle)
        registry.swap(model, bundle.name)
    try:
        ids = np.array([int(t) for t in tokens.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"--tokens must be integers, got {tokens!r}") from None
    synth = model.forward(ids, mode="deterministic")
    adapterio.save_synth(synth, ids, model.base_checksum(), out)
    print(f"synthesized {synth.output.shape[0]} frames -> {out}")
    return EXIT_OK


def cmd_eval(base: str, adapter: str | None, corpus: str) -> int:
    model = adapterio.load_base(base)
    corp = adapterio.load_corpus(corpus)
    if corp.base_checksum != model.base_checksum():
        raise CompatError("corpus does not match this base checkpoint")
    label = "neutral"
    if adapter is not None:
        bundle = adapterio.load_bundle(adapter)
        registry = adapterio.AdapterRegistry()
        registry.register(bundle)
        registry.swap(model, bundle.name)
        label = bundle.name
    dist = classify_distribution(model, corp.test, corp.max_duration)
    for emo in EMOTIONS:
        print(f"match_{emo} = {dist[emo]!r}")
    print(f"match_rate[{label}] = {dist[label]!r}")
    return EXIT_OK


def cmd_rerun(manifest: str) -> int:
    command, seed, cfg, args = read_manifest(manifest)
    full = dict(CONFIG_DEFAULTS)
    full.update(cfg)
    get = args.get
    if command == "pretrain":
        return cmd_pretrain(full, seed, args["out"], get("config"))
    if command == "gen-corpus":
        return cmd_gen_corpus(full, seed, args["out"], args["base"])
    if command == "train-adapter":
        steps = get("steps")
        alpha = get("alpha")
        return cmd_train_adapter(
            full, seed, args["out"], args["base"], args["corpus"], args["scheme"],
            args["emotion"], int(args["rank"]),
            None if alpha in (None, "None") else float(alpha),
            None if steps in (None, "None") else int(steps),
        )
    if command == "sweep":
        steps = get("steps")
        return cmd_sweep(full, seed, args["out"], args["base"], args["corpus"],
                         args["mode"], None if steps in (None, "None") else int(steps))
    if command == "compare-finetune":
        steps = get("steps")
        return cmd_compare_finetune(
            full, seed, args["out"], args["base"], args["corpus"],
            int(args["rank"]), None if steps in (None, "None") else int(steps),
        )
    raise ConfigError(f"manifest command {command!r} cannot be rerun")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loralab",
        description="train, place, sweep, and hot-swap low-rank adapter bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if corpus:
            p.add_argument("--base", required=True, help="BASE checkpoint (.eela)")
            p.add_argument("--corpus", required=True, help="CORP corpus file (.eela)")

    p = sub.add_parser("pretrain", help="train the neutral base model")
    common(p)

    p = sub.add_parser("gen-corpus", help="export the emotion corpus for a base")
    common(p)
    p.add_argument("--base", required=True)

    p = sub.add_parser("train-adapter", help="train one per-emotion bundle")
    common(p, corpus=True)
    p.add_argument("--scheme", required=True, help="placement scheme id (a-h)")
    p.add_argument("--emotion", required=True, help="angry|happy|sad|surprise")
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("sweep", help="rank or scheme sweep tables")
    common(p, corpus=True)
    p.add_argument("--mode", required=True, choices=["rank", "scheme"])
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("compare-finetune", help="scheme-g vs full fine-tuning")
    common(p, corpus=True)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("synth", help="run one utterance through the model")
    p.add_argument("--base", required=True)
    p.add_argument("--adapter", default=None)
    p.add_argument("--tokens", required=True, help="comma/space separated token ids")
    p.add_argument("--out", required=True, help="output file (.eela)")

    p = sub.add_parser("eval", help="match rates of a base (+ optional adapter)")
    p.add_argument("--base", required=True)
    p.add_argument("--adapter", default=None)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("rerun", help="replay a recorded manifest")
    p.add_argument("--manifest", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pretrain":
            cfg = parse_config(args.config)
            return cmd_pretrain(cfg, args.seed, args.out, args.config)
        if args.command == "gen-corpus":
            cfg = parse_config(args.config)
            return cmd_gen_corpus(cfg, args.seed, args.out, args.base)
        if args.command == "train-adapter":
            cfg = parse_config(args.config)
            return cmd_train_adapter(cfg, args.seed, args.out, args.base, args.corpus,
                                     args.scheme, args.emotion, args.rank, args.alpha,
                                     args.steps)
        if args.command == "sweep":
            cfg = parse_config(args.config)
            return cmd_sweep(cfg, args.seed, args.out, args.base, args.corpus,
                             args.mode, args.steps)
        if args.command == "compare-finetune":
            cfg = parse_config(args.config)
            return cmd_compare_finetune(cfg, args.seed, args.out, args.base,
                                        args.corpus, args.rank, args.steps)
        if args.command == "synth":
            return cmd_synth(args.base, args.adapter, args.tokens, args.out)
        if args.command == "eval":
            return cmd_eval(args.base, args.adapter, args.corpus)
        if args.command == "rerun":
            return cmd_rerun(args.manifest)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, NumericError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (CompatError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE


if __name__ == "__main__":
    sys.exit(main())
