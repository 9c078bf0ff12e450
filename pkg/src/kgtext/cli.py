"""Command line: ``kgtext {train,evaluate,generate,linearize,gradcheck,ablate,lin-exp,subsample}``.

Configuration is layered: built-in defaults, then ``--profile``, then a flat
JSON or TOML ``--config`` file, then explicit flags. Outputs go to ``--out``,
else ``$KGTEXT_OUTPUT_DIR``, else ``./runs``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import MISSING, fields

import torch

from .checkpoint import from_training, load_checkpoint, save_checkpoint
from .kg_core import few_shot_subsample, parse_dataset, serialize_dataset
from .linearizer import STRATEGIES
from .trainer import (MICRO_CONFIG, PROFILES, TrainConfig, ablate, build_model, evaluate_model, grad_check,
                      linearization_experiment, summarize, train)

OUTPUT_ENV = "KGTEXT_OUTPUT_DIR"
log = logging.getLogger("kgtext")


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def load_config_file(path: str) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(raw.decode("utf-8"))
    else:
        data = json.loads(raw)
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise ValueError(f"{path}: config must be a flat mapping")
    return data


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training config (overrides --config)")
    g.add_argument("--config", help="flat JSON or TOML config file")
    g.add_argument("--profile", choices=sorted(PROFILES), default=None)
    for f in fields(TrainConfig):
        default = f.default if f.default is not MISSING else None
        kind = _bool if isinstance(default, bool) else type(default)
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=kind, default=None,
                       metavar=kind.__name__.upper() if kind is not _bool else "BOOL")


def resolve_config(args, base: dict | None = None) -> TrainConfig:
    values = dict(base or {})
    values.update(PROFILES[args.profile] if getattr(args, "profile", None) else {})
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(TrainConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            values[f.name] = v
    return TrainConfig.from_dict(values)


def output_dir(args) -> str:
    out = args.out or os.environ.get(OUTPUT_ENV) or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def cmd_train(args) -> int:
    config = resolve_config(args)
    train_set = parse_dataset(args.train)
    valid = parse_dataset(args.valid, "valid") if args.valid else None
    out = output_dir(args)
    with open(os.path.join(out, "train_log.jsonl"), "w", encoding="utf-8") as fh:
        result = train(config, train_set, valid, log_file=fh)
    path = os.path.join(out, "model.ckpt")
    save_checkpoint(from_training(result), path)
    summary = {"checkpoint": path, "steps": result.step, "best_step": result.best_step,
               "best_valid_bleu_4": None if result.best_bleu is None else 100 * result.best_bleu,
               "final": result.history[-1] if result.history else None}
    print(json.dumps(summary))
    return 0


def _decode_args(p):
    p.add_argument("--decoding", choices=("beam", "greedy"), default="beam")
    p.add_argument("--beam-size", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=None)


def _decode_kwargs(args, config: dict) -> dict:
    return {"decoding": args.decoding,
            "beam_size": args.beam_size or config.get("beam_size", 8),
            "max_len": args.max_len or config.get("max_gen_len", 64),
            "length_penalty": config.get("length_penalty", 0.7) if args.length_penalty is None
            else args.length_penalty}


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data = parse_dataset(args.data, "test")
    report, _ = evaluate_model(ckpt.model, data, **_decode_kwargs(args, ckpt.config))
    d = report.to_dict(percent_bleu=True)
    if not args.per_instance:
        d.pop("per_instance")
    path = os.path.join(output_dir(args), "eval.json")
    _write_json(path, d)
    print(json.dumps({k: v for k, v in d.items() if k != "per_instance"}))
    return 0


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    data = parse_dataset(args.data, "test")
    _, gens = evaluate_model(ckpt.model, data, **_decode_kwargs(args, ckpt.config))
    path = args.output or os.path.join(output_dir(args), "generations.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for i, g in enumerate(gens):
            fh.write(json.dumps({"id": i, "text": g.text, "score": g.score}) + "\n")
    print(path)
    return 0


def cmd_linearize(args) -> int:
    data = parse_dataset(args.data)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint).model
    else:
        model = build_model(resolve_config(args), data)
    if args.cfg_strategy:  # --strategy also overrides a checkpoint's own
        model.config.strategy = resolve_config(args).strategy
    model.eval()
    indices = [args.index] if args.index is not None else range(len(data))
    with torch.no_grad():
        for i in indices:
            ex = model.prepare_graph(data[i].graph)
            lin = model.encode_graphs([ex]).linearized[0]
            names = [ex.graph.entity(e).name for e in lin.order]
            print(json.dumps({"id": i, "entities": names, **lin.to_dict()}))
    return 0


def cmd_gradcheck(args) -> int:
    config = resolve_config(args, MICRO_CONFIG)
    data = parse_dataset(args.data) if args.data else None
    report = grad_check(config, data, n_instances=args.instances, coords=args.coords)
    d = report.to_dict()
    _write_json(os.path.join(output_dir(args), "gradcheck.json"), d)
    print(json.dumps({"max_error": d["max_error"], "seconds": d["seconds"]}))
    return 0 if max(d["max_error"].values()) <= args.tolerance else 1


def _seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def cmd_ablate(args) -> int:
    config = resolve_config(args)
    rows = ablate(config, parse_dataset(args.train), parse_dataset(args.valid, "valid"), _seeds(args.seeds),
                  early_stop=args.early_stop)
    table = {"rows": rows, "mean_bleu_4": summarize(rows, "variant")}
    _write_json(os.path.join(output_dir(args), "ablation.json"), table)
    print(json.dumps(table["mean_bleu_4"]))
    return 0


def cmd_lin_exp(args) -> int:
    config = resolve_config(args)
    strategies = args.strategies.split(",") if args.strategies else STRATEGIES
    rows = linearization_experiment(config, parse_dataset(args.train), parse_dataset(args.valid, "valid"),
                                    strategies, _seeds(args.seeds), early_stop=args.early_stop)
    table = {"rows": rows, "mean_bleu_4": summarize(rows, "strategy")}
    _write_json(os.path.join(output_dir(args), "linearization.json"), table)
    print(json.dumps(table["mean_bleu_4"]))
    return 0


def cmd_subsample(args) -> int:
    data = parse_dataset(args.data)
    serialize_dataset(few_shot_subsample(data, args.k, args.seed), args.output)
    print(args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgtext", description="Few-shot knowledge-graph-to-text generation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./runs)")
        p.set_defaults(fn=fn)
        return p

    p = add("train", cmd_train, "train a model and write a checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    _add_config_flags(p)

    p = add("evaluate", cmd_evaluate, "score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--per-instance", action="store_true")
    _decode_args(p)

    p = add("generate", cmd_generate, "write generations as JSON lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    _decode_args(p)

    p = add("linearize", cmd_linearize, "print entity orders and triple weights as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--index", type=int)
    _add_config_flags(p)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient check on a micro model")
    p.add_argument("--data")
    p.add_argument("--instances", type=int, default=2)
    p.add_argument("--coords", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    _add_config_flags(p)

    for name, fn, help_ in (("ablate", cmd_ablate, "full model vs. each loss removed"),
                            ("lin-exp", cmd_lin_exp, "compare linearization strategies")):
        p = add(name, fn, help_)
        p.add_argument("--train", required=True)
        p.add_argument("--valid", required=True)
        p.add_argument("--seeds", default="0")
        p.add_argument("--early-stop", action="store_true")
        if name == "lin-exp":
            p.add_argument("--strategies", help="comma separated subset of " + ",".join(STRATEGIES))
        _add_config_flags(p)

    p = add("subsample", cmd_subsample, "draw a deterministic k-shot subset")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"kgtext {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
