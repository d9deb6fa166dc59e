"""
Command-line surface.

    python main.py prepare --config exp.cfg
    python main.py pretrain-lm --config exp.cfg
    python main.py train --config exp.cfg --bridge uniform --set bridge.tau=0.8
    python main.py evaluate --hyp out.txt --ref test.tgt
    python main.py sample-bridge --kind all --n 3 --reference "w1 w2 w3 w4"
    python main.py oracle-check --only payoff kl

Every command prints one JSON summary on stdout. Framework errors exit
with code 2, a failing oracle check with code 1.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.bridges.registry import build_bridge
from app.core.exceptions import ConfigError, GBNError
from app.harness.bleu import bleu_from_files, evaluate_bleu
from app.harness.checkpoint import checkpoint_paths, load_checkpoint, select
from app.harness.corpus import load_prepared, prepare_data
from app.harness.training import LM_TAG, decode_corpus, lm_directory, load_language_model, pretrain_lm, train
from app.models.generator import Generator
from app.oracle.suite import OracleSuite, run_oracle_suite
from app.schemas.config import BridgeKind, ExperimentConfig, build_config, load_config, parse_overrides
from app.schemas.tokens import strip_eos

logger = logging.getLogger(__name__)

ORACLE_GROUPS = [name for name, _ in OracleSuite().checks()]
STATIC_KINDS = [kind.value for kind in BridgeKind if kind.is_static]


def _emit(summary: Dict[str, Any]) -> None:
    print(json.dumps(summary, indent=2, default=str))


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if any), then dedicated flags, then ``--set`` pairs."""
    overrides: Dict[str, str] = {}
    for flag, key in (("seed", "seed"), ("output_dir", "output_dir"), ("bridge", "bridge.kind"), ("tau", "bridge.tau"), ("m_max", "bridge.m_max")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    overrides.update(parse_overrides(args.set or []))
    if args.config:
        return load_config(args.config, overrides)
    return build_config({}, overrides)


def cmd_prepare(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    data = prepare_data(config)
    _emit(
        {
            "status": "ok",
            "data_dir": config.task.data_dir,
            "src_vocab": len(data.src_vocab),
            "tgt_vocab": len(data.tgt_vocab),
            "splits": {name: len(pairs) for name, pairs in data.splits.items()},
        }
    )
    return 0


def cmd_pretrain_lm(args: argparse.Namespace) -> int:
    _emit(pretrain_lm(resolve_config(args)))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    summary = train(resolve_config(args), resume=args.resume, mle=args.mle)
    _emit(summary.model_dump())
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    if args.hyp or args.ref:
        if not (args.hyp and args.ref):
            raise ConfigError("evaluate needs both --hyp and --ref")
        result = bleu_from_files(args.hyp, args.ref)
        _emit({"status": "ok", "bleu": round(result.score, 2), **result.model_dump()})
        return 0

    config = resolve_config(args)
    data = load_prepared(config)
    tensors, _ = load_checkpoint(config.output_dir, args.checkpoint)
    model = Generator(len(data.src_vocab), len(data.tgt_vocab), config.model, params=select(tensors, "generator"))
    pairs = data.splits[args.split]
    hyps = decode_corpus(model, [src for src, _ in pairs], config.model.beam)
    result = evaluate_bleu(hyps, [strip_eos(tgt) for _, tgt in pairs])
    if args.output:
        Path(args.output).write_text("".join(" ".join(data.tgt_vocab.decode(h)) + "\n" for h in hyps), encoding="utf-8")
    _emit({"status": "ok", "split": args.split, "checkpoint": args.checkpoint, "bleu": round(result.score, 2), **result.model_dump()})
    return 0


def _sample_kinds(kind: str, config: ExperimentConfig) -> List[BridgeKind]:
    if kind != "all":
        return [BridgeKind(kind)]
    kinds = [BridgeKind.DELTA, BridgeKind.UNIFORM]
    if not checkpoint_paths(lm_directory(config), LM_TAG)[0].exists():
        logger.warning("No pre-trained language model; the LM bridge is left out of the comparison")
        return kinds
    return kinds + [BridgeKind.LM]


def cmd_sample_bridge(args: argparse.Namespace) -> int:
    """Side-by-side samples of the static bridges for a few references."""
    config = resolve_config(args)
    data = load_prepared(config)
    vocab = data.tgt_vocab
    if args.reference:
        references = [vocab.encode(args.reference.split())]
    else:
        references = [tgt for _, tgt in data.train[: args.references]]
    rng = np.random.default_rng(config.seed)
    rows: List[Dict[str, Any]] = []
    for kind in _sample_kinds(args.kind, config):
        lm = load_language_model(config, len(vocab)) if kind is BridgeKind.LM else None
        bridge = build_bridge(config.bridge.model_copy(update={"kind": kind}), len(vocab), lm=lm, strict=True)
        for reference in references:
            for drawn in bridge.draw(reference, args.n, rng):
                rows.append(
                    {
                        "bridge": kind.value,
                        "reference": " ".join(vocab.decode(reference)),
                        "sample": " ".join(vocab.decode(drawn.tokens)),
                        "m": drawn.m,
                        "score": drawn.score,
                        "density": bridge.density(drawn.tokens, reference),
                    }
                )
    _emit({"status": "ok", "tau": config.bridge.tau, "samples": rows})
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    records = run_oracle_suite(args.mc_draws, args.sampler_draws, args.seed or 0, args.only)
    failed = [r.name for r in records if not r.passed]
    _emit({"status": "failed" if failed else "ok", "failed": failed, "checks": [r.model_dump() for r in records]})
    return 1 if failed else 0


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat key=value experiment config file")
    parser.add_argument("--set", nargs="*", metavar="KEY=VALUE", help="Override any config key")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", dest="output_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbn", description="Generative bridging network experiments")
    parser.add_argument("--log-level", help="Override GBN_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="Generate or read the corpus and build vocabularies")
    _common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("pretrain-lm", help="Train the language model used by the LM bridge")
    _common(p)
    p.set_defaults(func=cmd_pretrain_lm)

    p = sub.add_parser("train", help="Train a generator with a static or coaching bridge")
    _common(p)
    p.add_argument("--bridge", choices=[k.value for k in BridgeKind])
    p.add_argument("--tau", type=float)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--mle", action="store_true", help="Plain maximum likelihood")
    p.add_argument("--resume", action="store_true", help="Continue from the last checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Corpus BLEU of files or of a trained checkpoint")
    _common(p)
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--checkpoint", default="best")
    p.add_argument("--split", choices=["train", "dev", "test"], default="test")
    p.add_argument("--output", help="Write decoded hypotheses here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample-bridge", help="Dump bridge samples with their scores and densities")
    _common(p)
    p.add_argument("--kind", choices=STATIC_KINDS + ["all"], default="uniform")
    p.add_argument("--tau", type=float)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--n", type=int, default=5, help="Samples per reference")
    p.add_argument("--reference", help="Whitespace-tokenized reference; default: training targets")
    p.add_argument("--references", type=int, default=3, help="Training targets used without --reference")
    p.set_defaults(func=cmd_sample_bridge)

    p = sub.add_parser("oracle-check", help="Exact-math equivalence suite")
    p.add_argument("--mc-draws", type=int)
    p.add_argument("--sampler-draws", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--only", nargs="*", choices=ORACLE_GROUPS)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    try:
        return args.func(args)
    except GBNError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(f"error [{e.code}]: {e.message}", file=sys.stderr)
        _emit({"status": "error", "code": e.code, "message": e.message})
        return 2
