"""Command-line entry point.

Subcommands mirror the experiment lifecycle: synth, pretrain, finetune,
transcribe, evaluate. Exit codes: 0 success, 1 validation problem, 2 I/O
problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig, config_from_snapshot, parse_config, validate_config
from .corpus import Vocabulary, build_vocab, load_line, load_transcript, read_manifest
from .decode_eval import evaluate, greedy_decode, write_report
from .encoder import encode, vocab_logits
from .exceptions import DataError, NumericalError, ValidationError
from .finetune import finetune_run
from .pretrain import run_pretrain
from .synth import parse_synth_config, synth_corpus

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def _load_config(args) -> RunConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = RunConfig()
        validate_config(cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def _restore_params(ckpt_path):
    ckpt = load_checkpoint(ckpt_path)
    cfg = config_from_snapshot(ckpt.config)
    params = ckpt.tensors()
    return ckpt, cfg, params


def _resume_config(args, ckpt, flag: str) -> RunConfig:
    # A resumed run must replay the original schedule, so the stored
    # snapshot wins and conflicting overrides are refused outright.
    if args.config or args.seed is not None:
        raise ValidationError(
            f"{flag} continues with the checkpoint's stored config; drop --config/--seed"
        )
    cfg = config_from_snapshot(ckpt.config)
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def cmd_pretrain(args) -> int:
    manifest = read_manifest(args.manifest)
    if args.init:
        resume = load_checkpoint(args.init)
        cfg = _resume_config(args, resume, "--init")
    else:
        resume = None
        cfg = _load_config(args)
    path = run_pretrain(manifest, cfg, args.out, resume=resume)
    print(f"pretraining finished; checkpoint at {path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    manifest = read_manifest(args.manifest)
    if args.init == "scratch":
        pretrained = None
    else:
        pretrained = load_checkpoint(args.init)
        if pretrained.kind == "finetune":
            raise ValidationError(
                "--init expects a pretraining checkpoint or 'scratch'; "
                "use --resume to continue a fine-tuning run"
            )
    if args.resume:
        resume = load_checkpoint(args.resume)
        cfg = _resume_config(args, resume, "--resume")
        if resume.vocab is None:
            raise DataError(f"{args.resume}: fine-tuning checkpoint lacks a vocabulary")
        vocab = Vocabulary(tuple(resume.vocab))
    else:
        resume = None
        cfg = _load_config(args)
        texts = [
            load_transcript(entry.transcript_path)
            for entry in manifest.split("finetune").entries
        ]
        vocab = build_vocab(texts)
    path = finetune_run(manifest, pretrained, vocab, cfg, args.out, resume=resume)
    print(f"fine-tuning finished; checkpoint at {path}")
    return EXIT_OK


def cmd_transcribe(args) -> int:
    ckpt, cfg, params = _restore_params(args.init)
    if ckpt.vocab is None:
        raise ValidationError("checkpoint has no vocabulary; transcription needs a fine-tuned model")
    vocab = Vocabulary(tuple(ckpt.vocab))
    enc_cfg = cfg.encoder_config()
    paths = list(args.images)
    if args.manifest:
        manifest = read_manifest(args.manifest)
        paths.extend(str(e.image_path) for e in manifest.entries)
    if not paths:
        raise ValidationError("nothing to transcribe: give image paths or --manifest")
    out_lines = []
    for p in paths:
        image = load_line(p, enc_cfg.height)
        ctx = encode(params, enc_cfg, image.pixels, image.source_id)
        logits = vocab_logits(params, ctx, len(vocab))
        out_lines.append(greedy_decode(logits, vocab).symbols)
    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt, cfg, params = _restore_params(args.init)
    if ckpt.vocab is None:
        raise ValidationError("checkpoint has no vocabulary; evaluation needs a fine-tuned model")
    vocab = Vocabulary(tuple(ckpt.vocab))
    manifest = read_manifest(args.manifest)
    report = evaluate(manifest, params, cfg.encoder_config(), vocab)
    if args.out:
        write_report(report, args.out)
    print(report.summary())
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = parse_synth_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    manifest = synth_corpus(cfg, args.out)
    print(f"wrote {len(manifest)} lines under {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inkline",
        description="Self-supervised pretraining and CTC fine-tuning for text line transcription",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True, config=True):
        if config:
            p.add_argument("--config", help="key=value run configuration file")
        if manifest:
            p.add_argument("--manifest", required=True, help="corpus manifest TSV")
        p.add_argument("--out", required=True, help="output directory or file")
        p.add_argument("--seed", type=int, help="override the configured RNG seed")
        p.add_argument("--workers", type=int, help="parallel data workers")

    p = sub.add_parser("pretrain", help="run contrastive pre-training")
    common(p)
    p.add_argument("--init", help="checkpoint to resume from")
    p.set_defaults(handler=cmd_pretrain)

    p = sub.add_parser("finetune", help="CTC fine-tuning from a checkpoint or scratch")
    common(p)
    p.add_argument("--init", required=True,
                   help="pretraining checkpoint path, or 'scratch'")
    p.add_argument("--resume", help="fine-tuning checkpoint to continue")
    p.set_defaults(handler=cmd_finetune)

    p = sub.add_parser("transcribe", help="transcribe line images")
    p.add_argument("images", nargs="*", help="line image paths")
    p.add_argument("--manifest", help="manifest of lines to transcribe")
    p.add_argument("--init", required=True, help="fine-tuned checkpoint")
    p.add_argument("--out", help="write transcriptions here instead of stdout")
    p.set_defaults(handler=cmd_transcribe)

    p = sub.add_parser("evaluate", help="report CER on a labeled test split")
    p.add_argument("--manifest", required=True, help="manifest with a test split")
    p.add_argument("--init", required=True, help="fine-tuned checkpoint")
    p.add_argument("--out", help="write the per-line TSV report here")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", required=True, help="key=value synthesis settings")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.set_defaults(handler=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except (DataError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
