"""Self-supervised pretraining and CTC fine-tuning for text line transcription."""

from .config import RunConfig, parse_config
from .corpus import (
    LineImage,
    Manifest,
    TranscribedLine,
    Vocabulary,
    build_vocab,
    load_line,
    ratio_filter,
    read_manifest,
)
from .ctc import CtcInstance, ctc_loss, ctc_nll
from .decode_eval import CerReport, cer, evaluate, greedy_decode
from .encoder import EncoderConfig, context_forward, conv_forward, encode, feature_steps
from .estimators import ContrastivePretrainer, LineTranscriber
from .exceptions import DataError, InklineError, NumericalError, ValidationError
from .finetune import finetune_run
from .masking import MaskPlan, apply_mask, sample_plan
from .pretrain import contrastive_loss, run_pretrain, score
from .synth import SynthConfig, synth_corpus

__version__ = "0.1.0"

__all__ = [
    "CerReport",
    "ContrastivePretrainer",
    "CtcInstance",
    "DataError",
    "EncoderConfig",
    "InklineError",
    "LineImage",
    "LineTranscriber",
    "Manifest",
    "MaskPlan",
    "NumericalError",
    "RunConfig",
    "SynthConfig",
    "TranscribedLine",
    "ValidationError",
    "Vocabulary",
    "apply_mask",
    "build_vocab",
    "cer",
    "context_forward",
    "contrastive_loss",
    "conv_forward",
    "ctc_loss",
    "ctc_nll",
    "encode",
    "evaluate",
    "feature_steps",
    "finetune_run",
    "greedy_decode",
    "load_line",
    "parse_config",
    "ratio_filter",
    "read_manifest",
    "run_pretrain",
    "sample_plan",
    "score",
    "synth_corpus",
]
