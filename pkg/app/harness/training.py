"""
Training procedures.

``StaticTrainer`` trains the generator on K samples per reference drawn from
a fixed bridge (delta, uniform or LM); with ``mle=True`` it runs plain
maximum likelihood through the same code path. ``CoachingTrainer`` runs the
three coaching phases: generator pre-training, bridge pre-training on the
generator's beam outputs, then alternating bridge and generator steps until
the dev BLEU stops improving.

Every run is resumable from its ``last`` checkpoint: parameters, optimizer
accumulators, RNG streams and the position inside the current epoch are all
restored, so a resumed run writes the same metric rows as an uninterrupted
one.
"""

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.bridges.coaching import CoachingBridge, CoachingSampler
from app.bridges.registry import build_bridge
from app.core.config import settings
from app.core.exceptions import CheckpointError, ConfigError, MissingCheckpointError, TrainingDivergedError
from app.harness.bleu import evaluate_bleu
from app.harness.checkpoint import load_checkpoint, prefixed, restore_rng, rng_state, save_checkpoint, select
from app.harness.corpus import IdPair, PreparedData, load_prepared
from app.harness.metrics import MetricsLogger
from app.models.generator import Generator, collapse_samples
from app.models.language_model import LanguageModel, lm_train
from app.models.seq2seq import Seq2SeqModel
from app.numerics.optim import Adadelta
from app.reward.ngram import similarity_score
from app.schemas.config import BridgeKind, ExperimentConfig, dump_config, save_config
from app.schemas.metrics import Phase
from app.schemas.tokens import strip_eos

logger = logging.getLogger(__name__)

RESUME_TAG = "last"
BEST_TAG = "best"
LM_TAG = "lm"


class TrainingState(BaseModel):
    """Position of a run; everything needed to continue it exactly."""

    stage: str
    epoch: int = 1
    cursor: int = Field(default=0, description="Next batch index within the epoch")
    order: Optional[List[int]] = Field(default=None, description="Example order of the current epoch")
    updates: int = Field(default=0, description="Generator updates in the current stage")
    step: int = Field(default=0, description="Metric rows written")
    best_bleu: Optional[float] = None
    evals_without_gain: int = 0
    nonfinite_streak: int = 0
    stop_reason: Optional[str] = None
    pseudo_targets: Optional[List[List[int]]] = Field(default=None, description="Beam outputs used to pre-train the bridge")


class TrainingSummary(BaseModel):
    status: str = "ok"
    bridge: str
    steps: int
    best_dev_bleu: Optional[float] = None
    test_bleu: Optional[float] = None
    stop_reason: Optional[str] = None
    output_dir: str
    metrics: str
    checkpoint: Optional[str] = None


def decode_corpus(model: Seq2SeqModel, sources: Sequence[Sequence[int]], beam: Optional[int] = None, max_len: Optional[int] = None) -> List[List[int]]:
    """Beam-search outputs with EOS removed."""
    return [strip_eos(model.beam_search(src, beam, max_len).tokens) for src in sources]


def corpus_bleu(model: Seq2SeqModel, pairs: Sequence[IdPair], beam: Optional[int] = None) -> float:
    hyps = decode_corpus(model, [src for src, _ in pairs], beam)
    return evaluate_bleu(hyps, [strip_eos(tgt) for _, tgt in pairs]).score


def _mean_reward(weighted) -> float:
    """Collapse-weighted mean S over a batch, identical for a delta bridge and plain MLE."""
    per_source = [math.fsum(w * similarity_score(target, source_ref) for target, w in targets) for source_ref, targets in weighted]
    return math.fsum(per_source) / len(per_source)


def _restore_optimizer(optimizer: Adadelta, tensors: Dict[str, np.ndarray], prefix: str, meta: Dict[str, int]) -> None:
    optimizer.state.load_tensors(prefix, tensors)
    optimizer.state.steps = int(meta["steps"])
    optimizer.state.skipped = int(meta["skipped"])


class Trainer:
    """Shared loop: epochs, batches, evaluation cadence, stopping rules and checkpoints."""

    stages: Tuple[str, ...] = ("train",)
    bridge_label = "delta"

    def __init__(self, config: ExperimentConfig, data: Optional[PreparedData] = None, resume: bool = False):
        self.config = config
        self.data = data or load_prepared(config)
        if not self.data.train:
            raise ConfigError("Training split is empty")
        self.output_dir = Path(config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        init, order, sample, dropout = np.random.SeedSequence(config.seed).spawn(4)
        self.rngs: Dict[str, np.random.Generator] = {
            "order": np.random.default_rng(order),
            "sample": np.random.default_rng(sample),
            "dropout": np.random.default_rng(dropout),
        }
        self.init_rng = np.random.default_rng(init)
        self.generator = Generator(len(self.data.src_vocab), len(self.data.tgt_vocab), config.model, rng=self.init_rng)
        self.gen_opt = Adadelta(self.generator.params, config.optimizer.rho, config.optimizer.eps)
        self.state = TrainingState(stage=self.stages[0])
        self.build()
        if resume:
            self.restore()
        else:
            save_config(config, self.output_dir / "config.txt")
        self.metrics = MetricsLogger(self.output_dir / settings.metrics_filename, resume_step=self.state.step if resume else None)

    # Hooks

    def build(self) -> None:
        """Create bridge components; called before any restore."""

    def modules(self) -> Dict[str, Tuple[Seq2SeqModel, Adadelta]]:
        return {"generator": (self.generator, self.gen_opt)}

    def extra_tensors(self) -> Dict[str, np.ndarray]:
        return {}

    def load_extra_tensors(self, tensors: Dict[str, np.ndarray]) -> None:
        pass

    def run_stage(self, stage: str) -> bool:
        raise NotImplementedError

    # Checkpoints

    def checkpoint(self, tag: str = RESUME_TAG) -> Path:
        tensors: Dict[str, np.ndarray] = {}
        meta: Dict[str, Any] = {}
        for name, (model, optimizer) in self.modules().items():
            tensors.update(prefixed(model.params, name))
            tensors.update(optimizer.state.tensors(f"{name}_opt"))
            meta[name] = {"steps": optimizer.state.steps, "skipped": optimizer.state.skipped}
        tensors.update(self.extra_tensors())
        document = {
            "training": self.state.model_dump(),
            "optimizers": meta,
            "rng": {name: rng_state(rng) for name, rng in self.rngs.items()},
            "config": dump_config(self.config),
        }
        return save_checkpoint(self.output_dir, tag, tensors, document)

    def restore(self, tag: str = RESUME_TAG) -> None:
        tensors, document = load_checkpoint(self.output_dir, tag)
        for name, (model, optimizer) in self.modules().items():
            model.params = {k: np.array(v, dtype=np.float64) for k, v in select(tensors, name).items()}
            _restore_optimizer(optimizer, tensors, f"{name}_opt", document["optimizers"][name])
        self.load_extra_tensors(tensors)
        for name, state in document["rng"].items():
            self.rngs[name] = restore_rng(state)
        self.state = TrainingState.model_validate(document["training"])
        self.state.stop_reason = None
        logger.info(f"Resuming at stage {self.state.stage}, epoch {self.state.epoch}, batch {self.state.cursor}, step {self.state.step}")

    # Loop pieces

    def log(self, phase: Phase, loss: Optional[float] = None, mean_reward: Optional[float] = None, dev_bleu: Optional[float] = None):
        row = self.metrics.log(self.state.epoch, phase, loss, mean_reward, dev_bleu)
        self.state.step = row.step
        return row

    def track_loss(self, loss: float, phase: Phase) -> None:
        """Abort after two consecutive non-finite losses."""
        if math.isfinite(loss):
            self.state.nonfinite_streak = 0
            return
        self.state.nonfinite_streak += 1
        if self.state.nonfinite_streak >= 2:
            raise TrainingDivergedError(
                f"Training diverged: {self.state.nonfinite_streak} consecutive non-finite losses "
                f"(last {loss}) at step {self.state.step}, stage {self.state.stage}, phase {phase.value}, "
                f"epoch {self.state.epoch}"
            )

    def evaluate(self) -> float:
        dev = self.data.dev[: self.config.training.eval_limit] if self.config.training.eval_limit else self.data.dev
        bleu = corpus_bleu(self.generator, dev, self.config.model.beam) if dev else 0.0
        self.log(Phase.EVAL, dev_bleu=bleu)
        if self.state.best_bleu is None or bleu > self.state.best_bleu:
            self.state.best_bleu = bleu
            self.state.evals_without_gain = 0
            self.checkpoint(BEST_TAG)
        else:
            self.state.evals_without_gain += 1
        logger.info(
            f"Eval at step {self.state.step}: dev BLEU {bleu:.2f} (best {self.state.best_bleu:.2f}, "
            f"{self.state.evals_without_gain} without gain)"
        )
        self.checkpoint(RESUME_TAG)
        return bleu

    def stop_requested(self) -> bool:
        max_steps = self.config.training.max_steps
        if max_steps is not None and self.state.step >= max_steps:
            self.state.stop_reason = "max_steps"
            return True
        if self.state.evals_without_gain >= self.config.training.patience:
            self.state.stop_reason = "converged"
            return True
        return False

    def run_epochs(self, epochs: int, step_fn: Callable[[List[int]], None], evaluate: bool) -> bool:
        """Iterate batches of example indices from the saved position; False when a stop rule fired."""
        n = len(self.data.train)
        batch_size = self.config.training.batch_size
        n_batches = math.ceil(n / batch_size)
        while self.state.epoch <= epochs:
            if self.state.order is None:
                self.state.order = [int(i) for i in self.rngs["order"].permutation(n)]
            while self.state.cursor < n_batches:
                start = self.state.cursor * batch_size
                step_fn(self.state.order[start : start + batch_size])
                self.state.cursor += 1
                if evaluate and self.state.updates % self.config.training.eval_every == 0:
                    self.evaluate()
                if self.stop_requested():
                    return False
            self.state.epoch += 1
            self.state.cursor = 0
            self.state.order = None
        return True

    def next_stage(self) -> None:
        index = self.stages.index(self.state.stage)
        self.state = self.state.model_copy(
            update={
                "stage": self.stages[index + 1] if index + 1 < len(self.stages) else "done",
                "epoch": 1,
                "cursor": 0,
                "order": None,
                "updates": 0,
                "evals_without_gain": 0,
            }
        )

    def finish_stage(self, stage: str) -> None:
        """Runs once the state has moved past ``stage``, so anything checkpointed here resumes in the next stage."""

    def train(self) -> TrainingSummary:
        while self.state.stage != "done":
            stage = self.state.stage
            if not self.run_stage(stage):
                break
            self.next_stage()
            self.finish_stage(stage)
            if self.stop_requested():
                break
        if self.state.stage == "done":
            self.state.stop_reason = self.state.stop_reason or "epochs"
        self.checkpoint(RESUME_TAG)
        return self.summary()

    def summary(self) -> TrainingSummary:
        test_bleu = None
        best_path = None
        try:
            tensors, _ = load_checkpoint(self.output_dir, BEST_TAG)
            self.generator.params = {k: np.array(v, dtype=np.float64) for k, v in select(tensors, "generator").items()}
            best_path = str(self.output_dir / f"{BEST_TAG}.tensors")
        except MissingCheckpointError:
            logger.warning("No best checkpoint was written; reporting the final parameters")
        if self.data.test:
            test_bleu = corpus_bleu(self.generator, self.data.test, self.config.model.beam)
        logger.info(f"Finished ({self.state.stop_reason}) after {self.state.step} rows; test BLEU {test_bleu}")
        return TrainingSummary(
            bridge=self.bridge_label,
            steps=self.state.step,
            best_dev_bleu=self.state.best_bleu,
            test_bleu=test_bleu,
            stop_reason=self.state.stop_reason,
            output_dir=str(self.output_dir),
            metrics=str(self.metrics.path),
            checkpoint=best_path,
        )

    def batch_pairs(self, indices: Sequence[int]) -> List[IdPair]:
        return [self.data.train[i] for i in indices]

    def generator_update(self, pairs: Sequence[IdPair], samples: Sequence[List[List[int]]], phase: Phase) -> float:
        """One generator step towards ``samples`` (K per pair), logged with the batch's mean reward."""
        weighted = collapse_samples([(source, drawn) for (source, _), drawn in zip(pairs, samples)])
        loss = self.generator.weighted_update(weighted, self.gen_opt, self.rngs["dropout"])
        self.track_loss(loss, phase)
        self.state.updates += 1
        reward = _mean_reward([(reference, targets) for (_, reference), (_, targets) in zip(pairs, weighted)])
        self.log(phase, loss=loss, mean_reward=reward)
        return loss


def load_language_model(config: ExperimentConfig, vocab_size: int) -> LanguageModel:
    """The pre-trained LM stored under ``lm_checkpoint``."""
    directory = lm_directory(config)
    try:
        tensors, _ = load_checkpoint(directory, LM_TAG)
    except MissingCheckpointError:
        raise MissingCheckpointError(f"The LM bridge needs a pre-trained language model; none under {directory} (run pretrain-lm)")
    params = select(tensors, "lm")
    if "embed" not in params or params["embed"].shape[0] != vocab_size:
        raise CheckpointError(f"Language model under {directory} does not match the target vocabulary of size {vocab_size}")
    return LanguageModel(vocab_size, config.model, params=params)


def lm_directory(config: ExperimentConfig) -> Path:
    return Path(config.lm_checkpoint) if config.lm_checkpoint else Path(config.output_dir) / "lm"


class StaticTrainer(Trainer):
    """GBN with a fixed bridge, or plain MLE when ``mle`` is set."""

    def __init__(self, config: ExperimentConfig, data: Optional[PreparedData] = None, resume: bool = False, mle: bool = False):
        self.mle = mle
        super().__init__(config, data, resume)

    def build(self) -> None:
        kind = self.config.bridge.kind
        if not kind.is_static:
            raise ConfigError(f"Bridge '{kind.value}' is not static; use the coaching trainer")
        self.bridge_label = "mle" if self.mle else kind.value
        lm = load_language_model(self.config, len(self.data.tgt_vocab)) if kind is BridgeKind.LM and not self.mle else None
        self.bridge = build_bridge(self.config.bridge, len(self.data.tgt_vocab), lm=lm)

    def draw_samples(self, pairs: Sequence[IdPair]) -> List[List[List[int]]]:
        """K bridge samples per reference (the reference itself for MLE)."""
        if self.mle:
            return [[list(reference)] for _, reference in pairs]
        K = self.config.bridge.K
        return [[s.tokens for s in self.bridge.draw(reference, K, self.rngs["sample"])] for _, reference in pairs]

    def train_batch(self, indices: List[int]) -> None:
        pairs = self.batch_pairs(indices)
        self.generator_update(pairs, self.draw_samples(pairs), Phase.GENERATOR_STEP)

    def run_stage(self, stage: str) -> bool:
        logger.info(f"Training generator with the {self.bridge_label} bridge for {self.config.training.epochs} epochs")
        return self.run_epochs(self.config.training.epochs, self.train_batch, evaluate=True)


class CoachingTrainer(Trainer):
    """Generator pre-training, bridge pre-training, then alternating bridge and generator steps."""

    stages = ("generator-pretrain", "bridge-pretrain", "train")
    bridge_label = BridgeKind.COACHING.value

    def build(self) -> None:
        if self.config.bridge.kind is not BridgeKind.COACHING:
            raise ConfigError(f"The coaching trainer needs bridge.kind=coaching, got '{self.config.bridge.kind.value}'")
        V = len(self.data.tgt_vocab)
        self.network = CoachingBridge(V, self.config.model, self.config.bridge, rng=self.init_rng)
        self.bridge_opt = Adadelta(self.network.params, self.config.optimizer.rho, self.config.optimizer.eps)
        self.sampler = CoachingSampler(self.config.bridge, network=self.network)

    def modules(self) -> Dict[str, Tuple[Seq2SeqModel, Adadelta]]:
        return {"generator": (self.generator, self.gen_opt), "bridge": (self.network, self.bridge_opt)}

    def extra_tensors(self) -> Dict[str, np.ndarray]:
        return {
            "baseline.value": self.network.baseline,
            "baseline.seen": self.network.baseline_seen.astype(np.float64),
        }

    def load_extra_tensors(self, tensors: Dict[str, np.ndarray]) -> None:
        self.network.baseline = np.array(tensors["baseline.value"], dtype=np.float64)
        self.network.baseline_seen = np.asarray(tensors["baseline.seen"]) > 0.5

    def pretrain_generator(self, indices: List[int]) -> None:
        pairs = self.batch_pairs(indices)
        self.generator_update(pairs, [[list(reference)] for _, reference in pairs], Phase.PRETRAIN)

    def pretrain_bridge(self, indices: List[int]) -> None:
        pairs = [(self.data.train[i][1], self.state.pseudo_targets[i]) for i in indices]
        loss = self.network.pretrain_step(pairs, self.bridge_opt, self.rngs["dropout"])
        self.track_loss(loss, Phase.PRETRAIN)
        self.log(Phase.PRETRAIN, loss=loss)

    def coaching_batch(self, indices: List[int]) -> None:
        pairs = self.batch_pairs(indices)
        losses = self.network.coaching_update(pairs, self.generator, self.bridge_opt, self.rngs["sample"])
        self.track_loss(losses.total, Phase.BRIDGE_STEP)
        self.log(Phase.BRIDGE_STEP, loss=losses.total, mean_reward=losses.mean_reward)
        K = self.config.bridge.K
        samples = [[s.tokens for s in self.sampler.draw(reference, K, self.rngs["sample"])] for _, reference in pairs]
        self.generator_update(pairs, samples, Phase.GENERATOR_STEP)

    def finish_stage(self, stage: str) -> None:
        if stage == "generator-pretrain":
            self.evaluate()

    def run_stage(self, stage: str) -> bool:
        training = self.config.training
        if stage == "generator-pretrain":
            logger.info(f"Phase 1/3: pre-training the generator by MLE for {training.pretrain_epochs} epochs")
            return self.run_epochs(training.pretrain_epochs, self.pretrain_generator, evaluate=False)
        if stage == "bridge-pretrain":
            if self.state.pseudo_targets is None:
                logger.info(f"Decoding {len(self.data.train)} training sources for bridge pre-training targets")
                self.state.pseudo_targets = [
                    self.generator.beam_search(source, self.config.model.beam).tokens for source, _ in self.data.train
                ]
            logger.info(f"Phase 2/3: pre-training the bridge on (Y*, beam output) for {training.bridge_pretrain_epochs} epochs")
            return self.run_epochs(training.bridge_pretrain_epochs, self.pretrain_bridge, evaluate=False)
        logger.info(f"Phase 3/3: alternating bridge and generator steps for up to {training.epochs} epochs")
        return self.run_epochs(training.epochs, self.coaching_batch, evaluate=True)


def train_static(config: ExperimentConfig, resume: bool = False, mle: bool = False, data: Optional[PreparedData] = None) -> TrainingSummary:
    return StaticTrainer(config, data, resume, mle=mle).train()


def train_coaching(config: ExperimentConfig, resume: bool = False, data: Optional[PreparedData] = None) -> TrainingSummary:
    return CoachingTrainer(config, data, resume).train()


def train(config: ExperimentConfig, resume: bool = False, mle: bool = False, data: Optional[PreparedData] = None) -> TrainingSummary:
    """Dispatch on ``bridge.kind``."""
    if config.bridge.kind is BridgeKind.COACHING and not mle:
        return train_coaching(config, resume, data)
    return train_static(config, resume, mle, data)


def pretrain_lm(config: ExperimentConfig, data: Optional[PreparedData] = None) -> Dict[str, Any]:
    """Train the bridge LM on the target side of the training split and store it under ``lm_checkpoint``."""
    data = data or load_prepared(config)
    rng = np.random.default_rng(config.seed)
    lm = LanguageModel(len(data.tgt_vocab), config.model, rng=rng)
    optimizer = Adadelta(lm.params, config.optimizer.rho, config.optimizer.eps)
    heldout = [target for _, target in data.dev] or None
    history = lm_train(
        lm, [target for _, target in data.train], optimizer, config.training.lm_epochs, config.training.batch_size, heldout, rng
    )
    directory = lm_directory(config)
    path = save_checkpoint(directory, LM_TAG, prefixed(lm.params, "lm"), {"history": [r.model_dump() for r in history]})
    return {"status": "ok", "checkpoint": str(path), "history": [r.model_dump() for r in history]}
