"""
Multi-run drivers: bridge comparison over several seeds and the coaching
temperature sweep.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from app.bridges.stratified import edit_distance_law, stratified_sample_lm, stratified_sample_uniform
from app.core.exceptions import CorpusError
from app.harness.corpus import PreparedData, load_prepared
from app.harness.metrics import read_metrics
from app.harness.training import TrainingSummary, load_language_model, pretrain_lm, train
from app.schemas.config import COACHING_TAU_GRID, BridgeConfig, BridgeKind, ExperimentConfig
from app.schemas.metrics import Phase
from app.schemas.tokens import strip_eos

logger = logging.getLogger(__name__)

COMPARED = ("mle", "uniform", "lm", "coaching")
TREND_WINDOW = 5


class SystemReport(BaseModel):
    system: str
    test_bleu: List[float] = Field(default_factory=list, description="One entry per seed")
    mean_test_bleu: Optional[float] = None
    dev_curve_slope: Optional[float] = Field(default=None, description="Least-squares slope of dev BLEU over evaluations")
    dev_bleu_trend: Optional[float] = Field(default=None, description="Slope of the moving-average dev BLEU curve")
    reward_curve_slope: Optional[float] = Field(default=None, description="Least-squares slope of the bridge mean reward")
    reward_trend: Optional[float] = Field(default=None, description="Slope of the moving-average bridge mean reward")
    sample_fluency: Optional[float] = Field(default=None, description="Mean per-token LM log-probability of bridge samples")


def curve_slope(values: Sequence[float]) -> Optional[float]:
    if len(values) < 2:
        return None
    return float(np.polyfit(np.arange(len(values), dtype=np.float64), np.asarray(values, dtype=np.float64), 1)[0])


def moving_average(values: Sequence[float], window: int = TREND_WINDOW) -> List[float]:
    """Means over every full window; empty when there are fewer values than the window."""
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    if len(values) < window:
        return []
    return [float(v) for v in np.convolve(np.asarray(values, dtype=np.float64), np.full(window, 1.0 / window), mode="valid")]


def trend(values: Sequence[float], window: int = TREND_WINDOW) -> Optional[float]:
    """Slope of the moving-average curve, None until it has two points."""
    return curve_slope(moving_average(values, window))


class LearningCurves(BaseModel):
    dev_bleu: List[float] = Field(default_factory=list, description="Dev BLEU per evaluation")
    mean_reward: List[float] = Field(default_factory=list, description="Bridge mean reward per update")


def learning_curves(metrics: Union[str, Path]) -> LearningCurves:
    """Both curves from a metrics CSV.

    The reward curve follows the coaching bridge's own updates when the run
    has them and the static bridge samples fed to the generator otherwise.
    """
    rows = read_metrics(metrics)
    bridge = [r.mean_reward for r in rows if r.phase is Phase.BRIDGE_STEP and r.mean_reward is not None]
    static = [r.mean_reward for r in rows if r.phase is Phase.GENERATOR_STEP and r.mean_reward is not None]
    return LearningCurves(
        dev_bleu=[r.dev_bleu for r in rows if r.phase is Phase.EVAL and r.dev_bleu is not None],
        mean_reward=bridge or static,
    )


def _mean_of(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


class FluencyComparison(BaseModel):
    """Mean per-token LM log-probability of uniform and LM bridge samples drawn at the same edit distances."""

    uniform: float
    lm: float
    samples: int

    @property
    def gap(self) -> float:
        return self.lm - self.uniform


def matched_fluency(
    references: Sequence[Sequence[int]],
    bridge: BridgeConfig,
    lm,
    vocab_size: int,
    n_samples: int,
    rng: np.random.Generator,
) -> FluencyComparison:
    """Draw m once per sample from the edit-distance law, then one uniform and one LM edit at that m."""
    if not references:
        raise CorpusError("Fluency comparison needs at least one reference")
    totals: Dict[str, List[float]] = {"uniform": [], "lm": []}
    tokens = 0
    for i in range(n_samples):
        reference = references[i % len(references)]
        length = len(strip_eos(reference))
        q = edit_distance_law(length, bridge.tau, bridge.m_max_for(length, strict=False))
        m = int(rng.choice(len(q), p=q))
        uniform = stratified_sample_uniform(reference, bridge, rng, vocab_size, strict=False, m=m)
        fluent = stratified_sample_lm(reference, bridge, lm, rng, strict=False, m=m)
        totals["uniform"].append(lm.score(uniform.tokens))
        totals["lm"].append(lm.score(fluent.tokens))
        tokens += len(uniform.tokens)
    return FluencyComparison(
        uniform=math.fsum(totals["uniform"]) / tokens, lm=math.fsum(totals["lm"]) / tokens, samples=n_samples
    )


def sample_fluency(config: ExperimentConfig, data: PreparedData, n_samples: int = 1000) -> FluencyComparison:
    """``matched_fluency`` over the training targets with the pre-trained LM."""
    lm = load_language_model(config, len(data.tgt_vocab))
    references = [reference for _, reference in data.train]
    return matched_fluency(references, config.bridge, lm, len(data.tgt_vocab), n_samples, np.random.default_rng(config.seed))


def _run(config: ExperimentConfig, system: str, data: PreparedData) -> TrainingSummary:
    if system == "mle":
        return train(config, mle=True, data=data)
    kind = BridgeKind(system)
    return train(config.model_copy(update={"bridge": config.bridge.model_copy(update={"kind": kind})}), data=data)


def compare_bridges(
    config: ExperimentConfig, seeds: Sequence[int], systems: Sequence[str] = COMPARED
) -> Dict[str, SystemReport]:
    """Train every system under every seed and aggregate test BLEU and learning curves."""
    data = load_prepared(config)
    root = Path(config.output_dir)
    reports = {system: SystemReport(system=system) for system in systems}
    curves: Dict[str, List[LearningCurves]] = {system: [] for system in systems}
    lm_config = config.model_copy(update={"lm_checkpoint": config.lm_checkpoint or str(root / "lm")})
    if {"uniform", "lm"} & set(systems):
        pretrain_lm(lm_config, data)
    for seed in seeds:
        for system in systems:
            run_config = lm_config.model_copy(update={"seed": seed, "output_dir": str(root / system / f"seed{seed}")})
            logger.info(f"Comparison run: {system}, seed {seed}")
            summary = _run(run_config, system, data)
            if summary.test_bleu is not None:
                reports[system].test_bleu.append(summary.test_bleu)
            curves[system].append(learning_curves(summary.metrics))
    fluency = sample_fluency(lm_config, data) if {"uniform", "lm"} & set(systems) else None
    for system, report in reports.items():
        if report.test_bleu:
            report.mean_test_bleu = float(np.mean(report.test_bleu))
        runs = curves[system]
        report.dev_curve_slope = _mean_of([curve_slope(c.dev_bleu) for c in runs])
        report.dev_bleu_trend = _mean_of([trend(c.dev_bleu) for c in runs])
        report.reward_curve_slope = _mean_of([curve_slope(c.mean_reward) for c in runs])
        report.reward_trend = _mean_of([trend(c.mean_reward) for c in runs])
        if fluency is not None and system in ("uniform", "lm"):
            report.sample_fluency = getattr(fluency, system)
    return reports


def tau_sweep(config: ExperimentConfig, grid: Sequence[float] = COACHING_TAU_GRID) -> Dict[float, TrainingSummary]:
    """Coaching runs over the temperature grid, one output directory per τ."""
    data = load_prepared(config)
    root = Path(config.output_dir)
    results: Dict[float, TrainingSummary] = {}
    for tau in grid:
        run_config = config.model_copy(
            update={
                "output_dir": str(root / f"tau{tau}"),
                "bridge": config.bridge.model_copy(update={"kind": BridgeKind.COACHING, "tau": tau}),
            }
        )
        results[tau] = train(run_config, data=data)
        logger.info(f"τ={tau}: best dev BLEU {results[tau].best_dev_bleu}, test BLEU {results[tau].test_bleu}")
    return results
