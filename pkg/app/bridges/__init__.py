from .base import BridgeInterface, BridgeRegistry, BridgeSample
from .coaching import CoachingBridge, CoachingLosses, CoachingSampler
from .registry import bridge_density, build_bridge
from .static import DeltaBridge, delta_sample, lm_payoff_unnorm, uniform_payoff_unnorm
from .stratified import (
    LMBridge,
    UniformBridge,
    edit_distance_law,
    hamming,
    stratified_sample_lm,
    stratified_sample_uniform,
    stratified_uniform_prob,
)

__all__ = [
    "BridgeInterface",
    "BridgeRegistry",
    "BridgeSample",
    "CoachingBridge",
    "CoachingLosses",
    "CoachingSampler",
    "bridge_density",
    "build_bridge",
    "DeltaBridge",
    "delta_sample",
    "lm_payoff_unnorm",
    "uniform_payoff_unnorm",
    "LMBridge",
    "UniformBridge",
    "edit_distance_law",
    "hamming",
    "stratified_sample_lm",
    "stratified_sample_uniform",
    "stratified_uniform_prob",
]
