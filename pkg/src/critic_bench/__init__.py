"""Adversarial divergences as sample-quality metrics: critic-trained scores
(GC, LS, IW), MMD, and reference metrics (FID, C2ST, IS) on toy data."""

__version__ = "0.1.0"

from .autodiff import Graph, Tensor, gradient_check
from .data import CorruptionSpec, DistributionSpec, SampleSet, corrupt, default_distribution, sample, split
from .metrics import MetricResult, MetricSpec, divergence_computation, evaluate_metric, train_critic
from .models import CriticNetwork, GeneratorModel, TrainConfig, generate, train_toy_gan
from .reference import c2st, fid, fid_samples, gam_ratio, inception_style_score
from .stats import agreement_fraction, fisher_exact_two_sided, rank_table, wilcoxon_rank_sum

__all__ = [
    "Graph", "Tensor", "gradient_check",
    "CorruptionSpec", "DistributionSpec", "SampleSet", "corrupt", "default_distribution", "sample", "split",
    "MetricResult", "MetricSpec", "divergence_computation", "evaluate_metric", "train_critic",
    "CriticNetwork", "GeneratorModel", "TrainConfig", "generate", "train_toy_gan",
    "c2st", "fid", "fid_samples", "gam_ratio", "inception_style_score",
    "agreement_fraction", "fisher_exact_two_sided", "rank_table", "wilcoxon_rank_sum",
]
