"""Disentangled state-space models trained as variational Bayesian filters."""

from ._dssm import (
    DSSMConfig,
    DSSMModel,
    Likelihood,
    Mode,
    TrainSchedule,
    cluster_separation,
    dependency_matrix,
    disentanglement_score,
    domain_mean,
    generate,
    lv_benchmark,
    predict,
    prediction_mse,
    read_dsq,
    simulate_ball,
    simulate_lv,
    swap_domain,
    train,
    write_dsq,
)

__all__ = [
    "DSSMConfig",
    "DSSMModel",
    "Likelihood",
    "Mode",
    "TrainSchedule",
    "cluster_separation",
    "dependency_matrix",
    "disentanglement_score",
    "domain_mean",
    "generate",
    "lv_benchmark",
    "predict",
    "prediction_mse",
    "read_dsq",
    "simulate_ball",
    "simulate_lv",
    "swap_domain",
    "train",
    "write_dsq",
]
