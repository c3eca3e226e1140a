from .autodiff_nn import AdamState, Gradients, GradTape, Mlp, adam_step, backward, forward, init_mlp, predict
from .policies import (
    EvaluationResult,
    GreedyPolicy,
    IdlePolicy,
    PpoPolicy,
    RandomPolicy,
    RunRecord,
    SchedulingPolicy,
    build_policy,
    evaluate,
    greedy_policy,
    idle_policy,
    random_policy,
    policy_rng,
    run_episode,
    truth_seed,
)
from .ppo import (
    IterationStats,
    LossDiagnostics,
    PpoLossResult,
    RolloutBatch,
    TrainResult,
    categorical_entropy,
    compute_gae,
    log_softmax,
    normalize_advantages,
    ppo_loss,
    train,
)

__all__ = [
    "AdamState", "Gradients", "GradTape", "Mlp", "adam_step", "backward", "forward", "init_mlp", "predict",
    "EvaluationResult", "GreedyPolicy", "IdlePolicy", "PpoPolicy", "RandomPolicy", "RunRecord",
    "SchedulingPolicy", "build_policy", "evaluate", "greedy_policy", "idle_policy", "random_policy",
    "policy_rng", "run_episode", "truth_seed",
    "IterationStats", "LossDiagnostics", "PpoLossResult", "RolloutBatch", "TrainResult",
    "categorical_entropy", "compute_gae", "log_softmax", "normalize_advantages", "ppo_loss", "train",
]
