"""CSV emission for evaluation results and learning curves."""

from typing import List, Sequence, Tuple

from ..errors import UsageError
from ..learning.policies import EvaluationResult
from ..learning.ppo import IterationStats
from ..storage_system.storage import ResultStorage

SUMMARY_COLUMNS = ("policy", "variation", "mean_objective", "std_objective", "mean_trace_final",
                   "mean_energy_total", "n_runs", "seed")
TRACE_COLUMNS = ("policy", "variation", "k", "mean_trace", "mean_energy")
CURVE_COLUMNS = ("iteration", "env_steps", "mean_episode_reward", "policy_loss", "value_loss", "entropy",
                 "approx_kl", "clip_fraction", "grad_norm")


def summary_row(variation: str, result: EvaluationResult) -> dict:
    return {
        "policy": result.policy,
        "variation": variation,
        "mean_objective": result.mean_objective,
        "std_objective": result.std_objective,
        "mean_trace_final": result.mean_trace_final,
        "mean_energy_total": result.mean_energy_total,
        "n_runs": result.n_runs,
        "seed": result.seed,
    }


def emit_summary(results: Sequence[Tuple[str, EvaluationResult]], storage: ResultStorage,
                 name: str = "summary.csv") -> str:
    """
    Write one row per (policy, variation).

    Raises:
        UsageError: no completed runs
        StorageError: the file cannot be written
    """
    if not results or any(r.n_runs < 1 for _, r in results):
        raise UsageError("emit_summary needs at least one completed run")
    return storage.write_rows(name, SUMMARY_COLUMNS, [summary_row(v, r) for v, r in results])


def emit_traces(results: Sequence[Tuple[str, EvaluationResult]], storage: ResultStorage,
                name: str = "traces.csv") -> str:
    """Per-step run averages of trace(P_k) and transmission energy."""
    rows: List[dict] = []
    for variation, result in results:
        traces, energies = result.mean_trace_curve(), result.mean_energy_curve()
        for k, (trace, energy) in enumerate(zip(traces, energies), start=1):
            rows.append({"policy": result.policy, "variation": variation, "k": k,
                         "mean_trace": trace, "mean_energy": energy})
    return storage.write_rows(name, TRACE_COLUMNS, rows)


def emit_learning_curve(curve: Sequence[IterationStats], storage: ResultStorage,
                        name: str = "learning_curve.csv") -> str:
    return storage.write_rows(name, CURVE_COLUMNS, [stats.row() for stats in curve])
