"""Component ablation and weight-sensitivity sweeps over seeded training runs.

The ablation trains three configurations that differ only in the MI pathway:
no MI term at all, MI at a fixed base weight (beta = 0), and MI with the
adaptive difficulty weighting. Reports carry one row per (config, seed) plus
a median row per config.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from ..config import RunConfig
from ..runner import evaluate_model, run_training

ABLATION_CONFIGS = ("baseline", "mim", "amim")


class AblationError(ValueError):
    pass


@dataclass
class RunRow:
    config: str
    lambda_base: float
    beta: float
    seed: int | str
    success_auc: float
    precision: float


def _variant(cfg: RunConfig, name: str) -> RunConfig:
    if name == "baseline":
        return cfg.replace_train(mi_enabled=False)
    if name == "mim":
        return cfg.replace_train(mi_enabled=True, beta=0.0)
    if name == "amim":
        return cfg.replace_train(mi_enabled=True)
    raise AblationError(f"unknown ablation configuration {name!r}")


def _run_one(cfg: RunConfig, seed: int, progress=None) -> tuple[float, float]:
    run_cfg = cfg.replace_train(seed=seed)
    result = run_training(run_cfg, progress=progress)
    ev = evaluate_model(result.model, run_cfg)
    return ev.success_auc, ev.precision


def run_ablation(
    cfg: RunConfig,
    seeds: list[int],
    configs: tuple[str, ...] = ABLATION_CONFIGS,
    progress=None,
) -> list[RunRow]:
    """Train every configuration on every seed; appends median rows per config."""
    if not seeds:
        raise AblationError("run_ablation: no seeds given")
    if not configs:
        raise AblationError("run_ablation: empty configuration grid")
    rows: list[RunRow] = []
    for name in configs:
        variant = _variant(cfg, name)
        per_seed: list[RunRow] = []
        for seed in seeds:
            succ, prec = _run_one(variant, seed, progress=progress)
            per_seed.append(
                RunRow(
                    config=name,
                    lambda_base=variant.train.lambda_base,
                    beta=variant.train.beta,
                    seed=seed,
                    success_auc=succ,
                    precision=prec,
                )
            )
        rows.extend(per_seed)
        rows.append(
            RunRow(
                config=name,
                lambda_base=variant.train.lambda_base,
                beta=variant.train.beta,
                seed="median",
                success_auc=statistics.median(r.success_auc for r in per_seed),
                precision=statistics.median(r.precision for r in per_seed),
            )
        )
    return rows


def default_sweep_grid() -> list[tuple[float, float]]:
    """(lambda_base, beta) pairs: base-weight scan at beta 0, then beta scan."""
    grid = [(0.01, 0.0), (0.1, 0.0), (1.0, 0.0)]
    grid += [(0.1, b) for b in (0.1, 0.3, 0.5, 0.7, 0.9)]
    return grid


def run_sweep(
    cfg: RunConfig,
    grid: list[tuple[float, float]],
    seeds: list[int],
    progress=None,
) -> list[RunRow]:
    """Train each (lambda_base, beta) cell on every seed; rows plus medians."""
    if not grid:
        raise AblationError("run_sweep: empty configuration grid")
    if not seeds:
        raise AblationError("run_sweep: no seeds given")
    rows: list[RunRow] = []
    for lambda_base, beta in grid:
        cell = cfg.replace_train(mi_enabled=True, lambda_base=lambda_base, beta=beta)
        name = f"lb{lambda_base}_b{beta}"
        per_seed: list[RunRow] = []
        for seed in seeds:
            succ, prec = _run_one(cell, seed, progress=progress)
            per_seed.append(
                RunRow(
                    config=name,
                    lambda_base=lambda_base,
                    beta=beta,
                    seed=seed,
                    success_auc=succ,
                    precision=prec,
                )
            )
        rows.extend(per_seed)
        rows.append(
            RunRow(
                config=name,
                lambda_base=lambda_base,
                beta=beta,
                seed="median",
                success_auc=statistics.median(r.success_auc for r in per_seed),
                precision=statistics.median(r.precision for r in per_seed),
            )
        )
    return rows


def rows_to_csv(rows: list[RunRow]) -> str:
    lines = ["config,lambda_base,beta,seed,success_auc,precision"]
    for r in rows:
        lines.append(
            f"{r.config},{r.lambda_base!r},{r.beta!r},{r.seed},"
            f"{r.success_auc!r},{r.precision!r}"
        )
    return "\n".join(lines) + "\n"
