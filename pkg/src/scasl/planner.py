"""Length-plan selection: savings formulas, the coarse rule, and the
fine-grained constrained search over sweep records.

Latency of the pipelined design is proportional to the total stream
length and independent of layer widths (all neurons of a layer run in
parallel); energy additionally weighs each layer's length by its number
of multiply-accumulate lanes (n_i * n_{i+1}). Savings are expressed
against a uniform base-length run of the same network.
"""

from dataclasses import dataclass

from .scinfer import LengthConfig


@dataclass(frozen=True)
class CostReport:
    saving_latency: float
    saving_energy: float
    cycles: int
    score: float
    alpha: float


@dataclass(frozen=True)
class PlanResult:
    config: LengthConfig
    cost: CostReport
    accuracy_loss: float
    threshold: float
    feasible: bool


def saving_latency(config: LengthConfig) -> float:
    """1 - sum(L_i) / ((k-1) * L); independent of layer sizes."""
    k1 = len(config.lengths)
    return 1.0 - sum(config.lengths) / (k1 * config.base_length)


def saving_energy(config: LengthConfig, layer_sizes) -> float:
    """1 - sum(L_i n_i n_{i+1}) / sum(L n_i n_{i+1})."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) != len(config.lengths) + 1:
        raise ValueError(
            f"{len(sizes)} layer sizes for {len(config.lengths)} lengths")
    lanes = [a * b for a, b in zip(sizes, sizes[1:])]
    truncated = sum(l * m for l, m in zip(config.lengths, lanes))
    full = config.base_length * sum(lanes)
    return 1.0 - truncated / full


def cycles(config: LengthConfig) -> int:
    """Total pipeline cycles: sum(L_i) + (k-1) fill cycles."""
    return config.cycles


def score(saving_e: float, saving_l: float, alpha: float = 0.5) -> float:
    """alpha-weighted combination of energy and latency savings."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    return alpha * saving_e + (1.0 - alpha) * saving_l


def cost_report(config: LengthConfig, layer_sizes,
                alpha: float = 0.5) -> CostReport:
    se = saving_energy(config, layer_sizes)
    sl = saving_latency(config)
    return CostReport(saving_latency=sl, saving_energy=se,
                      cycles=config.cycles, score=score(se, sl, alpha),
                      alpha=alpha)


def plan_coarse(base_length: int, num_layers: int) -> LengthConfig:
    """General-purpose rule: [L, L/2, L/4, ..., L/4].

    Keeps the full length at the most sensitive first layer, halves the
    second, and quarters the rest.
    """
    if base_length < 4:
        raise ValueError("coarse rule needs a base length >= 4")
    if num_layers < 3:
        raise ValueError("coarse rule needs k >= 3")
    lengths = [base_length, base_length // 2]
    lengths += [base_length // 4] * (num_layers - 3)
    return LengthConfig(tuple(lengths[:num_layers - 1]), base_length)


def plan_fine(records, layer_sizes, base_length: int, threshold: float,
              alpha: float = 0.5) -> PlanResult:
    """Best-scoring configuration with accuracy loss under the threshold.

    Ties break toward higher latency saving, then lexicographically
    larger lengths (earliest layer first), so the search is deterministic
    and conservative about early-layer truncation. When nothing meets the
    threshold, the result is marked infeasible and carries the
    best-accuracy configuration instead.
    """
    if not records:
        raise ValueError("plan_fine needs at least one sweep record")
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")

    def key(record):
        cfg = LengthConfig(record.lengths, base_length)
        se = saving_energy(cfg, layer_sizes)
        sl = saving_latency(cfg)
        return (score(se, sl, alpha), sl, record.lengths)

    feasible = [r for r in records if r.accuracy_loss < threshold]
    if feasible:
        best = max(feasible, key=key)
        ok = True
    else:
        best = max(records, key=lambda r: (r.accuracy, key(r)))
        ok = False
    cfg = LengthConfig(best.lengths, base_length)
    return PlanResult(config=cfg,
                      cost=cost_report(cfg, layer_sizes, alpha),
                      accuracy_loss=best.accuracy_loss,
                      threshold=threshold, feasible=ok)
