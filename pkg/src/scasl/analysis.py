"""Operator-norm amplification of per-layer truncation noise.

Each weight matrix amplifies an input-side disturbance by at most its
largest singular value; tanh-family activations are 1-Lipschitz and add
nothing in the worst case. Noise injected at layer i therefore reaches
the output amplified by at most the product of the norms of layers
i..k-1, and since stochastic truncation noise shrinks like 1/L, the
worst-case output disturbance from layer i at length L is that product
divided by L. Normalizing the accumulated factors gives a theoretical
per-layer importance ranking.
"""

from dataclasses import dataclass

import numpy as np

from .model import MlpModel, forward_fp

DEFAULT_BOUND_LENGTHS = (64, 128, 256, 512, 1024)


class PowerIterationError(RuntimeError):
    """Non-convergence; carries the last singular-value iterate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


def operator_norm(w, tol: float = 1e-9, max_iter: int = 10000,
                  seed: int = 0) -> float:
    """Largest singular value via power iteration on W^T W.

    Iterates the Gram operator on its smaller side and stops when the
    singular-value estimate moves by less than ``tol`` relatively between
    iterations. Deterministically seeded; restarts from a fresh vector if
    the iterate lands in the null space.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.size == 0:
        raise ValueError("operator_norm expects a nonempty matrix")
    if not w.any():
        return 0.0
    on_columns = w.shape[1] <= w.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(min(w.shape))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = w.T @ (w @ v) if on_columns else w @ (w.T @ v)
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            v = rng.standard_normal(v.size)
            v /= np.linalg.norm(v)
            est = 0.0
            continue
        v = u / norm
        new_est = float(np.sqrt(norm))
        if est > 0.0 and abs(new_est - est) <= tol * est:
            return new_est
        est = new_est
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations", est)


@dataclass
class AmplificationReport:
    """Per-layer norms, accumulated products, and normalized importance."""

    layer_norms: list
    accumulated: list
    importance: list
    bound_at_length: dict

    def csv_rows(self):
        yield ("layer", "norm", "accumulated", "importance")
        for i, (f, fa, imp) in enumerate(zip(
                self.layer_norms, self.accumulated, self.importance), 1):
            yield (i, f"{f:.10g}", f"{fa:.10g}", f"{imp:.10g}")


def accumulate_norms(layer_norms) -> list:
    """Suffix products: entry i is the product of norms from layer i on."""
    out = []
    acc = 1.0
    for f in reversed(list(layer_norms)):
        acc *= f
        out.append(acc)
    return out[::-1]


def amplification(model: MlpModel,
                  lengths=DEFAULT_BOUND_LENGTHS) -> AmplificationReport:
    """Amplification factors for every computing layer of a model.

    ``bound_at_length[L][i]`` bounds the output-noise amplitude caused by
    injecting 1/L-scale truncation noise at layer i+1.
    """
    norms = [operator_norm(w) for w in model.weights]
    acc = accumulate_norms(norms)
    total = sum(acc)
    importance = [a / total for a in acc]
    bounds = {int(length): [a / length for a in acc] for length in lengths}
    return AmplificationReport(norms, acc, importance, bounds)


def theoretical_importance(layer_norms) -> list:
    """Normalized suffix-product importances for given per-layer norms."""
    acc = accumulate_norms(layer_norms)
    total = sum(acc)
    return [a / total for a in acc]


def measure_perturbation_gain(model: MlpModel, x, layer: int,
                              noise_scale: float = 1e-3, trials: int = 20,
                              seed: int = 0) -> float:
    """Empirical noise gain from weights of one layer to the logits.

    Per trial, a zero-mean uniform perturbation R of amplitude
    ``noise_scale`` is added to the layer's weight matrix and the ratio
    ||logits' - logits|| / ||R y_in|| is recorded, where y_in is the
    layer's input activation; ``R y_in`` is the disturbance the layer
    injects before any downstream amplification. Returns the mean ratio
    over valid trials. Trials whose injected effect is numerically zero
    are skipped (degenerate activations are reported, not fatal).
    """
    if not 0 <= layer < len(model.weights):
        raise ValueError(f"layer index {layer} out of range")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    logits, outputs = forward_fp(model, x)
    y_in = x if layer == 0 else outputs[layer - 1]

    ratios = []
    w64 = model.weights[layer].astype(np.float64)
    for _ in range(trials):
        r = rng.uniform(-noise_scale, noise_scale,
                        size=model.weights[layer].shape)
        w_perturbed = (w64 + r).astype(np.float32)
        # measure against the perturbation actually applied after rounding
        injected = np.linalg.norm(
            (w_perturbed.astype(np.float64) - w64) @ y_in)
        if injected < 1e-300:
            continue
        perturbed = [w.copy() for w in model.weights]
        perturbed[layer] = w_perturbed
        p_model = MlpModel(perturbed, biases=model.biases,
                           activation=model.activation)
        p_logits, _ = forward_fp(p_model, x)
        ratios.append(float(np.linalg.norm(p_logits - logits) / injected))
    if not ratios:
        raise ValueError("all trials degenerate: zero injected effect")
    return float(np.mean(ratios))
