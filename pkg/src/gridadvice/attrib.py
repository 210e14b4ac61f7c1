"""Feature attribution over an opaque scalar function: exact Shapley values
by coalition enumeration, Kernel SHAP estimation, and LIME surrogate
regression.

All explained functions take a 2-D batch of feature rows and return a 1-D
vector of scalars. Masking follows the single-reference convention: absent
features take the background's values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ScalarFn = Callable[[np.ndarray], np.ndarray]


class TooManyFeaturesError(ValueError):
    """Exact enumeration refused; use kernel_shap for this many features."""


class DegeneratePerturbationError(ValueError):
    """All perturbed samples are identical; no surrogate can be fitted."""


@dataclass
class AttributionResult:
    base_value: float
    contributions: np.ndarray
    feature_names: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.contributions = np.asarray(self.contributions, dtype=np.float64)
        if len(self.contributions) != len(self.feature_names):
            raise ValueError("one contribution per feature name required")

    def to_json_dict(self) -> dict:
        return {
            "base_value": self.base_value,
            "feature_names": list(self.feature_names),
            "contributions": self.contributions.tolist(),
            "diagnostics": self.diagnostics,
        }


def _names(names: Optional[Sequence[str]], n: int) -> tuple[str, ...]:
    if names is None:
        return tuple(f"f{i}" for i in range(n))
    if len(names) != n:
        raise ValueError("feature_names length mismatch")
    return tuple(names)


def _masked_inputs(masks: np.ndarray, x: np.ndarray, background: np.ndarray) -> np.ndarray:
    return background + masks * (x - background)


def exact_shapley(
    f: ScalarFn,
    x: np.ndarray,
    background: np.ndarray,
    feature_names: Optional[Sequence[str]] = None,
    max_features: int = 20,
) -> AttributionResult:
    """Exact Shapley values by full coalition enumeration (2^n evaluations)."""
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    n = x.size
    if n > max_features:
        raise TooManyFeaturesError(
            f"{n} features means 2^{n} evaluations; use kernel_shap instead"
        )
    codes = np.arange(2**n, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(n)) & 1).astype(np.float64)
    vals = np.asarray(f(_masked_inputs(masks, x, background)), dtype=np.float64)
    popcount = np.array([bin(c).count("1") for c in range(2**n)], dtype=np.int64)
    # weight of a coalition S (excluding i): |S|! (n-|S|-1)! / n! = 1/(n C(n-1,|S|))
    size_w = np.array([1.0 / (n * math.comb(n - 1, s)) for s in range(n)])

    contributions = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        without = codes[(codes & bit) == 0]
        contributions[i] = np.sum(size_w[popcount[without]] * (vals[without | bit] - vals[without]))

    return AttributionResult(
        base_value=float(vals[0]),
        contributions=contributions,
        feature_names=_names(feature_names, n),
        diagnostics={"evaluations": int(2**n), "method": "exact"},
    )


def _kernel_weight(n: int, s: int) -> float:
    return (n - 1) / (math.comb(n, s) * s * (n - s))


def _solve_constrained_wls(
    masks: np.ndarray, vals: np.ndarray, weights: np.ndarray,
    base: float, delta: float,
) -> tuple[np.ndarray, bool]:
    """Weighted least squares for the additive surrogate with the empty and
    full coalitions pinned (intercept = base, contributions sum to delta).

    The last feature is eliminated through the sum constraint; returns the
    full contribution vector and whether regularization was needed.
    """
    n = masks.shape[1]
    if n == 1:
        return np.array([delta]), False
    t = vals - base - delta * masks[:, -1]
    A = masks[:, :-1] - masks[:, -1:]
    aw = A * weights[:, None]
    gram = aw.T @ A
    rhs = aw.T @ t
    regularized = False
    try:
        head = np.linalg.solve(gram, rhs)
        if not np.isfinite(head).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        regularized = True
        ridge = 1e-10 * max(np.trace(gram) / max(n - 1, 1), 1.0)
        head = np.linalg.solve(gram + ridge * np.eye(n - 1), rhs)
    return np.append(head, delta - head.sum()), regularized


def kernel_shap(
    f: ScalarFn,
    x: np.ndarray,
    background: np.ndarray,
    n_samples: int = 2048,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
) -> AttributionResult:
    """Shapley estimation by the kernel-weighted regression surrogate.

    When the sample budget covers all 2^n - 2 proper coalitions they are
    enumerated with exact kernel weights (the estimate then equals the exact
    Shapley values); otherwise coalitions are sampled proportionally to the
    kernel. Deterministic given the seed.
    """
    x = np.asarray(x, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    n = x.size
    rng = np.random.default_rng(seed)

    base = float(np.asarray(f(background[None, :]))[0])
    fx = float(np.asarray(f(x[None, :]))[0])
    delta = fx - base
    if n == 1:
        return AttributionResult(base, np.array([delta]), _names(feature_names, 1),
                                 {"method": "pinned", "n_samples": 0})

    total = 2**n - 2 if n <= 30 else None
    if total is not None and total <= n_samples:
        codes = np.arange(1, 2**n - 1, dtype=np.int64)
        masks = ((codes[:, None] >> np.arange(n)) & 1).astype(np.float64)
        sizes = masks.sum(axis=1).astype(np.int64)
        weights = np.array([_kernel_weight(n, s) for s in sizes])
        enumerated = True
    else:
        sizes_avail = np.arange(1, n)
        size_p = (n - 1) / (sizes_avail * (n - sizes_avail))
        size_p /= size_p.sum()
        draw_sizes = rng.choice(sizes_avail, size=n_samples, p=size_p)
        masks = np.zeros((n_samples, n))
        for row, s in enumerate(draw_sizes):
            masks[row, rng.permutation(n)[:s]] = 1.0
        # sampling already follows the kernel, so rows carry uniform weight
        weights = np.ones(n_samples)
        enumerated = False

    vals = np.asarray(f(_masked_inputs(masks, x, background)), dtype=np.float64)
    contributions, regularized = _solve_constrained_wls(masks, vals, weights, base, delta)

    diagnostics = {
        "method": "enumerated" if enumerated else "sampled",
        "n_samples": int(masks.shape[0]),
        "regularized": regularized,
    }
    if regularized:
        diagnostics["warning"] = "singular regression system; ridge-regularized solve"
    return AttributionResult(base, contributions, _names(feature_names, n), diagnostics)


def top_k_features(result: AttributionResult, k: int) -> list[tuple[str, float]]:
    """Features sorted by |contribution| descending, name-ascending ties,
    truncated to k."""
    if k < 1 or k > len(result.feature_names):
        raise ValueError(f"k must be in [1, {len(result.feature_names)}]")
    order = sorted(
        zip(result.feature_names, result.contributions),
        key=lambda pair: (-abs(pair[1]), pair[0]),
    )
    return [(name, float(value)) for name, value in order[:k]]


def lime_explain(
    f: ScalarFn,
    x: np.ndarray,
    feature_scales: np.ndarray,
    n_samples: int = 1000,
    kernel_width: Optional[float] = None,
    ridge_lambda: float = 1e-3,
    seed: int = 0,
    binary_mask: Optional[np.ndarray] = None,
    feature_names: Optional[Sequence[str]] = None,
    flip_prob: float = 0.1,
) -> AttributionResult:
    """Local surrogate: Gaussian perturbations (binary features flip with
    probability ``flip_prob``), proximity weights exp(-d^2 / kernel_width^2)
    over the scale-normalized distance, weighted ridge regression.

    Contributions are the surrogate coefficients; diagnostics carry the
    weighted R^2. Underdetermined systems (more features than samples) are
    solved in dual form and flagged, not rejected.
    """
    x = np.asarray(x, dtype=np.float64)
    scales = np.asarray(feature_scales, dtype=np.float64)
    n = x.size
    if scales.shape != x.shape or (scales <= 0).any():
        raise ValueError("feature_scales must be positive, one per feature")
    binary = (
        np.zeros(n, dtype=bool) if binary_mask is None
        else np.asarray(binary_mask, dtype=bool)
    )
    if kernel_width is None:
        kernel_width = 0.75 * math.sqrt(n)
    rng = np.random.default_rng(seed)

    X = np.tile(x, (n_samples, 1))
    cont = ~binary
    X[:, cont] += rng.normal(0.0, scales[cont], size=(n_samples, int(cont.sum())))
    if binary.any():
        flips = rng.random((n_samples, int(binary.sum()))) < flip_prob
        block = X[:, binary]
        block[flips] = 1.0 - block[flips]
        X[:, binary] = block
    if np.ptp(X, axis=0).max() == 0.0:
        raise DegeneratePerturbationError("all perturbed samples are identical")

    y = np.asarray(f(X), dtype=np.float64)
    d2 = (((X - x) / scales) ** 2).sum(axis=1)
    w = np.exp(-d2 / kernel_width**2)

    wsum = w.sum()
    xm = (w[:, None] * X).sum(axis=0) / wsum
    ym = float((w * y).sum() / wsum)
    Xc = X - xm
    yc = y - ym
    sw = np.sqrt(w)
    A = sw[:, None] * Xc
    b = sw * yc
    underdetermined = n > n_samples
    if underdetermined:
        coef = A.T @ np.linalg.solve(A @ A.T + ridge_lambda * np.eye(n_samples), b)
    else:
        coef = np.linalg.solve(A.T @ A + ridge_lambda * np.eye(n), A.T @ b)
    intercept = ym - float(xm @ coef)

    pred = X @ coef + intercept
    ss_res = float((w * (y - pred) ** 2).sum())
    ss_tot = float((w * yc**2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    return AttributionResult(
        base_value=intercept,
        contributions=coef,
        feature_names=_names(feature_names, n),
        diagnostics={
            "method": "lime",
            "n_samples": n_samples,
            "weighted_r2": r2,
            "kernel_width": kernel_width,
            "underdetermined": underdetermined,
        },
    )
