"""Shared numerical utilities: Adam, gradient checking, log-sum-exp, 2-D PCA.

All parameters and gradients travel as ``dict[str, np.ndarray]`` keyed by
parameter-group name. Everything is float64 and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError

Params = dict[str, np.ndarray]


def log_sum_exp(x: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Overflow-safe log(sum(exp(x))) along an axis."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out)
    return np.squeeze(out, axis=axis)


@dataclass
class AdamState:
    """Bias-corrected adaptive-moment optimizer state."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_init(params: Params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(state: AdamState, params: Params, grads: Params) -> Params:
    """One in-place Adam update; returns the updated params dict."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in params:
            raise InputError(f"gradient for unknown parameter {name!r}")
        p = params[name]
        if g.shape != p.shape:
            raise InputError(
                f"shape mismatch for {name!r}: param {p.shape}, grad {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def finite_diff_check(
    loss_and_grad,
    params: Params,
    eps: float = 1e-5,
    max_coords_per_array: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad(params) -> (loss, grads)`` must be pure and deterministic.
    With ``max_coords_per_array`` set, only a seeded random subset of each
    array's coordinates is probed.
    """
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    loss0, grads = loss_and_grad(params)
    if not np.isfinite(loss0):
        raise NumericalError("loss is non-finite at the evaluation point")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        g = grads[name]
        flat = p.reshape(-1)
        n = flat.size
        if max_coords_per_array is not None and n > max_coords_per_array:
            coords = rng.choice(n, size=max_coords_per_array, replace=False)
        else:
            coords = range(n)
        gflat = g.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = loss_and_grad(params)[0]
            flat[idx] = orig - eps
            lo = loss_and_grad(params)[0]
            flat[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericalError(f"non-finite loss while perturbing {name!r}")
            numeric = (hi - lo) / (2.0 * eps)
            analytic = gflat[idx]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    return worst


def _power_iteration(cov: np.ndarray, rng: np.random.Generator,
                     n_iter: int = 1000, tol: float = 1e-13) -> tuple[np.ndarray, float]:
    d = cov.shape[0]
    v = rng.normal(size=d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = cov @ v
        norm = np.linalg.norm(w)
        if norm < 1e-14:
            return np.zeros(d), 0.0
        w /= norm
        if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
            v = w
            break
        v = w
    lam = float(v @ cov @ v)
    return v, lam


def pca_2d(matrix: np.ndarray, seed: int = 0) -> np.ndarray:
    """Project rows onto the top-2 principal directions (power iteration).

    Rows are mean-centered first. Eigenvector signs are fixed so the entry of
    largest magnitude is positive, keeping the output reproducible.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("pca_2d needs a matrix with at least 2 rows")
    if not np.all(np.isfinite(x)):
        raise NumericalError("pca_2d input contains non-finite values")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / centered.shape[0]
    if np.max(np.abs(cov)) < 1e-15:
        raise NumericalError("pca_2d input has rank 0 after centering")
    rng = np.random.default_rng(seed)
    v1, lam1 = _power_iteration(cov, rng)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2, lam2 = _power_iteration(deflated, rng)
    if lam2 < 1e-12 * max(lam1, 1.0):
        v2 = np.zeros_like(v1)
    for v in (v1, v2):
        if np.any(v):
            top = np.argmax(np.abs(v))
            if v[top] < 0:
                v *= -1.0
    return centered @ np.stack([v1, v2], axis=1)
