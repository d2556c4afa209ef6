"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved in the compact form over ``beta_i`` (the difference of
the classic paired multipliers):

    maximize  W(beta) = y.beta - 0.5 beta.K.beta - epsilon * |beta|_1
    subject to  sum(beta) = 0,  -C <= beta_i <= C

by sequential minimal optimization: each iteration picks the maximal
violating pair (steepest feasible ascent up-index against down-index)
and solves the 1-D subproblem along ``e_i - e_j`` exactly.  The
subproblem objective is piecewise-quadratic and concave, with kinks
where a coefficient crosses zero, so the exact maximizer is found by
checking each piece.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .data import DataFormatError, make_folds, rmse

__all__ = [
    "SvrConfig",
    "SvrDiagnostics",
    "SvrModel",
    "GridCell",
    "DEFAULT_C_GRID",
    "DEFAULT_SIGMA_GRID",
    "rbf_kernel",
    "rbf_kernel_matrix",
    "svr_fit",
    "svr_predict",
    "svr_predict_batch",
    "dual_objective",
    "kkt_gap",
    "grid_search",
    "save_svr",
    "load_svr",
]

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_SIGMA_GRID = (0.1, 0.3, 1.0, 3.0, 10.0)

_SVR_MAGIC = b"SVRM"
_SVR_VERSION = 1


@dataclass(frozen=True)
class SvrConfig:
    """Hyperparameters of one support vector regression fit."""

    c: float = 10.0
    sigma: float = 1.0
    epsilon: float = 0.05
    tol: float = 1e-3
    max_passes: int = 10000

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be positive")


@dataclass(frozen=True)
class SvrDiagnostics:
    """Solver outcome: convergence flag, iterations used, final KKT gap."""

    converged: bool
    iterations: int
    kkt_gap: float
    dual: np.ndarray  # full coefficient vector over the training set


@dataclass(frozen=True)
class SvrModel:
    """A fitted regressor: support vectors, their coefficients, and the bias."""

    support_vectors: np.ndarray  # (m, dim)
    dual_coefs: np.ndarray  # (m,)
    bias: float
    sigma: float
    diagnostics: SvrDiagnostics | None = None

    def __post_init__(self) -> None:
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefs", coefs)
        if sv.ndim != 2 or coefs.shape != (sv.shape[0],):
            raise ValueError("support vectors and coefficients disagree in shape")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


class GridCell(NamedTuple):
    c: float
    sigma: float
    mean_rmse: float


def rbf_kernel(u: np.ndarray, v: np.ndarray, sigma: float) -> float:
    """``exp(-|u - v|^2 / (2 sigma^2))``; equals 1 exactly when u is v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"kernel inputs must be equal-length vectors, got {u.shape} vs {v.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    diff = u - v
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma * sigma)))


def rbf_kernel_matrix(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Pairwise kernel values between the rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"row dimensions disagree: {a.shape} vs {b.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-sq / (2.0 * sigma * sigma))


def dual_objective(kernel: np.ndarray, y: np.ndarray, beta: np.ndarray,
                   epsilon: float) -> float:
    """Value of the concave dual objective at ``beta``."""
    return float(
        y @ beta - 0.5 * beta @ kernel @ beta - epsilon * np.abs(beta).sum()
    )


def _ascent_values(e: np.ndarray, beta: np.ndarray, epsilon: float,
                   c: float) -> tuple[np.ndarray, np.ndarray]:
    """Directional derivatives for raising (up) or lowering (down) each beta.

    Entries whose move would leave the box are masked with -inf / +inf.
    """
    up = np.where(beta >= 0.0, e - epsilon, e + epsilon)
    down = np.where(beta <= 0.0, e + epsilon, e - epsilon)
    up[beta >= c] = -np.inf
    down[beta <= -c] = np.inf
    return up, down


def kkt_gap(kernel: np.ndarray, y: np.ndarray, beta: np.ndarray,
            cfg: SvrConfig) -> float:
    """Largest feasible ascent-direction gap; <= tol at an optimal point.

    This is a direct check over all samples, independent of any solver
    state: it recomputes the residuals from scratch.
    """
    e = np.asarray(y, dtype=np.float64) - kernel @ beta
    up, down = _ascent_values(e, beta, cfg.epsilon, cfg.c)
    return float(up.max() - down.min())


def _solve_pair(ei: float, ej: float, bi: float, bj: float, eta: float,
                epsilon: float, c: float) -> float:
    """Exact maximizer of the 1-D subproblem along ``e_i - e_j``.

    phi(t) = t (ei - ej) - 0.5 eta t^2
             - epsilon (|bi + t| - |bi|) - epsilon (|bj - t| - |bj|)
    over t in [0, t_max].  Concave and piecewise quadratic; kinks occur
    where ``bi + t`` or ``bj - t`` crosses zero.
    """
    t_max = min(c - bi, bj + c)
    if t_max <= 0.0:
        return 0.0

    def phi(t: float) -> float:
        return (
            t * (ei - ej)
            - 0.5 * eta * t * t
            - epsilon * (abs(bi + t) - abs(bi))
            - epsilon * (abs(bj - t) - abs(bj))
        )

    kinks = [t for t in (-bi, bj) if 0.0 < t < t_max]
    edges = sorted({0.0, t_max, *kinks})
    candidates = set(edges)
    if eta > 0.0:
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            sign_i = 1.0 if bi + mid >= 0.0 else -1.0
            sign_j = 1.0 if bj - mid > 0.0 else -1.0
            stationary = (ei - ej - epsilon * sign_i + epsilon * sign_j) / eta
            candidates.add(min(max(stationary, lo), hi))
    best = max(candidates, key=phi)
    return best if phi(best) > 0.0 else 0.0


def _snap(beta: np.ndarray, c: float) -> None:
    tol = 1e-12 * max(1.0, c)
    beta[np.abs(beta) < tol] = 0.0
    beta[np.abs(beta - c) < tol] = c
    beta[np.abs(beta + c) < tol] = -c


def svr_fit(features: np.ndarray, targets: np.ndarray, cfg: SvrConfig) -> SvrModel:
    """Solve the epsilon-SVR dual by maximal-violating-pair SMO.

    Runs until the KKT gap drops to ``cfg.tol`` or ``cfg.max_passes`` pair
    updates have been taken; non-convergence is reported through the
    model diagnostics rather than raised.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"need (n, dim) features with (n,) targets, got {x.shape}, {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")

    n = x.shape[0]
    kernel = rbf_kernel_matrix(x, x, cfg.sigma)
    np.fill_diagonal(kernel, 1.0)
    beta = np.zeros(n)
    converged = False
    iterations = 0
    gap = np.inf
    for iterations in range(1, cfg.max_passes + 1):
        e = y - kernel @ beta
        up, down = _ascent_values(e, beta, cfg.epsilon, cfg.c)
        i = int(np.argmax(up))
        j = int(np.argmin(down))
        gap = float(up[i] - down[j])
        if gap <= cfg.tol:
            converged = True
            iterations -= 1
            break
        eta = float(kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j])
        step = _solve_pair(
            float(e[i]), float(e[j]), float(beta[i]), float(beta[j]),
            eta, cfg.epsilon, cfg.c,
        )
        if step <= 0.0:
            break  # numerically stalled; report the remaining gap
        beta[i] += step
        beta[j] -= step
        _snap(beta, cfg.c)

    e = y - kernel @ beta
    if not converged:
        up, down = _ascent_values(e, beta, cfg.epsilon, cfg.c)
        gap = float(up.max() - down.min())
    free = (beta != 0.0) & (np.abs(beta) != cfg.c)
    if np.any(free):
        bias = float(np.mean(e[free] - cfg.epsilon * np.sign(beta[free])))
    else:
        up, down = _ascent_values(e, beta, cfg.epsilon, cfg.c)
        hi = float(up.max())
        lo = float(down.min())
        if not np.isfinite(hi):
            hi = lo
        if not np.isfinite(lo):
            lo = hi
        bias = 0.5 * (hi + lo)

    support = beta != 0.0
    diagnostics = SvrDiagnostics(
        converged=converged,
        iterations=iterations,
        kkt_gap=gap,
        dual=beta.copy(),
    )
    return SvrModel(
        support_vectors=x[support].copy(),
        dual_coefs=beta[support].copy(),
        bias=bias,
        sigma=cfg.sigma,
        diagnostics=diagnostics,
    )


def svr_predict(model: SvrModel, x: np.ndarray) -> float:
    """Predict one target value for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if model.support_vectors.shape[0] == 0:
        return model.bias
    if x.shape != (model.support_vectors.shape[1],):
        raise ValueError(
            f"expected {model.support_vectors.shape[1]}-vector, got shape {x.shape}"
        )
    sq = ((model.support_vectors - x) ** 2).sum(axis=1)
    k_row = np.exp(-sq / (2.0 * model.sigma * model.sigma))
    return float(np.dot(k_row, model.dual_coefs) + model.bias)


def svr_predict_batch(model: SvrModel, features: np.ndarray) -> np.ndarray:
    """Predict each row of ``(n, dim)``; row ``i`` equals ``svr_predict(row_i)``."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"expected (n, dim) features, got {features.shape}")
    return np.array([svr_predict(model, row) for row in features])


def grid_search(
    features: np.ndarray,
    targets: np.ndarray,
    base: SvrConfig = SvrConfig(),
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    k: int = 3,
    seed: int = 0,
) -> tuple[SvrConfig, list[GridCell]]:
    """Pick ``(c, sigma)`` by k-fold cross-validated RMSE over a grid.

    Cells are visited in ascending ``(c, sigma)`` order and compared
    strictly, so exact ties resolve to the smallest ``c`` and then the
    smallest ``sigma``.  A cell whose fit raises scores +inf.

    Returns the winning config and the full score table.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"need (n, dim) features with (n,) targets, got {x.shape}, {y.shape}")
    if not c_grid or not sigma_grid:
        raise ValueError("grids must be non-empty")
    folds = make_folds(x.shape[0], k, seed)
    table: list[GridCell] = []
    best: GridCell | None = None
    for c in sorted(c_grid):
        for sigma in sorted(sigma_grid):
            scores = []
            try:
                cfg = replace(base, c=float(c), sigma=float(sigma))
                for fold in range(folds.k):
                    train_idx = folds.train_indices(fold)
                    val_idx = folds.val_indices(fold)
                    model = svr_fit(x[train_idx], y[train_idx], cfg)
                    preds = svr_predict_batch(model, x[val_idx])
                    scores.append(rmse(preds, y[val_idx]))
            except ValueError:
                scores = [np.inf]
            cell = GridCell(float(c), float(sigma), float(np.mean(scores)))
            table.append(cell)
            if best is None or cell.mean_rmse < best.mean_rmse:
                best = cell
    chosen = replace(base, c=best.c, sigma=best.sigma)
    return chosen, table


def save_svr(path, model: SvrModel) -> None:
    """Serialize a fitted regressor (little-endian, float64 payload)."""
    from .cubeio import open_binary

    sv = np.ascontiguousarray(model.support_vectors, dtype="<f8")
    coefs = np.ascontiguousarray(model.dual_coefs, dtype="<f8")
    with open_binary(path, "wb") as fh:
        fh.write(_SVR_MAGIC)
        fh.write(struct.pack("<I", _SVR_VERSION))
        fh.write(struct.pack("<ddII", model.sigma, model.bias,
                             sv.shape[0], sv.shape[1]))
        fh.write(coefs.tobytes())
        fh.write(sv.tobytes())


def load_svr(path) -> SvrModel:
    """Read a regressor written by :func:`save_svr` (diagnostics are not kept)."""
    from .cubeio import open_binary

    with open_binary(path, "rb") as fh:
        raw = fh.read()
    header = struct.Struct("<4sIddII")
    if len(raw) < header.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, sigma, bias, count, dim = header.unpack_from(raw)
    if magic != _SVR_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != _SVR_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = header.size + count * 8 + count * dim * 8
    if len(raw) != expected:
        raise DataFormatError(f"{path}: payload size {len(raw)} != expected {expected}")
    offset = header.size
    coefs = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).copy()
    offset += count * 8
    sv = np.frombuffer(raw, dtype="<f8", count=count * dim, offset=offset).copy()
    if not (np.all(np.isfinite(coefs)) and np.all(np.isfinite(sv)) and
            np.isfinite(sigma) and np.isfinite(bias) and sigma > 0):
        raise DataFormatError(f"{path}: non-finite or invalid payload")
    return SvrModel(
        support_vectors=sv.reshape(count, dim),
        dual_coefs=coefs,
        bias=float(bias),
        sigma=float(sigma),
        diagnostics=None,
    )
