"""Closed-form per-frame subproblem solvers.

Every per-pixel routine accepts scalars or equally shaped arrays and works
elementwise, so the same function serves both the scalar contract and the
vectorized sweep over a frame.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import SolverConfig, Variant


class InvalidInputError(ValueError):
    pass


class DegenerateSystemError(ArithmeticError):
    pass


# w is mathematically in (0, 1]; keep it away from an exact 0 after exp underflow
_W_FLOOR = np.finfo(float).tiny


@dataclasses.dataclass
class FrameState:
    """Working set of one frame: weights, coefficients, multipliers,
    Laplacian variables, foreground and background."""

    w: np.ndarray
    v: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    l: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return self.b * self.alpha

    @classmethod
    def initial(cls, p: int, r: int, l: np.ndarray | None = None, v: np.ndarray | None = None) -> "FrameState":
        return cls(
            w=np.ones(p),
            v=np.zeros(r) if v is None else np.array(v, dtype=float),
            b=np.zeros(p),
            alpha=np.zeros(p),
            l=np.zeros(p) if l is None else np.array(l, dtype=float),
        )

    def copy(self) -> "FrameState":
        return FrameState(self.w.copy(), self.v.copy(), self.b.copy(), self.alpha.copy(), self.l.copy())


def soft_threshold(x, tau):
    """Proximal operator of ``tau * |x|``."""
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def _check_finite(name: str, x) -> None:
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        idx = int(np.flatnonzero(~np.isfinite(x.ravel()))[0])
        raise InvalidInputError(f"{name} has a non-finite entry at index {idx}")


def compute_weights(d, l, s, sigma: float) -> np.ndarray:
    """Half-quadratic weights: square root of the Gaussian kernel of the residual."""
    for name, x in (("d", d), ("l", l), ("s", s)):
        _check_finite(name, x)
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")
    e = np.asarray(d, dtype=float) - l - s
    return np.maximum(np.exp(-(e * e) / (4.0 * sigma * sigma)), _W_FLOOR)


def solve_coefficients(U: np.ndarray, w, d, s, eta: float, sigma_w2: float) -> np.ndarray:
    """Weighted ridge regression of ``d - s`` on the columns of ``U``.

    Returns ``[U^T W^2 U + eta*sigma_w2*I]^{-1} U^T W^2 (d - s)``.
    """
    U = np.asarray(U, dtype=float)
    w2 = np.asarray(w, dtype=float) ** 2
    Uw = U * w2[:, None]
    A = Uw.T @ U
    ridge = eta * sigma_w2
    if ridge:
        A[np.diag_indices_from(A)] += ridge
    rhs = Uw.T @ (np.asarray(d, dtype=float) - s)
    try:
        # Cholesky is fine for ridge > 0; a zero ridge may leave A only semidefinite
        if ridge > 0:
            c = np.linalg.cholesky(A)
            return _cho_solve(c, rhs)
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSystemError(f"coefficient system is singular: {exc}") from None


def _cho_solve(c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular

    y = solve_triangular(c, rhs, lower=True, check_finite=False)
    return solve_triangular(c.T, y, lower=False, check_finite=False)


def b_objective(b, w, y, alpha, sigma_w2: float, eps: float):
    """Per-pixel multiplier objective ``(sqrt(w)(y - b*alpha))^2 + 4 sigma_w2 log(b + eps)``."""
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("multiplier b must be >= 0")
    r = y - b * alpha
    out = w * r * r + 4.0 * sigma_w2 * np.log(b + eps)
    return out if out.ndim else float(out)


def solve_multiplier(w, y, alpha, sigma_w2: float, eps: float):
    """Global minimizer over ``b >= 0`` of :func:`b_objective`.

    The stationary points solve ``2a b^2 + (2a eps + h) b + (h eps + q) = 0``
    with ``a = w alpha^2``, ``h = -2 w y alpha``, ``q = 4 sigma_w2``; the
    nonnegative ones compete with the boundary ``b = 0``.
    """
    w, y, alpha = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (w, y, alpha)))
    scalar = w.ndim == 0
    w, y, alpha = np.atleast_1d(w), np.atleast_1d(y), np.atleast_1d(alpha)
    a = w * alpha * alpha
    h = -2.0 * w * y * alpha
    q = 4.0 * sigma_w2
    out = np.zeros_like(a)
    live = a > 0
    if np.any(live):
        # a tiny alpha overflows the roots; those pixels keep b = 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            a_, h_, w_, y_, al_ = a[live], h[live], w[live], y[live], alpha[live]
            half = (2.0 * a_ * eps + h_) / (4.0 * a_)
            c = (h_ * eps + q) / (2.0 * a_)
            disc = half * half - c
            real = np.isfinite(disc) & (disc >= 0)
            sq = np.sqrt(np.where(real, disc, 0.0))
            # stable quadratic roots of b^2 + 2*half*b + c
            big = -half - np.where(half >= 0, sq, -sq)
            small = np.where(big != 0, c / big, 0.0)
            best = np.zeros_like(a_)
            fbest = w_ * y_ * y_ + q * np.log(eps)
            for root in (big, small):
                ok = real & (root >= 0)
                cand = np.where(ok, root, 0.0)
                res = y_ - cand * al_
                f = w_ * res * res + q * np.log(cand + eps)
                take = ok & (f < fbest)
                best = np.where(take, cand, best)
                fbest = np.where(take, f, fbest)
            out[live] = best
    return float(out[0]) if scalar else out


def laplacian_objective(alpha, w, y, b, sigma_w2: float):
    """Per-pixel objective minimized by the Laplacian-variable step."""
    r = y - b * np.asarray(alpha, dtype=float)
    out = w * r * r + 2.0 * sigma_w2 * np.abs(alpha)
    return out if np.ndim(out) else float(out)


def solve_laplacian(w, y, b, sigma_w2: float, eps: float):
    """Laplacian variable by soft thresholding ``y / (b + eps)``.

    The threshold is ``2 sigma_w2 / (sqrt(w) b + eps)^2``. The eps shift keeps
    the update defined at ``b = 0``, which is what lets a pixel leave the
    all-background state.
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    tau = 2.0 * sigma_w2 / (np.sqrt(w) * b + eps) ** 2
    out = soft_threshold(np.asarray(y, dtype=float) / (b + eps), tau)
    return out if out.ndim else float(out)


def solve_sparse_l1(w, d, l, lambda_l1: float) -> np.ndarray:
    """Minimizer of ``w^2 (d - l - s)^2 + lambda |s|`` per pixel."""
    w2 = np.asarray(w, dtype=float) ** 2
    with np.errstate(divide="ignore"):
        tau = lambda_l1 / (2.0 * w2)
    return soft_threshold(np.asarray(d, dtype=float) - l, tau)


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    diff = float(np.linalg.norm(new - old))
    if diff == 0.0:
        return 0.0
    base = float(np.linalg.norm(old))
    return diff / base if base > 0 else np.inf


def inner_iterate(d: np.ndarray, U: np.ndarray, state: FrameState, cfg: SolverConfig,
                  *, fix_weights: bool = False) -> FrameState:
    """One sweep w -> v -> (b, alpha) or l1 foreground. Returns a new state."""
    d = np.asarray(d, dtype=float)
    p = d.shape[0]
    if U.shape[0] != p or state.l.shape[0] != p or state.v.shape[0] != U.shape[1]:
        raise InvalidInputError(f"dimension mismatch: d {d.shape}, U {U.shape}, v {state.v.shape}")
    variant = cfg.variant
    s = state.s
    if fix_weights:
        w = state.w
    elif variant.uses_weights:
        w = compute_weights(d, state.l, s, cfg.sigma)
    else:
        w = np.ones(p)
    v = solve_coefficients(U, w, d, s, cfg.eta, cfg.sigma_w2)
    l = U @ v
    if variant.uses_lsm:
        y = d - l
        b = solve_multiplier(w, y, state.alpha, cfg.sigma_w2, cfg.eps)
        alpha = solve_laplacian(w, y, b, cfg.sigma_w2, cfg.eps)
    else:
        alpha = solve_sparse_l1(w, d, l, cfg.l1_weight(p))
        b = np.ones(p)
    return FrameState(w=w, v=v, b=b, alpha=alpha, l=l)


def frame_objective(d: np.ndarray, U: np.ndarray, state: FrameState, cfg: SolverConfig) -> float:
    """Per-frame surrogate at the state's weights."""
    s = state.s
    r = state.w * (np.asarray(d, dtype=float) - U @ state.v - s)
    val = float(r @ r) + cfg.ridge * float(state.v @ state.v)
    if cfg.variant.uses_lsm:
        val += 2.0 * cfg.sigma_w2 * float(np.abs(state.alpha).sum())
        val += 4.0 * cfg.sigma_w2 * float(np.log(state.b + cfg.eps).sum())
    else:
        val += cfg.l1_weight(d.shape[0]) * float(np.abs(s).sum())
    return val


def solve_frame(d: np.ndarray, U: np.ndarray, state: FrameState, cfg: SolverConfig) -> tuple[FrameState, int]:
    """Run sweeps until the relative change of s and v drops below ``inner_tol``."""
    iters = 0
    while True:
        new = inner_iterate(d, U, state, cfg)
        iters += 1
        change = max(_rel_change(new.s, state.s), _rel_change(new.v, state.v))
        state = new
        if change < cfg.inner_tol or iters >= cfg.inner_max_iters:
            return state, iters
