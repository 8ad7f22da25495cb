"""Background basis: initialization, accumulators and the online column update."""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"HRPCA1"


class BasisError(RuntimeError):
    pass


class InitializationError(BasisError):
    pass


class DegenerateBasisError(BasisError):
    pass


@dataclasses.dataclass
class Accumulators:
    C: np.ndarray
    F: np.ndarray
    frames_seen: int = 0

    @classmethod
    def zeros(cls, p: int, r: int) -> "Accumulators":
        return cls(np.zeros((r, r)), np.zeros((p, r)), 0)

    def copy(self) -> "Accumulators":
        return Accumulators(self.C.copy(), self.F.copy(), self.frames_seen)


def init_background_median(frames: Sequence[np.ndarray], count: int | None = None) -> np.ndarray:
    """Per-pixel median of the first ``count`` frames (mean of the middle pair when even)."""
    frames = list(frames)[:count] if count is not None else list(frames)
    if not frames:
        raise ValueError("no frames for background initialization")
    shape = np.shape(frames[0])
    for f in frames:
        if np.shape(f) != shape:
            raise ValueError(f"frame shape {np.shape(f)} differs from {shape}")
    return np.median(np.stack(frames), axis=0)


def _brp_draw(A: np.ndarray, r: int, seed: int, max_redraws: int):
    p, k = A.shape
    for attempt in range(max_redraws + 1):
        rng = np.random.default_rng(seed + attempt)
        R1 = rng.standard_normal((k, r))
        R2 = rng.standard_normal((p, r))
        A1 = A @ R1
        M = R2.T @ A1
        cond = np.linalg.cond(M)
        if np.isfinite(cond) and cond < 1e12:
            return A1, M, R2
    raise InitializationError(f"R2^T A1 singular after {max_redraws} redraws (rank of A < {r}?)")


def init_basis_brp(A: np.ndarray, r: int, seed: int = 0, max_redraws: int = 5) -> np.ndarray:
    """Left factor ``A1 (R2^T A1)^{-1}`` of the bilateral random projection of ``A``.

    ``A`` is the p x K matrix of initial frames. A1 (R2^T A1)^{-1} A2^T is the
    rank-r approximation, with A1 = A R1 and A2 = A^T R2 for Gaussian R1, R2.
    A singular core triggers a redraw with the next seed.
    """
    A = np.asarray(A, dtype=float)
    p, k = A.shape
    if not 1 <= r <= k:
        raise ValueError(f"need 1 <= r <= K, got r={r}, K={k}")
    A1, M, _ = _brp_draw(A, r, seed, max_redraws)
    return np.linalg.solve(M.T, A1.T).T


def init_basis(A: np.ndarray, r: int, seed: int = 0, max_redraws: int = 5) -> np.ndarray:
    """BRP basis that tolerates rank-deficient ``A``.

    When ``A`` has numerical rank k < r (e.g. a noise-free static scene),
    the BRP factor is built at rank k and completed with seeded directions
    orthogonal to it, scaled to the mean column norm.
    """
    A = np.asarray(A, dtype=float)
    try:
        return init_basis_brp(A, r, seed, max_redraws)
    except InitializationError:
        pass
    sv = np.linalg.svd(A, compute_uv=False)
    k = int(np.sum(sv > sv[0] * 1e-10)) if sv.size and sv[0] > 0 else 0
    k = min(k, r)
    p = A.shape[0]
    head = init_basis_brp(A, k, seed, max_redraws) if k else np.zeros((p, 0))
    rng = np.random.default_rng([seed, 0xF111])
    extra = rng.standard_normal((p, r - k))
    if k:
        Q, _ = np.linalg.qr(head)
        extra -= Q @ (Q.T @ extra)
    extra, _ = np.linalg.qr(extra)
    scale = float(np.mean(np.linalg.norm(head, axis=0))) if k else 1.0
    return np.hstack([head, scale * extra])


def brp_approximation(A: np.ndarray, r: int, seed: int = 0) -> np.ndarray:
    """Full rank-r BRP approximation ``A1 (R2^T A1)^{-1} A2^T`` (for diagnostics)."""
    A = np.asarray(A, dtype=float)
    A1, M, R2 = _brp_draw(A, r, seed, 5)
    return A1 @ np.linalg.solve(M, (A.T @ R2).T)


def projected_coefficients(U: np.ndarray, w: np.ndarray, v: np.ndarray, squared: bool = False) -> np.ndarray:
    """``(U^T U)^{-1} U^T diag(w) U v`` (``diag(w)^2`` when ``squared``)."""
    G = U.T @ U
    ww = w * w if squared else w
    rhs = U.T @ (ww * (U @ v))
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateBasisError("U^T U is singular") from None


def accumulate(acc: Accumulators, U: np.ndarray, w: np.ndarray, d: np.ndarray, s: np.ndarray,
               v: np.ndarray, squared: bool = False) -> Accumulators:
    p, r = U.shape
    if acc.C.shape != (r, r) or acc.F.shape != (p, r):
        raise ValueError(f"accumulators {acc.C.shape}/{acc.F.shape} do not match basis {U.shape}")
    vp = projected_coefficients(U, w, v, squared)
    C = acc.C + np.outer(vp, vp)
    F = acc.F + np.outer(w * (d - s), vp)
    return Accumulators(C, F, acc.frames_seen + 1)


def update_basis(U: np.ndarray, acc: Accumulators, eta: float, sigma_w2: float) -> np.ndarray:
    """One Gauss-Seidel sweep over the columns of U on the quadratic surrogate."""
    U = np.array(U, dtype=float, order="F")
    Ct = acc.C + eta * sigma_w2 * np.eye(acc.C.shape[0])
    for i in range(U.shape[1]):
        cii = Ct[i, i]
        if cii <= 0:
            raise DegenerateBasisError(f"non-positive diagonal C[{i},{i}] = {cii}")
        U[:, i] += (acc.F[:, i] - U @ Ct[:, i]) / cii
    return np.ascontiguousarray(U)


def surrogate(U: np.ndarray, acc: Accumulators, eta: float, sigma_w2: float) -> float:
    """``0.5 Tr[U^T (C + eta sigma_w2 I) U] - Tr[U^T F]``."""
    Ct = acc.C + eta * sigma_w2 * np.eye(acc.C.shape[0])
    return 0.5 * float(np.sum((U @ Ct) * U)) - float(np.sum(U * acc.F))


def save_checkpoint(path: str | Path, U: np.ndarray, acc: Accumulators) -> None:
    """Binary checkpoint: magic, int64 LE p, r, frames_seen, then U, C, F as float64 LE row-major."""
    p, r = U.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<qqq", p, r, acc.frames_seen))
        for arr in (U, acc.C, acc.F):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[np.ndarray, Accumulators]:
    data = Path(path).read_bytes()
    if data[:6] != MAGIC:
        raise BasisError(f"{path}: bad magic {data[:6]!r}")
    p, r, seen = struct.unpack_from("<qqq", data, 6)
    need = 30 + 8 * (p * r + r * r + p * r)
    if len(data) != need:
        raise BasisError(f"{path}: expected {need} bytes, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=30).astype(float)
    U = flat[: p * r].reshape(p, r)
    C = flat[p * r: p * r + r * r].reshape(r, r)
    F = flat[p * r + r * r:].reshape(p, r)
    return U, Accumulators(C, F, int(seen))
