"""Frame-by-frame moving object detection.

A :class:`Tracker` owns the basis and accumulators of one sequence. Each
frame is solved by the inner loop against the current basis, folded into
the accumulators, the basis gets one column sweep, and the background is
reconstructed with the updated basis.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import time
from array import array
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import basis as _basis
from .config import SolverConfig
from .solver_core import FrameState, InvalidInputError, frame_objective, solve_frame

log = logging.getLogger(__name__)


@dataclasses.dataclass
class FrameResult:
    background: np.ndarray
    foreground: np.ndarray
    mask: np.ndarray
    inner_iters: int
    objective: float
    state: FrameState = dataclasses.field(repr=False)


@dataclasses.dataclass
class SequenceSummary:
    frames_processed: int
    init_frames: int
    objectives: array
    seconds: array
    error: str | None = None
    checkpoint: Path | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds)) if len(self.seconds) else 0.0


def extract_mask(s: np.ndarray, theta: float, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Binary mask ``|s| >= theta`` (closed threshold), as uint8."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    mask = (np.abs(s) >= theta).astype(np.uint8)
    return mask.reshape(shape) if shape is not None else mask


def process_frame(d: np.ndarray, U: np.ndarray, acc: _basis.Accumulators, cfg: SolverConfig,
                  v_prev: np.ndarray | None = None, shape: tuple[int, ...] | None = None,
                  ) -> tuple[FrameResult, np.ndarray, _basis.Accumulators]:
    d = np.asarray(d, dtype=float).ravel()
    p, r = U.shape
    if d.shape[0] != p:
        raise InvalidInputError(f"frame has {d.shape[0]} pixels, basis expects {p}")
    v0 = np.zeros(r) if v_prev is None else v_prev
    state = FrameState.initial(p, r, l=U @ v0, v=v0)
    state, iters = solve_frame(d, U, state, cfg)
    objective = frame_objective(d, U, state, cfg)
    s = state.s
    acc = _basis.accumulate(acc, U, state.w, d, s, state.v, squared=cfg.squared_accumulator_weights)
    U = _basis.update_basis(U, acc, cfg.eta, cfg.sigma_w2)
    background = U @ state.v
    result = FrameResult(
        background=background,
        foreground=s,
        mask=extract_mask(s, cfg.mask_threshold, shape),
        inner_iters=iters,
        objective=objective,
        state=state,
    )
    return result, U, acc


class Tracker:
    """Streaming state of one sequence: basis, accumulators, last coefficients."""

    def __init__(self, U: np.ndarray, cfg: SolverConfig, acc: _basis.Accumulators | None = None,
                 v_prev: np.ndarray | None = None, shape: tuple[int, ...] | None = None):
        self.U = np.asarray(U, dtype=float)
        self.cfg = cfg
        p, r = self.U.shape
        if r != cfg.r:
            raise ValueError(f"basis rank {r} differs from configured rank {cfg.r}")
        self.acc = acc if acc is not None else _basis.Accumulators.zeros(p, r)
        self.v_prev = v_prev
        self.shape = shape

    @classmethod
    def from_frames(cls, frames: list[np.ndarray], cfg: SolverConfig,
                    shape: tuple[int, ...] | None = None) -> "Tracker":
        """Initialize from the first frames: median background and BRP basis."""
        A = np.stack([np.asarray(f, dtype=float).ravel() for f in frames], axis=1)
        bg = _basis.init_background_median(list(A.T))
        # the basis is built from background estimates of the init frames:
        # pixels far from the median are treated as foreground and replaced
        A = np.where(np.abs(A - bg[:, None]) >= cfg.mask_threshold, bg[:, None], A)
        U = _basis.init_basis(A, cfg.r, seed=cfg.seed)
        # start the first frame from the median background projected onto U
        v0, *_ = np.linalg.lstsq(U, bg, rcond=None)
        return cls(U, cfg, v_prev=v0, shape=shape)

    def step(self, d: np.ndarray) -> FrameResult:
        result, self.U, self.acc = process_frame(d, self.U, self.acc, self.cfg, self.v_prev, self.shape)
        self.v_prev = result.state.v
        return result

    def save(self, path: str | Path) -> None:
        _basis.save_checkpoint(path, self.U, self.acc)


Sink = Callable[[int, FrameResult], None]


def process_sequence(source: Iterable[np.ndarray], cfg: SolverConfig, sink: Sink | None = None, *,
                     reprocess_init: bool = True, checkpoint: str | Path | None = None,
                     tracker: Tracker | None = None) -> SequenceSummary:
    """Run the tracker over a frame stream, pushing each result to ``sink``.

    The first K frames are buffered to initialize the basis (unless a
    ``tracker`` is supplied, e.g. resumed from a checkpoint) and, with
    ``reprocess_init``, processed again as ordinary frames so that every
    input frame gets an output. Only the K-frame buffer and O(p r) state
    are kept, so memory does not grow with the sequence length.

    A failure of the source mid-stream is recorded in the summary; results
    already pushed remain valid.
    """
    it: Iterator[np.ndarray] = iter(source)
    objectives, seconds = array("d"), array("d")
    error = None
    n_init = 0
    done = 0
    shape = None

    if tracker is None:
        k = cfg.n_init_frames()
        try:
            buf = list(itertools.islice(it, k))
        except Exception as exc:  # source failed while filling the init buffer
            return SequenceSummary(0, 0, objectives, seconds, error=f"{type(exc).__name__}: {exc}")
        if len(buf) < cfg.r:
            raise InvalidInputError(f"need at least {cfg.r} frames to initialize, got {len(buf)}")
        shape = np.shape(buf[0])
        tracker = Tracker.from_frames(buf, cfg, shape=shape)
        n_init = len(buf)
        head: Iterable[np.ndarray] = buf if reprocess_init else ()
        del buf
        it = itertools.chain(head, it)
    elif tracker.shape is not None:
        shape = tracker.shape

    while True:
        try:
            d = next(it)
        except StopIteration:
            break
        except Exception as exc:
            error = f"{type(exc).__name__}: {exc}"
            log.warning("source failed after %d frames: %s", done, error)
            break
        if shape is not None and np.shape(d) != shape:
            raise InvalidInputError(f"frame {done} has shape {np.shape(d)}, expected {shape}")
        t0 = time.perf_counter()
        result = tracker.step(d)
        seconds.append(time.perf_counter() - t0)
        objectives.append(result.objective)
        if sink is not None:
            sink(done, result)
        done += 1

    ckpt = None
    if checkpoint is not None and tracker is not None:
        tracker.save(checkpoint)
        ckpt = Path(checkpoint)
    return SequenceSummary(done, n_init, objectives, seconds, error=error, checkpoint=ckpt)
