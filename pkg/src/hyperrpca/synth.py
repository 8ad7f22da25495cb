"""Synthetic sequences with exact ground truth.

Backgrounds are low rank (static, or a mean image plus sinusoidally
modulated patterns), foregrounds are rectangles that bounce inside the
frame, and noise is any combination of Gaussian, Poisson and salt & pepper.
Every frame draws its randomness from ``(seed, t)`` so frames can be made
lazily, one at a time, with results independent of how they are consumed.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator, Sequence

import numpy as np


class InvalidConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Rect:
    height: int
    width: int
    amplitude: float = 0.5
    velocity: tuple[float, float] = (1.0, 1.0)  # (rows, cols) per frame
    start: tuple[int, int] | None = None  # top-left; default centered-left
    dwell: int = 0  # frames spent at the start position before moving


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    gaussian_std: float = 0.0
    poisson: bool = False
    poisson_peak: float = 255.0
    salt_pepper: float = 0.0

    @property
    def is_identity(self) -> bool:
        return self.gaussian_std == 0 and not self.poisson and self.salt_pepper == 0


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    width: int = 64
    height: int = 64
    frames: int = 100
    background: str = "static"  # "static" or "oscillating"
    background_rank: int = 1  # number of oscillating patterns
    oscillation_amplitude: float = 0.05
    foreground: tuple[Rect, ...] = (Rect(12, 12),)
    noise: NoiseSpec = NoiseSpec()
    seed: int = 0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.frames < 1:
            raise InvalidConfigError("width, height and frames must be >= 1")
        if self.background not in ("static", "oscillating"):
            raise InvalidConfigError(f"unknown background mode {self.background!r}")
        if self.background == "oscillating" and self.background_rank < 1:
            raise InvalidConfigError("oscillating background needs background_rank >= 1")
        area = 0
        for rect in self.foreground:
            if not 0 <= rect.amplitude <= 1:
                raise InvalidConfigError(f"amplitude {rect.amplitude} outside [0, 1]")
            if rect.height > self.height or rect.width > self.width or rect.height < 1 or rect.width < 1:
                raise InvalidConfigError(f"rectangle {rect.height}x{rect.width} does not fit the frame")
            area += rect.height * rect.width
        if area > 0.5 * self.width * self.height:
            raise InvalidConfigError("foreground covers more than half the frame")
        n = self.noise
        if n.gaussian_std < 0 or not 0 <= n.salt_pepper <= 1 or n.poisson_peak <= 0:
            raise InvalidConfigError(f"invalid noise spec {n}")
        peak = _background_extent(self)[1]
        for rect in self.foreground:
            if peak + rect.amplitude > 1 + 1e-12:
                raise InvalidConfigError(
                    f"amplitude {rect.amplitude} overflows: background peaks at {peak:.3f}")

    _SCALARS = ("width", "height", "frames", "background", "background_rank", "oscillation_amplitude", "seed")
    _NOISE = ("gaussian_std", "poisson", "poisson_peak", "salt_pepper")

    def to_values(self) -> dict[str, object]:
        """Flat ``key=value`` form; rectangles as ``h,w,amp,vy,vx,dwell`` joined by ``;``."""
        out: dict[str, object] = {k: getattr(self, k) for k in self._SCALARS}
        out.update({k: getattr(self.noise, k) for k in self._NOISE})
        out["rects"] = ";".join(format_rect(r) for r in self.foreground)
        return out

    @classmethod
    def from_values(cls, values: dict[str, object]) -> "SynthConfig":
        def conv(key, raw, default):
            if isinstance(raw, str):
                if isinstance(default, bool):
                    return raw.strip().lower() in ("1", "true", "yes", "on")
                return type(default)(raw) if not isinstance(default, str) else raw
            return raw

        base = cls()
        kw = {k: conv(k, values[k], getattr(base, k)) for k in cls._SCALARS if k in values}
        nkw = {k: conv(k, values[k], getattr(base.noise, k)) for k in cls._NOISE if k in values}
        if "rects" in values:
            raw = values["rects"]
            kw["foreground"] = tuple(parse_rect(s) for s in str(raw).split(";") if s.strip()) \
                if isinstance(raw, str) else tuple(raw)
        try:
            return cls(noise=NoiseSpec(**nkw), **kw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(str(exc)) from None


def parse_rect(text: str) -> Rect:
    """``h,w[,amplitude[,vy,vx[,dwell]]]``."""
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise InvalidConfigError(f"bad rectangle spec {text!r}") from None
    if len(parts) not in (2, 3, 5, 6):
        raise InvalidConfigError(f"bad rectangle spec {text!r}: expected h,w[,amp[,vy,vx[,dwell]]]")
    h, w = int(parts[0]), int(parts[1])
    amp = parts[2] if len(parts) > 2 else 0.5
    vel = (parts[3], parts[4]) if len(parts) > 4 else (1.0, 1.0)
    dwell = int(parts[5]) if len(parts) > 5 else 0
    return Rect(h, w, amp, vel, None, dwell)


def format_rect(r: Rect) -> str:
    return f"{r.height},{r.width},{r.amplitude},{r.velocity[0]},{r.velocity[1]},{r.dwell}"


def _base_image(cfg: SynthConfig) -> np.ndarray:
    # smooth gradient plus blurred texture, within [0.1, 0.4]
    rng = np.random.default_rng([cfg.seed, 0xB6])
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    grad = 0.5 * (xx / max(cfg.width - 1, 1)) + 0.5 * (yy / max(cfg.height - 1, 1))
    tex = rng.random((cfg.height, cfg.width))
    k = np.ones(5) / 5
    tex = np.apply_along_axis(np.convolve, 0, tex, k, mode="same")
    tex = np.apply_along_axis(np.convolve, 1, tex, k, mode="same")
    img = 0.6 * grad + 0.4 * tex
    img = (img - img.min()) / max(np.ptp(img), 1e-12)
    return 0.1 + 0.3 * img


def _patterns(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 0x05C])
    k = cfg.background_rank
    yy, xx = np.mgrid[0:cfg.height, 0:cfg.width]
    pats = []
    for j in range(k):
        fy, fx = rng.uniform(0.5, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        pats.append(np.sin(2 * np.pi * (fy * yy / cfg.height + fx * xx / cfg.width) + ph))
    freqs = rng.uniform(0.01, 0.1, size=k)
    return np.stack(pats), freqs


def _background_extent(cfg: SynthConfig) -> tuple[float, float]:
    base = _base_image(cfg)
    if cfg.background == "static":
        return float(base.min()), float(base.max())
    bound = cfg.oscillation_amplitude * cfg.background_rank
    return float(base.min() - bound), float(base.max() + bound)


class Scene:
    """Clean background and foreground support for each frame index."""

    def __init__(self, cfg: SynthConfig):
        cfg.validate()
        self.cfg = cfg
        self.base = _base_image(cfg)
        if cfg.background == "oscillating":
            self.patterns, self.freqs = _patterns(cfg)

    def background(self, t: int) -> np.ndarray:
        if self.cfg.background == "static":
            return self.base.copy()
        coef = self.cfg.oscillation_amplitude * np.sin(2 * np.pi * self.freqs * t)
        return self.base + np.tensordot(coef, self.patterns, axes=1)

    def rect_origin(self, rect: Rect, t: int) -> tuple[int, int]:
        cfg = self.cfg
        start = rect.start or ((cfg.height - rect.height) // 2, 0)
        moves = max(t - rect.dwell, 0)
        return (_bounce(start[0] + rect.velocity[0] * moves, cfg.height - rect.height),
                _bounce(start[1] + rect.velocity[1] * moves, cfg.width - rect.width))

    def foreground(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Additive foreground image and its boolean support at frame ``t``."""
        fg = np.zeros((self.cfg.height, self.cfg.width))
        support = np.zeros_like(fg, dtype=bool)
        for rect in self.cfg.foreground:
            r0, c0 = self.rect_origin(rect, t)
            sl = (slice(r0, r0 + rect.height), slice(c0, c0 + rect.width))
            fg[sl] = rect.amplitude  # overlapping rectangles do not stack
            support[sl] = True
        return fg, support


def _bounce(pos: float, span: int) -> int:
    """Reflect a coordinate into ``[0, span]``."""
    if span <= 0:
        return 0
    period = 2 * span
    x = int(round(pos)) % period
    return x if x <= span else period - x


def corrupt_frame(frame: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Gaussian, then Poisson, then salt & pepper; result clamped to [0, 1]."""
    out = np.asarray(frame, dtype=float)
    if noise.gaussian_std > 0:
        out = out + rng.normal(0.0, noise.gaussian_std, size=out.shape)
    out = np.clip(out, 0.0, 1.0)
    if noise.poisson:
        out = rng.poisson(out * noise.poisson_peak) / noise.poisson_peak
    if noise.salt_pepper > 0:
        hit = rng.random(out.shape) < noise.salt_pepper
        salt = rng.random(out.shape) < 0.5
        out = np.where(hit, salt.astype(float), out)
    return np.clip(out, 0.0, 1.0)


def corrupt(frames: Sequence[np.ndarray], noise: NoiseSpec, seed: int = 0) -> list[np.ndarray]:
    return [corrupt_frame(f, noise, np.random.default_rng([seed, t, 1])) for t, f in enumerate(frames)]


@dataclasses.dataclass
class SynthFrame:
    frame: np.ndarray
    mask: np.ndarray
    background: np.ndarray


def iter_frames(cfg: SynthConfig) -> Iterator[SynthFrame]:
    scene = Scene(cfg)
    for t in range(cfg.frames):
        bg = scene.background(t)
        fg, support = scene.foreground(t)
        clean = np.clip(np.where(support, bg + fg, bg), 0.0, 1.0)
        frame = corrupt_frame(clean, cfg.noise, np.random.default_rng([cfg.seed, t, 1]))
        yield SynthFrame(frame, support.astype(np.uint8), bg)


def generate(cfg: SynthConfig) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Frames, ground-truth masks and clean backgrounds, each as a list of 2-D arrays."""
    frames, masks, bgs = [], [], []
    for item in iter_frames(cfg):
        frames.append(item.frame)
        masks.append(item.mask)
        bgs.append(item.background)
    return frames, masks, bgs
