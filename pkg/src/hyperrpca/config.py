"""Solver configuration and the plain-text ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
import enum
import math
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """A configuration value violates its invariants."""


class Variant(str, enum.Enum):
    """Model variants used for ablation.

    HYPER combines correntropy weights with the Laplacian scale mixture,
    MCC_ONLY keeps the weights with an l1 foreground, LSM_ONLY keeps the
    scale mixture with unit weights, ORPCA has neither.
    """

    HYPER = "HYPER"
    LSM_ONLY = "LSM_ONLY"
    MCC_ONLY = "MCC_ONLY"
    ORPCA = "ORPCA"

    @property
    def uses_weights(self) -> bool:
        return self in (Variant.HYPER, Variant.MCC_ONLY)

    @property
    def uses_lsm(self) -> bool:
        return self in (Variant.HYPER, Variant.LSM_ONLY)


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Parameters of the online solver.

    Intensities are on the [0, 1] scale. ``lambda_l1=None`` means
    ``1/sqrt(p)``, resolved once the frame size is known.
    """

    r: int = 25
    sigma: float = 1e3
    sigma_w2: float = 1e-5
    eta: float = 0.05
    eps: float = 1e-2
    inner_tol: float = 1e-3
    inner_max_iters: int = 50
    variant: Variant = Variant.HYPER
    lambda_l1: float | None = None
    mask_threshold: float = 0.1
    init_frames: int | None = None
    seed: int = 0
    # experimental: use diag(w)^2 instead of diag(w) when projecting v for the accumulators
    squared_accumulator_weights: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.variant, str) and not isinstance(self.variant, Variant):
            try:
                object.__setattr__(self, "variant", Variant(self.variant.upper()))
            except ValueError:
                raise ConfigError(f"unknown variant {self.variant!r}") from None
        self.validate()

    def validate(self) -> None:
        def check(ok: bool, msg: str) -> None:
            if not ok:
                raise ConfigError(msg)

        check(isinstance(self.r, int) and self.r >= 1, f"rank must be >= 1, got {self.r}")
        for name in ("sigma", "sigma_w2", "eps", "inner_tol"):
            val = getattr(self, name)
            check(math.isfinite(val) and val > 0, f"{name} must be finite and > 0, got {val}")
        check(math.isfinite(self.eta) and self.eta >= 0, f"eta must be >= 0, got {self.eta}")
        # the basis update divides by C_ii + eta*sigma_w2
        check(self.eta * self.sigma_w2 > 0, "eta * sigma_w2 must be > 0")
        check(0 < self.mask_threshold < 1, f"mask_threshold must lie in (0, 1), got {self.mask_threshold}")
        check(self.inner_max_iters >= 1, f"inner_max_iters must be >= 1, got {self.inner_max_iters}")
        if self.lambda_l1 is not None:
            check(math.isfinite(self.lambda_l1) and self.lambda_l1 > 0,
                  f"lambda_l1 must be > 0, got {self.lambda_l1}")
        if self.init_frames is not None:
            check(self.init_frames >= self.r, f"init_frames must be >= rank ({self.r}), got {self.init_frames}")

    @property
    def ridge(self) -> float:
        return self.eta * self.sigma_w2

    def l1_weight(self, p: int) -> float:
        return self.lambda_l1 if self.lambda_l1 is not None else 1.0 / math.sqrt(p)

    def n_init_frames(self, available: int | None = None) -> int:
        k = self.init_frames if self.init_frames is not None else max(2 * self.r, 20)
        return k if available is None else min(k, available)

    def replace(self, **changes: Any) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["variant"] = self.variant.value
        return out


def _coerce(field: dataclasses.Field, raw: str) -> Any:
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    typ = str(field.type)
    if "bool" in typ:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if typ.startswith("int"):
        return int(raw)
    if typ.startswith("float"):
        return float(raw)
    return raw


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def coerce_fields(cls: type, values: Mapping[str, str]) -> dict[str, Any]:
    """Convert string values to the field types of dataclass ``cls``; unknown keys are skipped."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in values.items():
        if key in fields:
            try:
                out[key] = _coerce(fields[key], raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return out


def dump_key_values(values: Mapping[str, Any]) -> str:
    return "".join(f"{k}={'none' if v is None else v}\n" for k, v in values.items())


def load_config_file(path: str | Path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text())
