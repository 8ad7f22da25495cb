"""Binary PGM frames and CDnet-style sequence directories.

Layout of a sequence::

    input/in000001.pgm ...        frames
    groundtruth/gt000001.pgm ...  optional CDnet labels, aligned by index
    <out>/background/ foreground/ mask/   written by ``run``
"""

from __future__ import annotations

import dataclasses
import re
from pathlib import Path
from typing import Iterator

import numpy as np


class PGMError(ValueError):
    """Malformed or unsupported PGM data."""


class IngestionError(RuntimeError):
    pass


_WS = b" \t\n\r\v\f"


def _header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and comments, then read one token
    n = len(data)
    while pos < n:
        c = data[pos]
        if c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        elif c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise PGMError(f"unexpected end of header at byte {pos}")
    return data[start:pos], pos


def decode_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode binary PGM bytes to (height x width integer array, maxval)."""
    if len(data) < 2:
        raise PGMError("file too short for a PGM header at byte 0")
    magic = data[:2]
    if magic != b"P5":
        raise PGMError(f"unsupported magic {magic!r} at byte 0 (only binary P5 is supported)")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, new = _header_token(data, pos)
        if not tok.isdigit():
            raise PGMError(f"bad {name} {tok!r} at byte {new - len(tok)}")
        fields.append(int(tok))
        pos = new
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMError(f"bad dimensions {width}x{height} at byte {pos}")
    if not 1 <= maxval <= 65535:
        raise PGMError(f"maxval {maxval} out of range at byte {pos}")
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise PGMError(f"missing whitespace after header at byte {pos}")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise PGMError(f"truncated payload: need {need} bytes from byte {pos}, file ends at byte {len(data)}")
    pix = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return pix.reshape(height, width).astype(np.int64), maxval


def encode_pgm(values: np.ndarray, maxval: int = 255) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {values.shape}")
    h, w = values.shape
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + values.astype(dtype).tobytes()


def read_frame(path: str | Path) -> np.ndarray:
    """Read a P5 PGM as a 2-D float array in [0, 1]."""
    path = Path(path)
    try:
        pix, maxval = decode_pgm(path.read_bytes())
    except PGMError as exc:
        raise PGMError(f"{path}: {exc}") from None
    return pix / float(maxval)


def read_labels(path: str | Path) -> np.ndarray:
    """Read a ground-truth PGM as raw integer labels."""
    path = Path(path)
    try:
        pix, _ = decode_pgm(path.read_bytes())
    except PGMError as exc:
        raise PGMError(f"{path}: {exc}") from None
    return pix


def quantize(values: np.ndarray) -> np.ndarray:
    """[0, 1] -> bytes with round-half-up."""
    return np.floor(np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_frame(values: np.ndarray, path: str | Path, *, mask: bool = False) -> None:
    """Write a frame (values in [0, 1]) or, with ``mask``, a binary mask as {0, 255}."""
    values = np.asarray(values)
    if mask or values.dtype == bool:
        data = np.where(values.astype(bool), 255, 0).astype(np.uint8)
    else:
        data = quantize(values)
    Path(path).write_bytes(encode_pgm(data))


@dataclasses.dataclass
class SequenceLayout:
    input_dir: Path
    gt_dir: Path | None = None
    background_ref: Path | None = None
    out_dir: Path | None = None
    metrics_path: Path | None = None
    input_glob: str = "in*.pgm"
    gt_glob: str = "gt*.pgm"


@dataclasses.dataclass
class SequenceItem:
    index: int
    path: Path
    gt_path: Path | None


_INDEX = re.compile(r"(\d+)(?!.*\d)")


def frame_index(path: Path) -> int:
    m = _INDEX.search(path.stem)
    if m is None:
        raise IngestionError(f"{path}: no frame index in file name")
    return int(m.group(1))


def _sorted_frames(directory: Path, pattern: str) -> list[tuple[int, Path]]:
    items = [(frame_index(p), p) for p in directory.glob(pattern) if p.is_file()]
    items.sort(key=lambda t: (t[0], t[1].name))
    seen: dict[int, Path] = {}
    for idx, p in items:
        if idx in seen:
            raise IngestionError(f"duplicate frame index {idx}: {seen[idx]} and {p}")
        seen[idx] = p
    return items


def scan_sequence(layout: SequenceLayout) -> list[SequenceItem]:
    """Frames ordered by numeric index, each paired with its ground truth if present."""
    if not layout.input_dir.is_dir():
        raise IngestionError(f"input directory {layout.input_dir} does not exist")
    frames = _sorted_frames(layout.input_dir, layout.input_glob)
    if not frames:
        raise IngestionError(f"empty sequence: no {layout.input_glob} in {layout.input_dir}")
    gts: dict[int, Path] = {}
    if layout.gt_dir is not None:
        if not layout.gt_dir.is_dir():
            raise IngestionError(f"ground-truth directory {layout.gt_dir} does not exist")
        gts = dict(_sorted_frames(layout.gt_dir, layout.gt_glob))
    return [SequenceItem(idx, p, gts.get(idx)) for idx, p in frames]


def iter_frames(items: list[SequenceItem]) -> Iterator[np.ndarray]:
    """Read frames lazily, checking that all share the first frame's shape."""
    shape = first = None
    for item in items:
        frame = read_frame(item.path)
        if shape is None:
            shape, first = frame.shape, item.path
        elif frame.shape != shape:
            raise IngestionError(f"{item.path} has shape {frame.shape}, but {first} has {shape}")
        yield frame


def write_sequence(directory: str | Path, frames, masks=None, prefix: str = "in", gt_prefix: str = "gt",
                   start: int = 1) -> None:
    """Write frames (and optional {0,1} masks as CDnet labels) in the input layout."""
    directory = Path(directory)
    (directory / "input").mkdir(parents=True, exist_ok=True)
    if masks is not None:
        (directory / "groundtruth").mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(frames):
        idx = start + k
        write_frame(frame, directory / "input" / f"{prefix}{idx:06d}.pgm")
        if masks is not None:
            write_frame(masks[k], directory / "groundtruth" / f"{gt_prefix}{idx:06d}.pgm", mask=True)


class ResultWriter:
    """Sink writing background / foreground / mask images for each processed frame."""

    def __init__(self, out_dir: str | Path, shape: tuple[int, int], indices: list[int] | None = None):
        self.out_dir = Path(out_dir)
        self.shape = shape
        self.indices = indices
        for sub in ("background", "foreground", "mask"):
            (self.out_dir / sub).mkdir(parents=True, exist_ok=True)

    def __call__(self, k: int, result) -> None:
        idx = self.indices[k] if self.indices is not None else k + 1
        name = f"{idx:06d}.pgm"
        write_frame(result.background.reshape(self.shape), self.out_dir / "background" / f"bg{name}")
        write_frame(np.minimum(np.abs(result.foreground), 1.0).reshape(self.shape),
                    self.out_dir / "foreground" / f"fg{name}")
        write_frame(result.mask.reshape(self.shape), self.out_dir / "mask" / f"bin{name}", mask=True)
