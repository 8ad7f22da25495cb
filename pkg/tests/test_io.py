import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hyperrpca.io import (
    IngestionError,
    PGMError,
    ResultWriter,
    SequenceLayout,
    decode_pgm,
    encode_pgm,
    iter_frames,
    quantize,
    read_frame,
    read_labels,
    scan_sequence,
    write_frame,
    write_sequence,
)


def test_read_8bit(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    np.testing.assert_allclose(read_frame(path), [[0, 128 / 255], [1, 64 / 255]])
    assert read_frame(path)[0, 1] == pytest.approx(0.50196, abs=1e-5)


def test_read_16bit_big_endian(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5 1 2 65535\n" + b"\xff\xff\x00\x01")
    f = read_frame(path)
    assert f[0, 0] == 1.0 and f[1, 0] == pytest.approx(1 / 65535)


def test_header_comments():
    pix, maxval = decode_pgm(b"P5\n# made by hand\n3 1\n# max\n255\n" + bytes([1, 2, 3]))
    assert pix.tolist() == [[1, 2, 3]] and maxval == 255


def test_ascii_magic_rejected(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(PGMError, match="unsupported magic"):
        read_frame(path)


@pytest.mark.parametrize("data, match", [
    (b"P5\n2 x\n255\n", "bad height"),
    (b"P5\n2 2\n255\n" + bytes(3), "truncated payload"),
    (b"P5\n2 2\n70000\n", "maxval"),
    (b"P5\n2 2", "end of header"),
])
def test_malformed_headers_report_offsets(data, match):
    with pytest.raises(PGMError, match=match) as info:
        decode_pgm(data)
    assert "byte" in str(info.value)


def test_quantization_rules(tmp_path):
    assert quantize(np.array([0.999]))[0] == 255
    assert quantize(np.array([0.5 / 255]))[0] == 1  # half rounds up
    assert quantize(np.array([-0.2, 1.7])).tolist() == [0, 255]


@given(arrays(np.float64, (5, 7), elements=st.floats(0, 1)))
def test_round_trip_error_bound(values):
    data = encode_pgm(quantize(values))
    pix, maxval = decode_pgm(data)
    assert np.max(np.abs(pix / maxval - values)) <= 1 / 510 + 1e-12


def test_mask_single_pixel(tmp_path):
    m = np.zeros((4, 4), dtype=np.uint8)
    m[1, 2] = 1
    path = tmp_path / "m.pgm"
    write_frame(m, path, mask=True)
    payload = path.read_bytes()[-16:]
    assert payload.count(255) == 1
    assert read_labels(path)[1, 2] == 255


def _touch_frames(directory, names, shape=(3, 4)):
    directory.mkdir(parents=True, exist_ok=True)
    for n in names:
        write_frame(np.zeros(shape), directory / n)


def test_scan_with_sparse_ground_truth(tmp_path):
    _touch_frames(tmp_path / "input", [f"in{i:04d}.pgm" for i in range(1, 11)])
    _touch_frames(tmp_path / "gt", ["gt0003.pgm"])
    items = scan_sequence(SequenceLayout(tmp_path / "input", tmp_path / "gt"))
    assert [it.index for it in items] == list(range(1, 11))
    assert [it.index for it in items if it.gt_path is not None] == [3]


def test_scan_orders_numerically(tmp_path):
    _touch_frames(tmp_path, ["in10.pgm", "in9.pgm", "in100.pgm"])
    assert [it.index for it in scan_sequence(SequenceLayout(tmp_path))] == [9, 10, 100]


def test_scan_empty(tmp_path):
    with pytest.raises(IngestionError, match="empty"):
        scan_sequence(SequenceLayout(tmp_path))


def test_scan_duplicate_index(tmp_path):
    _touch_frames(tmp_path, ["in01.pgm", "in1.pgm"])
    with pytest.raises(IngestionError, match="duplicate"):
        scan_sequence(SequenceLayout(tmp_path))


def test_mixed_dimensions_named(tmp_path):
    _touch_frames(tmp_path, ["in1.pgm"])
    _touch_frames(tmp_path, ["in2.pgm"], shape=(5, 5))
    with pytest.raises(IngestionError, match="in2.pgm"):
        list(iter_frames(scan_sequence(SequenceLayout(tmp_path))))


def test_write_sequence_layout(tmp_path):
    frames = [np.full((4, 4), 0.2)] * 3
    masks = [np.eye(4, dtype=np.uint8)] * 3
    write_sequence(tmp_path, frames, masks)
    assert sorted(p.name for p in (tmp_path / "input").iterdir()) == [f"in{i:06d}.pgm" for i in (1, 2, 3)]
    assert read_labels(tmp_path / "groundtruth" / "gt000002.pgm").max() == 255


def test_result_writer(tmp_path):
    class R:
        background = np.full(6, 0.5)
        foreground = np.array([0, -2.0, 0.3, 0, 0, 0])
        mask = np.array([0, 1, 1, 0, 0, 0], dtype=np.uint8)

    ResultWriter(tmp_path, (2, 3), [7])(0, R())
    fg = read_frame(tmp_path / "foreground" / "fg000007.pgm")
    assert fg[0, 1] == 1.0 and fg[0, 2] == pytest.approx(0.3, abs=1 / 510)
    assert read_labels(tmp_path / "mask" / "bin000007.pgm").tolist() == [[0, 255, 255], [0, 0, 0]]
    assert (tmp_path / "background" / "bg000007.pgm").exists()
