import numpy as np
import pytest

from hyperrpca.basis import Accumulators, load_checkpoint
from hyperrpca.config import SolverConfig
from hyperrpca.pipeline import Tracker, extract_mask, process_frame, process_sequence
from hyperrpca.solver_core import InvalidInputError
from hyperrpca.synth import SynthConfig, iter_frames


def test_mask_thresholds():
    assert not extract_mask(np.zeros(5), 0.1).any()
    s = np.zeros(5)
    s[2] = 0.5
    assert extract_mask(s, 0.1).tolist() == [0, 0, 1, 0, 0]
    s[2] = -0.1
    assert extract_mask(s, 0.1)[2] == 1
    assert extract_mask(np.zeros(6), 0.1, (2, 3)).shape == (2, 3)


def test_mask_rejects_bad_theta():
    with pytest.raises(ValueError):
        extract_mask(np.zeros(3), 1.5)


def test_constant_background_fixed_point():
    p = 64
    d = np.full(p, 0.4)
    U = np.ones((p, 1)) / np.sqrt(p)
    cfg = SolverConfig(r=1)
    res, _, _ = process_frame(d, U, Accumulators.zeros(p, 1), cfg, v_prev=np.array([0.4 * np.sqrt(p)]))
    assert not res.mask.any()
    np.testing.assert_allclose(res.state.l, d, atol=1e-4)


def test_isolated_block_detected():
    rng = np.random.default_rng(12)
    side, r = 32, 3
    p = side * side
    bg = np.linspace(0.1, 0.4, p)
    U, _ = np.linalg.qr(np.column_stack([bg, rng.standard_normal((p, r - 1))]))
    truth = np.zeros(p, dtype=bool)
    truth[rng.choice(p, int(0.04 * p), replace=False)] = True
    d = bg + 0.5 * truth
    v0 = U.T @ bg
    res, _, _ = process_frame(d, U, Accumulators.zeros(p, r), SolverConfig(r=r), v_prev=v0)
    assert np.mean(res.mask.astype(bool) != truth) <= 0.02


def test_iteration_cap_reported():
    rng = np.random.default_rng(0)
    p, r = 100, 3
    res, _, _ = process_frame(rng.random(p), rng.standard_normal((p, r)), Accumulators.zeros(p, r),
                              SolverConfig(r=r, inner_max_iters=1))
    assert res.inner_iters == 1


def test_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        process_frame(np.zeros(10), np.ones((12, 2)), Accumulators.zeros(12, 2), SolverConfig(r=2))


def _frames(n, seed=0):
    cfg = SynthConfig(width=24, height=24, frames=n, seed=seed)
    return [f.frame for f in iter_frames(cfg)]


def test_sequence_boundary_no_frames_after_init(tmp_path):
    cfg = SolverConfig(r=3, init_frames=10)
    ck = tmp_path / "ck.bin"
    summary = process_sequence(_frames(10), cfg, reprocess_init=False, checkpoint=ck)
    assert summary.frames_processed == 0 and summary.init_frames == 10
    U, acc = load_checkpoint(ck)
    assert U.shape == (576, 3) and acc.frames_seen == 0


def test_sequence_reprocesses_init_frames():
    cfg = SolverConfig(r=3, init_frames=10, inner_max_iters=5)
    seen = []
    summary = process_sequence(_frames(15), cfg, lambda k, res: seen.append(k))
    assert summary.frames_processed == 15 and seen == list(range(15))
    assert len(summary.objectives) == 15


def test_sequence_deterministic():
    cfg = SolverConfig(r=3, init_frames=10, inner_max_iters=5)
    runs = []
    for _ in range(2):
        masks = []
        process_sequence(_frames(14), cfg, lambda k, res: masks.append(res.mask.copy()))
        runs.append(np.stack(masks))
    assert np.array_equal(*runs)


def test_source_failure_recorded():
    frames = _frames(14)

    def source():
        yield from frames[:12]
        raise OSError("disk gone")

    got = []
    summary = process_sequence(source(), SolverConfig(r=3, init_frames=10, inner_max_iters=3),
                               lambda k, res: got.append(k))
    assert not summary.ok and "disk gone" in summary.error
    assert summary.frames_processed == 12 == len(got)


def test_shape_change_rejected():
    frames = _frames(12)
    frames.append(np.zeros((10, 10)))
    with pytest.raises(InvalidInputError):
        process_sequence(frames, SolverConfig(r=3, init_frames=10, inner_max_iters=2))


def test_too_few_frames():
    with pytest.raises(InvalidInputError):
        process_sequence(_frames(2), SolverConfig(r=3))


def test_tracker_resume_from_checkpoint(tmp_path):
    cfg = SolverConfig(r=3, init_frames=10, inner_max_iters=3)
    frames = _frames(16)
    ck = tmp_path / "ck.bin"
    process_sequence(frames[:12], cfg, checkpoint=ck)
    U, acc = load_checkpoint(ck)
    tracker = Tracker(U, cfg, acc, shape=frames[0].shape)
    summary = process_sequence(frames[12:], cfg, tracker=tracker)
    assert summary.frames_processed == 4
    assert tracker.acc.frames_seen == 16


def test_tracker_rank_mismatch():
    with pytest.raises(ValueError):
        Tracker(np.ones((10, 2)), SolverConfig(r=3))
