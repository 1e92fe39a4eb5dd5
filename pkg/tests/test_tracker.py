"""Tracker state machine: init, per-frame tracking, loss and reacquisition."""

import math

import numpy as np
import pytest

from weavetrack.config import Config
from weavetrack.geometry import RigidTransform, compose, identity
from weavetrack.imagecore import GrayImage
from weavetrack.lattice import fold_angle
from weavetrack.records import format_result
from weavetrack.synth import WeaveSpec, render, translation_schedule
from weavetrack.tracker import init, reacquire, track


SPEC = WeaveSpec(noise_sigma=0.02)


def frames_for(poses, spec=SPEC):
    return [render(spec, p) for p in poses]


def blank_frame(n=256, value=80):
    return GrayImage(np.full((n, n), value, dtype=np.uint8))


class TestInit:
    def test_synthetic_frame(self):
        st = init(render(SPEC, RigidTransform()), Config())
        assert st.status == "tracking"
        assert st.cumulative_threads == (0.0, 0.0)
        # recovered basis within 1 degree and 0.3 px of the generator truth
        for v, truth in ((st.lattice.v1, (7.53, 0.0)), (st.lattice.v2, (0.0, 7.53))):
            ang = math.degrees(math.atan2(v[1], v[0]))
            t_ang = math.degrees(math.atan2(truth[1], truth[0]))
            assert fold_angle(ang - t_ang) <= 1.0
            assert abs(math.hypot(*v) - 7.53) <= 0.3

    def test_blank_frame_fails(self):
        with pytest.raises(Exception):
            init(blank_frame(), Config())

    def test_frame_smaller_than_fft_crop_fails(self):
        small = WeaveSpec(size=128, noise_sigma=0.02)
        with pytest.raises(ValueError):
            init(render(small, RigidTransform()), Config())  # default crop 256

    def test_smaller_frame_with_matching_crop(self):
        small = WeaveSpec(size=128, noise_sigma=0.02)
        cfg = Config()
        cfg.tracker.fft_crop = 128
        st = init(render(small, RigidTransform()), cfg)
        assert st.status == "tracking"


class TestTrack:
    def test_identical_frames_identity(self):
        img = render(SPEC, RigidTransform())
        st = init(img, Config())
        st, res = track(st, img)
        assert res.status == "tracking"
        assert res.transform.dx == pytest.approx(0.0, abs=1e-9)
        assert res.transform.dy == pytest.approx(0.0, abs=1e-9)
        assert res.transform.dtheta == pytest.approx(0.0, abs=1e-9)
        assert res.thread_delta.du == pytest.approx(0.0, abs=1e-9)
        assert res.thread_delta.dv == pytest.approx(0.0, abs=1e-9)

    def test_one_pitch_translation_is_one_thread(self):
        frames = frames_for(translation_schedule(1, 7.53))
        st = init(frames[0], Config())
        st, res = track(st, frames[1])
        assert res.status == "tracking"
        assert res.thread_delta.du == pytest.approx(1.0, abs=0.05)
        assert res.thread_delta.dv == pytest.approx(0.0, abs=0.05)

    def test_track_requires_tracking_status(self):
        frames = frames_for(translation_schedule(1, 7.53))
        st = init(frames[0], Config())
        st.status = "lost"
        with pytest.raises(ValueError):
            track(st, frames[1])

    def test_cumulative_pose_is_fold_of_transforms(self):
        frames = frames_for(translation_schedule(4, 7.53))
        st = init(frames[0], Config())
        acc = identity()
        for f in frames[1:]:
            st, res = track(st, f)
            acc = compose(acc, res.transform)
            assert res.cumulative_pose == acc  # same arithmetic, bit-exact

    def test_forward_reverse_cancel(self):
        frames = frames_for(translation_schedule(4, 3.0))
        st = init(frames[0], Config())
        for f in frames[1:]:
            st, _ = track(st, f)
        fwd = st.cumulative_pose
        st2 = init(frames[-1], Config())
        for f in frames[-2::-1]:
            st2, _ = track(st2, f)
        rev = st2.cumulative_pose
        total = compose(fwd, rev)
        assert math.hypot(total.dx, total.dy) <= 0.05
        assert abs(total.dtheta) <= 0.02

    def test_deterministic_records(self):
        frames = frames_for(translation_schedule(3, 7.53))

        def run():
            st = init(frames[0], Config())
            out = []
            for f in frames[1:]:
                st, res = track(st, f)
                out.append(format_result(res))
            return out

        assert run() == run()

    def test_anchor_reselects_near_border(self):
        # large steps push the anchor across the border margin quickly
        frames = frames_for(translation_schedule(4, 36.0))
        cfg = Config()
        st = init(frames[0], cfg)
        margin = cfg.tracker.border_margin
        cums = [0.0]
        for f in frames[1:]:
            st, res = track(st, f)
            assert res.status == "tracking"
            ax, ay = st.lattice.anchor
            assert margin <= ax <= 255 - margin
            assert margin <= ay <= 255 - margin
            cums.append(res.cumulative_threads[0])
        # counts stay continuous across anchor jumps: one step = 36/7.53 units
        per_step = 36.0 / 7.53
        for k in range(1, len(cums)):
            assert cums[k] - cums[k - 1] == pytest.approx(per_step, abs=0.08)


class TestLossAndReacquire:
    def test_lost_on_blank_then_reacquired(self):
        frames = frames_for(translation_schedule(3, 7.53))
        st = init(frames[0], Config())
        st, res = track(st, frames[1])
        assert res.status == "tracking"
        cum_before = st.cumulative_threads

        st, res = track(st, blank_frame())
        assert res.status == "lost"
        assert res.failed_stage in ("detect", "estimate", "lattice", "orientations")
        assert st.status == "lost"
        assert st.cumulative_threads == cum_before

        st = reacquire(st, frames[2])
        assert st.status == "tracking"
        assert st.cumulative_threads == cum_before
        assert st.pending_discontinuity

        st, res = track(st, frames[3])
        assert res.status == "tracking"
        assert res.discontinuity

    def test_reacquire_fails_on_blank(self):
        frames = frames_for(translation_schedule(1, 7.53))
        st = init(frames[0], Config())
        st, _ = track(st, blank_frame())
        assert st.status == "lost"
        st = reacquire(st, blank_frame())
        assert st.status == "lost"

    def test_reacquire_requires_lost(self):
        st = init(render(SPEC, RigidTransform()), Config())
        with pytest.raises(ValueError):
            reacquire(st, render(SPEC, RigidTransform()))
