import numpy as np
import pytest

from movos.data import load_sod_dataset, load_vos_dataset
from movos.synthetic import (BACKGROUND_RANGE, SHAPE_COLOR_RANGE, MovingShape,
                             SynthConfig, generate_synthetic_dataset,
                             render_frame, write_sod_dataset, write_vos_dataset)


def _background(res=64, value=0.2):
    return np.full((res, res, 3), value, np.float32)


def _disk(cx, cy, r, vx=0.0, vy=0.0):
    return MovingShape(kind="disk", color=np.array([0.9, 0.8, 0.7], np.float32),
                       cx=cx, cy=cy, vx=vx, vy=vy, half_w=r, half_h=r)


def _rect(cx, cy, hw, hh, vx=0.0, vy=0.0):
    return MovingShape(kind="rect", color=np.array([0.7, 0.9, 0.8], np.float32),
                       cx=cx, cy=cy, vx=vx, vy=vy, half_w=hw, half_h=hh)


class TestRenderFrame:
    def test_flow_equals_velocity_inside_support(self):
        sh = _disk(20, 20, 6, vx=2.0, vy=0.0)
        s = render_frame(_background(), [sh], t=0, n_frames=8)
        sup = sh.support(64, 0)
        assert np.array_equal(s.mask.astype(bool), sup)
        assert (s.flow.u[sup] == 2.0).all()
        assert (s.flow.v[sup] == 0.0).all()
        assert not s.flow.u[~sup].any()
        assert not s.flow.v[~sup].any()

    def test_last_frame_flow_negated(self):
        sh = _disk(20, 20, 6, vx=2.0, vy=-1.5)
        s = render_frame(_background(), [sh], t=7, n_frames=8)
        sup = sh.support(64, 7)
        assert (s.flow.u[sup] == -2.0).all()
        assert (s.flow.v[sup] == 1.5).all()
        assert s.flow.source_frame == 7 and s.flow.target_frame == 6

    def test_static_shape_zero_flow(self):
        s = render_frame(_background(), [_disk(30, 30, 8)], t=3, n_frames=8)
        assert not s.flow.u.any() and not s.flow.v.any()
        assert np.allclose(s.motion, 1.0)  # zero flow renders white

    def test_support_translates_with_time(self):
        sh = _disk(20, 20, 5, vx=3.0, vy=1.0)
        s0 = sh.support(64, 0)
        s2 = sh.support(64, 2)
        assert np.array_equal(np.roll(np.roll(s0, 6, axis=1), 2, axis=0), s2)

    def test_later_shape_occludes(self):
        a = _disk(30, 30, 6, vx=1.0)
        b = _rect(33, 30, 6, 6, vx=-2.0)
        s = render_frame(_background(), [a, b], t=0, n_frames=4)
        overlap = a.support(64, 0) & b.support(64, 0)
        assert overlap.any()
        assert (s.image[overlap] == b.color).all()
        assert (s.flow.u[overlap] == -2.0).all()
        assert np.array_equal(s.mask.astype(bool),
                              a.support(64, 0) | b.support(64, 0))

    def test_image_carries_shape_color_and_background(self):
        sh = _disk(20, 20, 6)
        s = render_frame(_background(value=0.2), [sh], t=0, n_frames=4)
        sup = sh.support(64, 0)
        assert (s.image[sup] == sh.color).all()
        assert (s.image[~sup] == 0.2).all()


class TestRasterization:
    def test_disk_area_close_to_analytic(self, rng):
        for _ in range(50):
            r = float(rng.uniform(4, 12))
            cx, cy = rng.uniform(20, 40, 2)
            area = _disk(cx, cy, r).support(64, 0).sum()
            assert abs(area - np.pi * r * r) <= 2 * np.pi * r + 10

    def test_rect_area_close_to_analytic(self, rng):
        for _ in range(50):
            hw, hh = rng.uniform(3, 9, 2)
            cx, cy = rng.uniform(20, 40, 2)
            area = _rect(cx, cy, hw, hh).support(64, 0).sum()
            # pixel centers at integer coordinates: about (2*hw+1)(2*hh+1)
            expect = (2 * hw + 1) * (2 * hh + 1)
            assert abs(area - expect) <= 2 * (2 * hw + 2 * hh + 2)

    def test_unknown_kind(self):
        sh = _disk(10, 10, 3)
        sh.kind = "triangle"
        with pytest.raises(ValueError, match="kind"):
            sh.support(64, 0)


class TestGenerate:
    def test_counts_and_flags(self, mini_dataset):
        vos, sod = mini_dataset
        assert len(vos) == 2
        assert all(len(seq.samples) == 4 for seq in vos)
        assert len(sod) == 6
        assert all(s.validity == 1 and s.flow is not None and s.motion is not None
                   for seq in vos for s in seq.samples)
        assert all(s.validity == 0 and s.flow is None and s.motion is None
                   for s in sod)

    def test_deterministic(self):
        cfg = SynthConfig(n_sequences=2, frames_per_seq=3, resolution=32, n_sod=3)
        va, sa = generate_synthetic_dataset(cfg, np.random.default_rng(5))
        vb, sb = generate_synthetic_dataset(cfg, np.random.default_rng(5))
        for qa, qb in zip(va, vb):
            for x, y in zip(qa.samples, qb.samples):
                assert np.array_equal(x.image, y.image)
                assert np.array_equal(x.mask, y.mask)
                assert np.array_equal(x.flow.u, y.flow.u)
        for x, y in zip(sa, sb):
            assert np.array_equal(x.image, y.image)

    def test_value_ranges(self, mini_dataset):
        vos, sod = mini_dataset
        lo, hi = BACKGROUND_RANGE
        clo, chi = SHAPE_COLOR_RANGE
        for seq in vos:
            for s in seq.samples:
                fg = s.mask.astype(bool)
                assert s.image[~fg].min() >= lo and s.image[~fg].max() <= hi
                if fg.any():
                    assert s.image[fg].min() >= clo and s.image[fg].max() <= chi

    def test_every_frame_has_foreground_off_border(self, mini_dataset):
        vos, _ = mini_dataset
        for seq in vos:
            for s in seq.samples:
                assert s.mask.any()
                assert not s.mask[0].any() and not s.mask[-1].any()
                assert not s.mask[:, 0].any() and not s.mask[:, -1].any()

    def test_moving_frames_have_nonzero_flow(self, mini_dataset):
        vos, _ = mini_dataset
        for seq in vos:
            for s in seq.samples:
                fg = s.mask.astype(bool)
                mags = np.hypot(s.flow.u, s.flow.v)[fg]
                assert mags.max() > 0.5

    def test_config_validation(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="resolution"):
            generate_synthetic_dataset(SynthConfig(resolution=16), rng)
        with pytest.raises(ValueError, match="frames"):
            generate_synthetic_dataset(SynthConfig(frames_per_seq=1), rng)


class TestRoundTrip:
    def test_write_then_load_vos(self, tmp_path, mini_dataset):
        vos, _ = mini_dataset
        write_vos_dataset(vos, tmp_path)
        back = load_vos_dataset(tmp_path)
        assert [s.name for s in back] == [s.name for s in vos]
        for sa, sb in zip(vos, back):
            for x, y in zip(sa.samples, sb.samples):
                assert np.array_equal(x.mask, y.mask)
                assert np.array_equal(x.flow.u, y.flow.u)
                assert np.array_equal(x.flow.v, y.flow.v)
                assert np.abs(x.image - y.image).max() <= 0.5 / 255 + 1e-6
                assert y.name == x.name

    def test_write_then_load_sod(self, tmp_path, mini_dataset):
        _, sod = mini_dataset
        write_sod_dataset(sod, tmp_path)
        back = load_sod_dataset(tmp_path)
        assert len(back) == len(sod)
        for x, y in zip(sod, back):
            assert np.array_equal(x.mask, y.mask)
            assert np.abs(x.image - y.image).max() <= 0.5 / 255 + 1e-6
