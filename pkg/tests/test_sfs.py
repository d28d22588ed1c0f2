#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.commons import ConfigError, ShapeError
from core.gradcheck import ROUNDOFF_FLOOR, grad_check
from core.sfs import SfsParams, SpiralConfig, dat_offset_params, \
    pixel_scale, read_offsets, reference_grid, sfs_fuse, sfs_sample, \
    spiral_offsets, spiral_polar, write_offsets
from core.tensor import Tensor, reduce_sum

def _bilinear(f, cx, cy):
    ''' Clamped bilinear value of a 2-D map at one normalised point '''

    H, W = f.shape
    px = (np.clip(cx, -1, 1) + 1) * (W - 1) / 2.0
    py = (np.clip(cy, -1, 1) + 1) * (H - 1) / 2.0
    x0, y0 = min(int(np.floor(px)), W - 2), min(int(np.floor(py)), H - 2)
    fx, fy = px - x0, py - y0
    return (f[y0, x0] * (1 - fx) * (1 - fy) + f[y0, x0 + 1] * fx * (1 - fy)
            + f[y0 + 1, x0] * (1 - fx) * fy + f[y0 + 1, x0 + 1] * fx * fy)


def _layer_norm(t, gain, shift, eps=1e-5):
    return (t - t.mean()) / np.sqrt(t.var() + eps) * gain + shift


# --- spiral geometry ---------------------------------------------------------

def test_two_by_two_spiral_table():
    offsets = spiral_offsets(SpiralConfig(heads=2, points=2, l0=1.0, dl=1.0))
    expect = np.array([[[2.0, 0.0], [-3.0, 0.0]],
                       [[-2.0, 0.0], [3.0, 0.0]]])
    assert_allclose(offsets, expect, rtol=0, atol=1e-12)


def test_radii_and_angular_gaps():
    rng = np.random.default_rng(3)
    for _ in range(50):
        cfg = SpiralConfig(heads=int(rng.integers(1, 6)),
                           points=int(rng.integers(1, 10)),
                           l0=float(rng.uniform(0, 2)),
                           dl=float(rng.uniform(0.01, 1)))
        offsets = spiral_offsets(cfg)
        radius = np.hypot(offsets[..., 0], offsets[..., 1])
        k = np.arange(1, cfg.points + 1)
        assert_allclose(radius, np.broadcast_to(cfg.l0 + k * cfg.dl, radius.shape),
                        rtol=0, atol=1e-12)
        assert np.all(np.diff(radius, axis=1) > 0)

        _, theta = spiral_polar(cfg)
        assert_allclose(np.diff(theta, axis=1), 2 * np.pi / cfg.points, atol=1e-12)


def test_heads_are_rotations_of_each_other():
    cfg = SpiralConfig(heads=4, points=5, l0=0.3, dl=0.7)
    offsets = spiral_offsets(cfg)
    for h in range(1, cfg.heads):
        a = 2 * np.pi * h / cfg.heads
        rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        assert_allclose(offsets[0] @ rot.T, offsets[h], rtol=0, atol=1e-12)


def test_spiral_config_validation():
    with pytest.raises(ConfigError):
        SpiralConfig(heads=0)
    with pytest.raises(ConfigError):
        SpiralConfig(dl=-0.5)


# --- reference grid ----------------------------------------------------------

def test_full_grid_hits_every_pixel_centre():
    grid = reference_grid(4, 4, 1)
    assert grid.shape == (4, 4, 2)
    assert_allclose(grid[0, :, 0], [-1, -1 / 3, 1 / 3, 1])
    assert_allclose(grid[:, 0, 1], [-1, -1 / 3, 1 / 3, 1])


def test_strided_grid_is_symmetric():
    grid = reference_grid(4, 4, 2)
    assert grid.shape == (2, 2, 2)
    assert_allclose(grid[0, :, 0], [-2 / 3, 2 / 3])
    assert_allclose(grid.sum(axis=(0, 1)), 0.0, atol=1e-15)


@pytest.mark.parametrize('shape,g', [((5, 7), 2), ((8, 3), 3), ((6, 6), 4)])
def test_grid_size_and_range(shape, g):
    grid = reference_grid(shape[0], shape[1], g)
    assert grid.shape[:2] == (-(-shape[0] // g), -(-shape[1] // g))
    assert np.all(np.abs(grid) <= 1.0)


def test_grid_stride_larger_than_map():
    with pytest.raises(ShapeError, match='stride'):
        reference_grid(2, 4, 3)


def test_pixel_scale():
    assert_allclose(pixel_scale(3, 5), [0.5, 1.0])


# --- sampling ----------------------------------------------------------------

def test_constant_map_gives_constant_tokens(rng):
    cfg = SpiralConfig(heads=2, points=3)
    params = SfsParams.create(4, cfg, rng)
    params.epsilon.data[...] = rng.normal(size=params.epsilon.shape)
    tokens = sfs_sample(Tensor(np.full((1, 4, 4, 4), 0.3)),
                        reference_grid(4, 4, 2), cfg, params)
    assert tokens.shape == (1, 2, 4 * 3, 4)
    assert_allclose(tokens.data, 0.3, rtol=0, atol=1e-14)


def test_degenerate_spiral_repeats_reference_samples(rng):
    cfg = SpiralConfig(heads=2, points=3, l0=0.0, dl=0.0, grid_stride=1)
    params = SfsParams.create(4, cfg, rng)
    y = rng.normal(size=(2, 4, 3, 3))
    tokens = sfs_sample(Tensor(y), reference_grid(3, 3, 1), cfg, params).data
    tokens = tokens.reshape(2, 2, 9, 3, 4)

    for k in range(3):
        assert_allclose(tokens[:, :, :, k], tokens[:, :, :, 0], atol=1e-15)
    pixels = y.reshape(2, 4, 9).transpose(0, 2, 1)
    assert_allclose(tokens[:, 0, :, 0], pixels, atol=1e-12)


def test_sampling_matches_point_oracle(rng):
    cfg = SpiralConfig(heads=2, points=3, l0=0.4, dl=0.3)
    params = SfsParams.create(2, cfg, rng)
    params.epsilon.data[...] = rng.normal(0, 0.2, size=params.epsilon.shape)
    y = rng.normal(size=(1, 2, 5, 6))
    grid = reference_grid(5, 6, 2)
    tokens = sfs_sample(Tensor(y), grid, cfg, params).data

    scale = pixel_scale(5, 6)
    delta = (spiral_offsets(cfg) + params.epsilon.data) * scale
    for h in range(2):
        for r, (gx, gy) in enumerate(grid.reshape(-1, 2)):
            for k in range(3):
                for c in range(2):
                    expect = _bilinear(y[0, c], gx + delta[h, k, 0],
                                       gy + delta[h, k, 1])
                    assert abs(tokens[0, h, r * 3 + k, c] - expect) < 1e-12


def test_offset_table_size_is_resolution_independent(rng):
    cfg = SpiralConfig()
    for channels in (8, 64):
        params = SfsParams.create(channels, cfg, rng)
        assert params.epsilon.size == cfg.heads * cfg.points * 2
    assert dat_offset_params(64, cfg) > cfg.heads * cfg.points * 2


# --- fusion ------------------------------------------------------------------

def test_zero_value_projection_is_identity(rng):
    cfg = SpiralConfig(heads=2, points=2, grid_stride=1)
    params = SfsParams.create(4, cfg, rng)
    params.attention.wv.data[...] = 0.0
    x = rng.normal(size=(1, 4, 4, 4))
    out = sfs_fuse(Tensor(x), Tensor(rng.normal(size=(1, 4, 2, 2))), cfg, params)
    assert_array_equal(out.data, x)


def test_uniform_coarse_map_gives_uniform_update(rng):
    cfg = SpiralConfig(heads=2, points=4)
    params = SfsParams.create(4, cfg, rng)
    y = np.broadcast_to(rng.normal(size=(1, 4, 1, 1)), (1, 4, 4, 4)).copy()
    x = rng.normal(size=(1, 4, 8, 8))
    delta = sfs_fuse(Tensor(x), Tensor(y), cfg, params).data - x
    assert np.max(np.abs(delta - delta[:, :, :1, :1])) < 1e-9


def test_fusion_matches_loop_oracle(rng):
    C, H, P = 8, 2, 2
    d = C // H
    cfg = SpiralConfig(heads=H, points=P, l0=0.3, dl=0.4, grid_stride=1)
    params = SfsParams.create(C, cfg, rng)
    params.epsilon.data[...] = rng.normal(0, 0.1, size=params.epsilon.shape)
    for t in params.tensors().values():
        if t is not params.epsilon:
            t.data[...] += rng.normal(0, 0.1, size=t.shape)
    att = params.attention
    x, y = rng.normal(size=(1, C, 4, 4)), rng.normal(size=(1, C, 2, 2))

    out = sfs_fuse(Tensor(x), Tensor(y), cfg, params).data

    grid = reference_grid(2, 2, 1).reshape(-1, 2)
    delta = (spiral_offsets(cfg) + params.epsilon.data) * pixel_scale(2, 2)
    expect = x.copy()
    for i in range(4):
        for j in range(4):
            q_tok = _layer_norm(x[0, :, i, j], params.ln_q_gain.data,
                                params.ln_q_shift.data)
            q = att.wq.data @ q_tok + att.bq.data
            fused = np.zeros(C)
            for h in range(H):
                sl = slice(h * d, (h + 1) * d)
                keys, values = [], []
                for gx, gy in grid:
                    for k in range(P):
                        tok = np.array([_bilinear(y[0, c], gx + delta[h, k, 0],
                                                  gy + delta[h, k, 1])
                                        for c in range(C)])
                        tok = _layer_norm(tok, params.ln_kv_gain.data,
                                          params.ln_kv_shift.data)
                        keys.append((att.wk.data @ tok + att.bk.data)[sl])
                        values.append((att.wv.data @ tok + att.bv.data)[sl])
                scores = np.array([q[sl] @ key for key in keys]) / np.sqrt(d)
                w = np.exp(scores - scores.max())
                w /= w.sum()
                fused[sl] = np.sum(w[:, None] * np.array(values), axis=0)
            expect[0, :, i, j] += att.wo.data @ fused + att.bo.data

    assert np.max(np.abs(out - expect)) < 1e-9


def test_fusion_gradients(rng):
    cfg = SpiralConfig(heads=2, points=2, l0=0.3, dl=0.4, grid_stride=1)
    params = SfsParams.create(8, cfg, rng)
    params.epsilon.data[...] = rng.normal(0, 0.1, size=params.epsilon.shape)
    x = rng.normal(size=(1, 8, 4, 4))
    y = rng.normal(size=(1, 8, 2, 2))

    error = grad_check(lambda x, y, *_: reduce_sum(sfs_fuse(x, y, cfg, params)),
                       [x, y] + list(params.tensors().values()),
                       max_elements=12, atol=ROUNDOFF_FLOOR)
    assert error < 1e-4


def test_attention_weights_shape(rng):
    cfg = SpiralConfig(heads=2, points=3, grid_stride=2)
    params = SfsParams.create(4, cfg, rng)
    _, weights = sfs_fuse(Tensor(rng.normal(size=(2, 4, 8, 8))),
                          Tensor(rng.normal(size=(2, 4, 4, 4))), cfg, params,
                          return_weights=True)
    assert weights.shape == (2, 2, 64, 4 * 3)
    assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)


def test_heads_only_attend_to_their_own_samples(rng):
    cfg = SpiralConfig(heads=2, points=3, grid_stride=2)
    params = SfsParams.create(4, cfg, rng)
    x = Tensor(rng.normal(size=(1, 4, 8, 8)))
    y = Tensor(rng.normal(size=(1, 4, 4, 4)))
    _, before = sfs_fuse(x, y, cfg, params, return_weights=True)

    # moving the spiral of head 0 must leave head 1 untouched
    params.epsilon.data[0] += 0.3
    _, after = sfs_fuse(x, y, cfg, params, return_weights=True)
    assert_allclose(after[:, 1], before[:, 1], rtol=0, atol=1e-14)
    assert not np.allclose(after[:, 0], before[:, 0])


def test_fusion_rejects_mismatched_levels(rng):
    cfg = SpiralConfig(heads=2, points=2)
    params = SfsParams.create(4, cfg, rng)
    with pytest.raises(ShapeError, match='half'):
        sfs_fuse(Tensor(rng.normal(size=(1, 4, 8, 8))),
                 Tensor(rng.normal(size=(1, 4, 3, 4))), cfg, params)
    with pytest.raises(ShapeError, match='channels'):
        sfs_fuse(Tensor(rng.normal(size=(1, 4, 8, 8))),
                 Tensor(rng.normal(size=(1, 2, 4, 4))), cfg, params)


def test_grid_stride_is_capped_at_coarse_size(rng):
    cfg = SpiralConfig(heads=2, points=2, grid_stride=4)
    params = SfsParams.create(4, cfg, rng)
    out = sfs_fuse(Tensor(rng.normal(size=(1, 4, 4, 4))),
                   Tensor(rng.normal(size=(1, 4, 2, 2))), cfg, params)
    assert out.shape == (1, 4, 4, 4)


# --- offset dumps ------------------------------------------------------------

def test_offset_dump_round_trip(tmp_path, rng):
    cfg = SpiralConfig()
    path = tmp_path / 'offsets.txt'
    write_offsets(str(path), cfg)
    lines = path.read_text().splitlines()
    assert len(lines) == cfg.heads * cfg.points
    assert lines[0].split()[:2] == ['1', '1']
    assert_array_equal(read_offsets(str(path)), spiral_offsets(cfg))

    params = SfsParams.create(8, cfg, rng)
    params.epsilon.data[...] = 0.25
    write_offsets(str(path), cfg, params)
    assert_array_equal(read_offsets(str(path)), spiral_offsets(cfg) + 0.25)


def test_malformed_offset_dump(tmp_path):
    path = tmp_path / 'offsets.txt'
    path.write_text('1 1 0.5\n')
    with pytest.raises(ValueError, match='line 1'):
        read_offsets(str(path))
