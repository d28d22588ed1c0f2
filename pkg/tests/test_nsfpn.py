#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest
from dataclasses import replace
from numpy.testing import assert_allclose, assert_array_equal

from core.commons import CheckpointError, ConfigError, ShapeError
from core.export import load_checkpoint, restore_model, save_checkpoint
from core.gradcheck import ROUNDOFF_FLOOR, desk_model, grad_check
from core.lfp import frozen_gates
from core.nsfpn import NsFpn, NsFpnConfig, PyramidFeatures, check_chain, \
    count_params_flops, lateral_reduce, nsfpn_forward, seg_head, tiny_backbone
from core.tensor import ConvParams, Tensor, reduce_sum

@pytest.mark.parametrize('size', [32, 64, 128])
@pytest.mark.parametrize('mode', ['plain', 'ns'])
def test_pyramid_shapes(tiny_config, size, mode):
    model = NsFpn(replace(tiny_config, fpn_mode=mode), seed=1)
    image = Tensor(np.random.default_rng(size).uniform(size=(1, 1, size, size)))

    pyramid = model.pyramid(image)
    assert pyramid.shapes() == [(1, 8, size // s, size // s) for s in (2, 4, 8, 16)]
    assert model.forward(image).shape == (1, 1, size, size)


def test_default_pyramid_has_64_channels():
    model = NsFpn(NsFpnConfig(fpn_mode='plain'))
    image = Tensor(np.zeros((1, 1, 64, 64)))
    assert model.pyramid(image).shapes() == \
        [(1, 64, 32, 32), (1, 64, 16, 16), (1, 64, 8, 8), (1, 64, 4, 4)]


def test_topology_of_full_mode(tiny_config):
    model = NsFpn(tiny_config)
    assert sorted(model.lfp) == [1, 2, 3, 4]
    assert sorted(model.sfs) == [1, 2, 3]

    model = NsFpn(replace(tiny_config, lfp_levels=(2, 3)))
    assert sorted(model.lfp) == [2, 3]
    assert not NsFpn(replace(tiny_config, fpn_mode='plain')).lfp


def test_identity_laterals_pass_features_through(rng):
    feats = [Tensor(rng.normal(size=(1, 64, 32 // 2**i, 32 // 2**i)))
             for i in range(4)]
    out = lateral_reduce(feats, [ConvParams.identity(64)] * 4)
    for a, b in zip(out.levels, feats):
        assert_array_equal(a.data, b.data)


def test_lateral_channel_counts(rng):
    feats = [Tensor(rng.normal(size=(1, c, s, s)))
             for c, s in zip((8, 16, 32, 64), (32, 16, 8, 4))]
    laterals = [ConvParams.create(c, 64, 1, rng=rng) for c in (8, 16, 32, 64)]
    out = lateral_reduce(feats, laterals)
    assert out.shapes() == [(1, 64, s, s) for s in (32, 16, 8, 4)]


def test_laterals_are_pixelwise(rng):
    feats = [rng.normal(size=(1, 4, 16 // 2**i, 16 // 2**i)) for i in range(4)]
    laterals = [ConvParams.create(4, 6, 1, rng=rng) for _ in range(4)]
    before = lateral_reduce([Tensor(f) for f in feats], laterals)[0].data

    feats[0][0, :, 0, 0] += 10.0
    after = lateral_reduce([Tensor(f) for f in feats], laterals)[0].data
    assert np.any(after[0, :, 0, 0] != before[0, :, 0, 0])
    assert_array_equal(after[0, :, 1:, :], before[0, :, 1:, :])
    assert_array_equal(after[0, :, 0, 1:], before[0, :, 0, 1:])


def test_broken_stride_chain_is_rejected(rng):
    feats = [Tensor(rng.normal(size=(1, 2, s, s))) for s in (16, 8, 3, 2)]
    with pytest.raises(ShapeError, match='stride chain'):
        check_chain(feats, 'pyramid')
    with pytest.raises(ShapeError, match='expected 4'):
        PyramidFeatures(feats[:3])


def test_plain_mode_without_top_down_keeps_finest_lateral(tiny_config, rng):
    model = NsFpn(replace(tiny_config, fpn_mode='plain'))
    for conv in model.laterals[1:]:
        conv.weight.data[...] = 0.0
        conv.bias.data[...] = 0.0

    feats = tiny_backbone(Tensor(rng.uniform(size=(1, 1, 32, 32))), model.backbone)
    y = nsfpn_forward(feats, model)
    x = lateral_reduce(feats, model.laterals)
    assert_array_equal(y[0].data, x[0].data)


def test_backbone_of_zero_image_is_zero(tiny_config):
    model = NsFpn(tiny_config)
    for f in tiny_backbone(Tensor(np.zeros((2, 1, 32, 32))), model.backbone):
        assert_array_equal(f.data, 0.0)


def test_backbone_needs_sizes_divisible_by_16(tiny_config):
    model = NsFpn(tiny_config)
    with pytest.raises(ShapeError, match='divisible by 16'):
        tiny_backbone(Tensor(np.zeros((1, 1, 40, 32))), model.backbone)


def test_seg_head_with_zero_weights_returns_bias(tiny_config, rng):
    model = NsFpn(tiny_config)
    for conv in model.head:
        conv.weight.data[...] = 0.0
    logits = seg_head(Tensor(rng.normal(size=(2, 8, 8, 8))), model.head)
    assert logits.shape == (2, 1, 16, 16)
    assert_allclose(logits.data, tiny_config.head_bias, atol=1e-12)


def test_seg_head_gradients(tiny_config, rng):
    model = NsFpn(tiny_config)
    tensors = [t for conv in model.head for t in conv.tensors().values()]
    error = grad_check(lambda y, *_: reduce_sum(seg_head(y, model.head)),
                       [rng.normal(size=(1, 8, 4, 4))] + tensors,
                       max_elements=24, atol=ROUNDOFF_FLOOR)
    assert error < 1e-4


@pytest.mark.parametrize('mode', ['plain', 'ns'])
def test_model_gradients(rng, mode):
    model = desk_model(seed=3, fpn_mode=mode)
    image = rng.uniform(size=(1, 1, 16, 16))
    params = list(model.parameters().values())

    with frozen_gates():
        error = grad_check(lambda *_: reduce_sum(model.forward(Tensor(image))),
                           params, max_elements=3, atol=ROUNDOFF_FLOOR)
    assert error < 1e-4


def test_construction_is_deterministic(tiny_config):
    a, b = NsFpn(tiny_config, seed=7).state_dict(), NsFpn(tiny_config, seed=7).state_dict()
    assert a.keys() == b.keys()
    for name in a:
        assert_array_equal(a[name], b[name])


def test_shared_parts_agree_across_modes(tiny_config):
    ns = NsFpn(tiny_config, seed=2).state_dict()
    plain = NsFpn(replace(tiny_config, fpn_mode='plain'), seed=2).state_dict()
    for name, value in plain.items():
        assert_array_equal(ns[name], value)


def test_config_validation():
    with pytest.raises(ConfigError, match='fpn_mode'):
        NsFpnConfig(fpn_mode='dense')
    with pytest.raises(ConfigError, match='lfp_levels'):
        NsFpnConfig(lfp_levels=(0, 1))
    with pytest.raises(ShapeError, match='divisible'):
        NsFpnConfig(channels=6)


def test_config_dict_round_trip(tiny_config):
    restored = NsFpnConfig.from_dict(tiny_config.to_dict())
    assert restored == tiny_config


# --- checkpoints -------------------------------------------------------------

def test_checkpoint_round_trip(tiny_config, tmp_path):
    model = NsFpn(tiny_config, seed=4)
    for t in model.parameters().values():
        t.data += 0.125
    path = str(tmp_path / 'model.npz')
    save_checkpoint(path, model)

    config, arrays = load_checkpoint(path)
    assert config == tiny_config
    restored = restore_model(path)
    for name, value in model.state_dict().items():
        assert_array_equal(restored.state_dict()[name], value)


def test_checkpoint_architecture_mismatch(tiny_config, tmp_path):
    path = str(tmp_path / 'model.npz')
    save_checkpoint(path, NsFpn(tiny_config))
    with pytest.raises(CheckpointError, match='does not match'):
        restore_model(path, replace(tiny_config, fpn_mode='plain'))
    with pytest.raises(CheckpointError, match='shape'):
        restore_model(path, replace(tiny_config, head_width=6))


def test_unreadable_checkpoint(tmp_path):
    path = tmp_path / 'model.npz'
    path.write_bytes(b'not an archive')
    with pytest.raises(CheckpointError, match='not a readable'):
        load_checkpoint(str(path))


# --- complexity --------------------------------------------------------------

def test_default_component_counts():
    report = count_params_flops(NsFpn(NsFpnConfig()))
    detail = report['detail']

    assert report['params']['lfp'] == 400
    assert detail['lfp.instances'] == 4
    assert detail['sfs.edges'] == 3
    assert detail['sfs.offsets'] == 192
    assert detail['dat.offsets'] > detail['sfs.offsets']
    assert report['params']['total'] == \
        sum(t.size for t in NsFpn(NsFpnConfig()).parameters().values())


def test_attention_projections_scale_quadratically():
    small = count_params_flops(NsFpn(NsFpnConfig(channels=32)))['detail']
    large = count_params_flops(NsFpn(NsFpnConfig(channels=64)))['detail']
    assert large['sfs.attention_weights'] == 4 * small['sfs.attention_weights']


def test_counts_are_stable(tiny_config):
    a = count_params_flops(NsFpn(tiny_config, seed=0), (32, 32))
    b = count_params_flops(NsFpn(tiny_config, seed=9), (32, 32))
    assert a == b
    assert count_params_flops(NsFpn(replace(tiny_config, fpn_mode='plain')),
                              (32, 32))['params']['sfs'] == 0
