#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from core.commons import ConfigError
from core.metrics import connected_components
from core.scene import SceneConfig, make_dataset, synth_scene

def test_same_seed_same_scene():
    cfg = SceneConfig()
    a, b = synth_scene(11, cfg, 3), synth_scene(11, cfg, 3)
    assert_array_equal(a[0].data, b[0].data)
    assert_array_equal(a[1].data, b[1].data)
    assert not np.array_equal(a[0].data, synth_scene(11, cfg, 4)[0].data)


def test_scene_ranges():
    image, mask = synth_scene(0, SceneConfig(height=32, width=48))
    assert image.shape == mask.shape == (1, 1, 32, 48)
    assert image.data.min() >= 0.0 and image.data.max() <= 1.0
    assert set(np.unique(mask.data)) <= {0.0, 1.0}


def test_no_targets_gives_empty_mask():
    _, mask = synth_scene(1, SceneConfig(targets=(0, 0)))
    assert not mask.data.any()


def test_single_clean_target_follows_half_peak_rule():
    cfg = SceneConfig(targets=(1, 1), clutter_amplitude=0.0, noise_std=0.0,
                      distractors=0)
    image, mask = synth_scene(2, cfg)
    signal = image.data[0, 0] - cfg.background
    peak = np.unravel_index(np.argmax(signal), signal.shape)

    assert mask.data[0, 0][peak] == 1.0
    assert_array_equal(mask.data[0, 0] > 0, signal > 0.5 * signal[peak])
    assert len(connected_components(mask.data)) == 1


def test_region_count_stays_in_configured_range():
    cfg = SceneConfig(targets=(1, 3))
    for index in range(20):
        _, mask = synth_scene(4, cfg, index)
        assert 1 <= len(connected_components(mask.data)) <= 3


def test_dataset_is_independent_of_worker_count():
    cfg = SceneConfig(height=32, width=32)
    one = make_dataset(9, 6, cfg, workers=1)
    many = make_dataset(9, 6, cfg, workers=4)
    assert_array_equal(one[0], many[0])
    assert_array_equal(one[1], many[1])
    assert one[0].shape == (6, 1, 32, 32)


def test_empty_dataset():
    images, masks = make_dataset(0, 0, SceneConfig(height=16, width=16))
    assert images.shape == masks.shape == (0, 1, 16, 16)


@pytest.mark.parametrize('kwargs', [{'targets': (3, 1)},
                                    {'amplitude': (0.01, 0.5), 'noise_std': 0.05},
                                    {'radius': (0.0, 1.0)},
                                    {'height': 6}])
def test_invalid_scene_configs(kwargs):
    with pytest.raises(ConfigError):
        SceneConfig(**kwargs)


def test_overcrowded_scene_is_rejected():
    cfg = SceneConfig(height=16, width=16, targets=(6, 6), min_separation=12.0)
    with pytest.raises(ConfigError, match='could not place'):
        synth_scene(0, cfg)
