#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from core.tensor import parameter
from core.nsfpn import NsFpnConfig
from core.sfs import SpiralConfig

@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_map(rng):
    ''' 2 x 3 x 8 x 8 map that requires a gradient '''
    return parameter(rng.normal(size=(2, 3, 8, 8)))


@pytest.fixture
def tiny_config():
    ''' Every component present, small enough for fast tests '''
    return NsFpnConfig(channels=8, backbone_widths=(4, 4, 8, 8), head_width=4,
                       spiral=SpiralConfig(heads=2, points=2, l0=0.5, dl=0.5,
                                           grid_stride=2))


@pytest.fixture
def smoke_args(tmp_path):
    ''' Builds RunFile argument lists for the tiny smoke preset '''

    def build(command, out, *extra):
        return [command, '--preset', 'smoke', '--out', str(tmp_path / out)] + \
            list(extra)
    return build
