#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Single-level 2-D orthonormal Haar analysis and synthesis.

For every 2x2 block (a, b; c, d) of the input:
    ll = (a + b + c + d) / 2
    lh = (a - b + c - d) / 2    low-pass along H, high-pass along W
    hl = (a + b - c - d) / 2    high-pass along H, low-pass along W
    hh = (a - b - c + d) / 2
The analysis matrix is orthonormal, so its adjoint (used in backward) is the
synthesis and vice versa.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass

from .commons import ShapeError
from .tensor import Tensor, as_tensor, check_tensor4, getitem, pad2d, \
    primitive, stack

BAND_NAMES = ('ll', 'lh', 'hl', 'hh')

@dataclass
class WaveletBands:
    '''
    One low-frequency band and three detail bands, each B x C x H/2 x W/2.
    `pad` holds the (rows, cols) appended to the input before analysis, so
    that synthesis can crop back to the original size.
    '''
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    pad: tuple = (0, 0)

    def __post_init__(self):
        shapes = [tuple(t.shape) for t in self.bands()]
        if any(s != shapes[0] for s in shapes):
            raise ShapeError('wavelet bands differ in shape: '+
                ', '.join(n+'='+str(s) for n, s in zip(BAND_NAMES, shapes)))

    def bands(self):
        return (self.ll, self.lh, self.hl, self.hh)

    def details(self):
        return (self.lh, self.hl, self.hh)

    def replace(self, **bands):
        ''' Copy with some bands swapped out '''
        kw = dict(zip(BAND_NAMES, self.bands()))
        kw.update(bands)
        return WaveletBands(pad=self.pad, **kw)

    @property
    def shape(self):
        return self.ll.shape

    def energy(self):
        ''' Sum of squares over all four bands '''
        return float(sum(np.sum(t.data**2) for t in self.bands()))

    def detail_energy(self):
        return float(sum(np.sum(t.data**2) for t in self.details()))



def _analyze(x):

    a, b = x[..., 0::2, 0::2], x[..., 0::2, 1::2]
    c, d = x[..., 1::2, 0::2], x[..., 1::2, 1::2]
    return np.stack([a + b + c + d, a - b + c - d,
                     a + b - c - d, a - b - c + d]) / 2.0

def _synthesize(bands):

    ll, lh, hl, hh = bands
    shape = ll.shape[:-2] + (2 * ll.shape[-2], 2 * ll.shape[-1])
    x = np.empty(shape)
    x[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    x[..., 0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    x[..., 1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    x[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return x



def dwt2(x, pad=False):
    '''
    Haar analysis of a B x C x H x W tensor.

    Parameters
    ----------
    x : Tensor
        Input map.
    pad : bool, optional
        Symmetrically pad one trailing row/column when H or W is odd. When
        False, odd sizes are rejected. The default is False.

    Returns
    -------
    WaveletBands

    '''

    x = as_tensor(x)
    check_tensor4(x, 'dwt2 input')
    H, W = x.shape[2:]
    ph, pw = H % 2, W % 2
    if ph or pw:
        if not pad:
            axis = 'height' if ph else 'width'
            raise ShapeError('dwt2: '+axis+' '+str(H if ph else W)+
                             ' is odd; enable padding to analyse odd sizes')
        x = pad2d(x, (0, ph, 0, pw), 'symmetric')

    stacked = primitive('dwt2', _analyze(x.data), [x],
                        lambda g: (_synthesize(g),))
    return WaveletBands(*(getitem(stacked, i) for i in range(4)),
                        pad=(ph, pw))



def idwt2(bands):
    '''
    Exact inverse of dwt2, cropping any padding that dwt2 added.
    '''

    if not isinstance(bands, WaveletBands):
        bands = WaveletBands(*bands)
    check_tensor4(bands.ll, 'idwt2 band')

    stacked = stack(bands.bands())
    x = primitive('idwt2', _synthesize(stacked.data), [stacked],
                  lambda g: (_analyze(g),))

    ph, pw = bands.pad
    if ph or pw:
        H, W = x.shape[2:]
        x = getitem(x, (Ellipsis, slice(0, H - ph), slice(0, W - pw)))
    return x
