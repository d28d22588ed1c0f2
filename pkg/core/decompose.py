#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Frequency decomposition of grayscale images through one Haar level:
lowfreq = idwt2(ll, 0, 0, 0) and highfreq = idwt2(0, lh, hl, hh), so that
lowfreq + highfreq reproduces the image exactly.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass

from .commons import ShapeError
from .tensor import Tensor
from .wavelet import dwt2, idwt2

VARIANTS = ('original', 'lowfreq', 'highfreq')

# Raster offset of the zero level of the signed high-frequency image
HIGHFREQ_OFFSET = 0.5

@dataclass
class Decomposition:
    lowfreq: np.ndarray
    highfreq: np.ndarray
    ll_energy: float
    detail_energy: float



def _plane(image):
    a = image.data if isinstance(image, Tensor) else np.asarray(image, float)
    a = np.squeeze(a) if a.ndim != 2 else a
    if a.ndim != 2:
        raise ShapeError('decomposition expects one H x W image, got '+
                         str(np.shape(a)))
    return a



def freq_decompose_image(image):
    '''
    Split an image into its low- and high-frequency reconstructions. Odd
    sizes are symmetrically padded for the analysis and cropped back.

    Returns
    -------
    Decomposition
        Both H x W reconstructions plus the energy of the ll band and of the
        three detail bands.

    '''

    x = _plane(image)
    bands = dwt2(Tensor(x[None, None]), pad=True)
    zero = Tensor(np.zeros(bands.shape))

    low = idwt2(bands.replace(lh=zero, hl=zero, hh=zero)).data[0, 0]
    high = idwt2(bands.replace(ll=zero)).data[0, 0]
    return Decomposition(low, high, float(np.sum(bands.ll.data**2)),
                         bands.detail_energy())



def detail_energy(image):
    ''' Energy of the three detail bands of an image '''
    return freq_decompose_image(image).detail_energy



def variant_images(image):
    '''
    The three evaluation inputs of an image: original, low-frequency
    reconstruction, and high-frequency reconstruction shifted by
    HIGHFREQ_OFFSET into the displayable range (clipped to [0, 1]).
    '''

    d = freq_decompose_image(image)
    x = _plane(image)
    return {'original': x,
            'lowfreq': np.clip(d.lowfreq, 0.0, 1.0),
            'highfreq': np.clip(d.highfreq + HIGHFREQ_OFFSET, 0.0, 1.0)}



def highfreq_to_raster(highfreq, bits=16):
    '''
    Quantise a signed high-frequency image for a `bits` raster: zero maps to
    2^(bits-1). Returns the integer image and the number of clipped pixels.
    '''

    maxval = (1 << bits) - 1
    q = np.round(highfreq * maxval) + (1 << (bits - 1))
    clipped = int(np.count_nonzero((q < 0) | (q > maxval)))
    return np.clip(q, 0, maxval).astype(np.uint16 if bits > 8 else np.uint8), \
        clipped



def highfreq_from_raster(raw, bits=16):
    maxval = (1 << bits) - 1
    return (raw.astype(np.float64) - (1 << (bits - 1))) / maxval
