#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Low-frequency guided feature purification.

    [F_l, F_h] = dwt2(X)
    A_s  = sigmoid(conv7x7(avgpool_c(F_l) || maxpool_c(F_l)))
    F^_h = A_s * F_h                                    (per detail band)
    F~_h = G(F^_h) where |F^_h| < tau, F^_h elsewhere   (G: Gaussian blur)
    X'   = idwt2(F_l, F~_h)
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass

from .commons import ShapeError
from .tensor import Tensor, ConvParams, as_tensor, check_tensor4, conv2d, \
    depthwise_conv2d, mul, pad2d, parameter, pool_channel_avg_max, \
    primitive, sigmoid, softplus, where_frozen
from .wavelet import dwt2, idwt2

DETAIL_BANDS = ('lh', 'hl', 'hh')

@dataclass
class LfpParams:
    '''
    Parameters of one purification block: the spatial-attention convolution
    (2 -> 1 channels), the unconstrained sigma_raw (sigma = softplus), and the
    fixed gating settings. `tau_abs`, when set, replaces the quantile gate by
    an absolute threshold.
    '''
    attention: ConvParams
    sigma_raw: Tensor
    tau_quantile: float = 0.5
    kernel_size: int = 3
    tau_abs: float = None

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ShapeError('gaussian kernel size must be odd and positive, '
                             'got '+str(self.kernel_size))
        if self.attention.in_channels != 2 or self.attention.out_channels != 1:
            raise ShapeError('spatial attention conv must map 2 -> 1 channels, '
                             'got '+str(self.attention.weight.shape))
        if not 0.0 <= self.tau_quantile <= 1.0:
            raise ValueError('tau_quantile must lie in [0, 1], got '+
                             str(self.tau_quantile))

    @classmethod
    def create(cls, rng=None, sigma_init=1.0, tau_quantile=0.5, kernel_size=3,
               attention_kernel=7, tau_abs=None):

        conv = ConvParams.create(2, 1, attention_kernel,
                                 padding=attention_kernel // 2, rng=rng, gain=1.0)
        # Inverse softplus, so that the effective sigma starts at sigma_init
        raw = np.log(np.expm1(sigma_init))
        return cls(conv, parameter([raw]), tau_quantile, kernel_size, tau_abs)

    @property
    def sigma(self):
        return float(np.logaddexp(0.0, self.sigma_raw.data[0]))

    def tensors(self):
        return {'attention.weight': self.attention.weight,
                'attention.bias': self.attention.bias,
                'sigma_raw': self.sigma_raw}

    def count(self):
        return sum(t.size for t in self.tensors().values())



class frozen_gates(object):
    '''
    Inside the block, every gate keeps the mask of its first evaluation.
    Finite-difference checks then see the same piecewise branch as the
    analytic backward (which never differentiates through the mask).
    '''

    _active = []

    def __init__(self):
        self.masks = {}

    def __enter__(self):
        frozen_gates._active.append(self)
        return self

    def __exit__(self, *exc):
        frozen_gates._active.pop()
        return False

    @classmethod
    def lookup(cls, key, compute):
        if not cls._active:
            return compute()
        masks = cls._active[-1].masks
        if key not in masks:
            masks[key] = compute()
        return masks[key]



def spatial_attention(f_l, params):
    '''
    Attention map B x 1 x h x w in (0, 1) computed from the ll band. The conv
    padding is realised by edge-symmetric extension so that constant input
    yields a constant map.
    '''

    f_l = as_tensor(f_l)
    check_tensor4(f_l, 'spatial_attention input')
    conv = params.attention
    pooled = pool_channel_avg_max(f_l)
    p = conv.padding
    if p:
        pooled = pad2d(pooled, (p, p, p, p), 'symmetric')
    return sigmoid(conv2d(pooled, ConvParams(conv.weight, conv.bias,
                                             conv.stride, 0)))



def modulate(a_s, bands):
    ''' Multiply each detail band by the attention map (broadcast over C) '''

    a_s = as_tensor(a_s)
    B, C, h, w = bands.shape
    if a_s.shape != (B, 1, h, w):
        raise ShapeError('modulate: attention map '+str(a_s.shape)+
                         ' must be B x 1 x h x w = '+str((B, 1, h, w)))
    return bands.replace(**{n: mul(getattr(bands, n), a_s)
                            for n in DETAIL_BANDS})



def gaussian_kernel(sigma, k=3):
    '''
    Normalised k x k Gaussian, G(i, j) proportional to
    exp(-((i - c)^2 + (j - c)^2) / (2 sigma^2)) with c = k // 2.

    Parameters
    ----------
    sigma : float or Tensor
        Positive standard deviation; a Tensor receives a gradient.
    k : int, optional
        Odd kernel size. The default is 3.

    Returns
    -------
    Tensor
        k x k kernel summing to 1.

    '''

    s = as_tensor(sigma)
    if k < 1 or k % 2 == 0:
        raise ShapeError('gaussian kernel size must be odd, got '+str(k))
    sv = float(s.data.reshape(-1)[0])
    if not sv > 0:
        raise ValueError('gaussian sigma must be positive, got '+str(sv))

    i = np.arange(k) - k // 2
    r2 = (i[:, None]**2 + i[None, :]**2).astype(float)
    e = np.exp(-r2 / (2.0 * sv**2))
    G = e / e.sum()

    def backward(g):
        dG = G * (r2 - np.sum(G * r2)) / sv**3
        return (np.full(s.shape, np.sum(g * dG)),)

    return primitive('gaussian_kernel', G, [s], backward)



def gate_threshold(values, params):
    '''
    Per-sample threshold tau (B x 1 x 1 x 1) for one detail band: the
    tau_quantile-quantile of |values|, or tau_abs when set. Quantile 0 gates
    nothing and quantile 1 gates everything.
    '''

    B = values.shape[0]
    if params.tau_abs is not None:
        return np.full((B, 1, 1, 1), float(params.tau_abs))
    q = params.tau_quantile
    if q >= 1.0:
        return np.full((B, 1, 1, 1), np.inf)
    if q <= 0.0:
        return np.full((B, 1, 1, 1), -np.inf)
    return np.quantile(np.abs(values).reshape(B, -1), q, axis=1) \
        .reshape(B, 1, 1, 1)



def gate_margin(bands, params):
    ''' Smallest distance between any |detail value| and its threshold '''

    margin = np.inf
    for name in DETAIL_BANDS:
        v = getattr(bands, name).data
        tau = gate_threshold(v, params)
        if np.all(np.isfinite(tau)):
            margin = min(margin, float(np.min(np.abs(np.abs(v) - tau))))
    return margin



def smooth_band(band, kernel):
    ''' Depthwise Gaussian blur with symmetric padding (shape preserving) '''

    c = kernel.shape[0] // 2
    return depthwise_conv2d(pad2d(band, (c, c, c, c), 'symmetric'), kernel)



def gated_gaussian(f_hat, params):
    '''
    Replace detail responses with |value| < tau by their Gaussian-smoothed
    counterpart; keep the others raw. The ll band passes through. The gate
    mask is a constant for backward.
    '''

    kernel = gaussian_kernel(softplus(params.sigma_raw), params.kernel_size)

    out = {}
    for idx, name in enumerate(DETAIL_BANDS):
        band = getattr(f_hat, name)
        mask = frozen_gates.lookup((id(params), idx),
            lambda: np.abs(band.data) < gate_threshold(band.data, params))
        out[name] = where_frozen(mask, smooth_band(band, kernel), band)

    return f_hat.replace(**out)



def lfp_forward(x, params, pad=False):
    '''
    Purify a B x C x H x W map; the output has the input's shape.

    Parameters
    ----------
    x : Tensor
        Lateral feature map.
    params : LfpParams
    pad : bool, optional
        Accept odd sizes via symmetric wavelet padding. The default is False.

    Returns
    -------
    Tensor

    '''

    bands = dwt2(x, pad=pad)
    a_s = spatial_attention(bands.ll, params)
    return idwt2(gated_gaussian(modulate(a_s, bands), params))
