#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Spiral-aware feature sampling: the coarser pyramid level is sampled around a
sparse reference grid at spiral-patterned offsets shared by every reference
point (plus a learnable bias table), and the samples act as keys/values of a
cross attention whose queries are the pixels of the finer level.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass

from .commons import ConfigError, ShapeError
from .tensor import Tensor, AttentionParams, add, as_tensor, \
    bilinear_sample, check_tensor4, layer_norm, mha_cross, mul, parameter, \
    reshape, transpose

@dataclass
class SpiralConfig:
    '''
    heads H, points per head P, initial radius l0 and radial step dl (coarse
    pixels), and the reference grid stride g.
    '''
    heads: int = 4
    points: int = 8
    l0: float = 0.5
    dl: float = 0.5
    grid_stride: int = 2

    def __post_init__(self):
        if self.heads < 1 or self.points < 1 or self.grid_stride < 1:
            raise ConfigError('spiral heads, points and grid_stride must be '
                              'positive integers')
        if self.l0 < 0 or self.dl < 0:
            raise ConfigError('spiral l0 and dl must be non-negative')



@dataclass
class SfsParams:
    '''
    epsilon: H x P x 2 offset bias (coarse pixels), shared by all reference
    points and queries; cross-attention projections; layer norms for the
    query side and the key/value side.
    '''
    epsilon: Tensor
    attention: AttentionParams
    ln_q_gain: Tensor
    ln_q_shift: Tensor
    ln_kv_gain: Tensor
    ln_kv_shift: Tensor

    @classmethod
    def create(cls, channels, cfg, rng=None):

        rng = np.random.default_rng(0) if rng is None else rng
        return cls(parameter(np.zeros((cfg.heads, cfg.points, 2))),
                   AttentionParams.create(channels, cfg.heads, rng),
                   parameter(np.ones(channels)), parameter(np.zeros(channels)),
                   parameter(np.ones(channels)), parameter(np.zeros(channels)))

    def tensors(self):
        out = {'epsilon': self.epsilon}
        out.update({'attention.'+k: v
                    for k, v in self.attention.tensors().items()})
        out.update({'ln_q.gain': self.ln_q_gain, 'ln_q.shift': self.ln_q_shift,
                    'ln_kv.gain': self.ln_kv_gain,
                    'ln_kv.shift': self.ln_kv_shift})
        return out

    def count(self):
        return sum(t.size for t in self.tensors().values())



def spiral_polar(cfg):
    '''
    Radii and angles (H x P each) of the spiral, with 1-based h and k:
        theta(h, k) = 2 pi k / P + 2 pi h / H,   l(k) = l0 + k dl
    '''

    h = np.arange(1, cfg.heads + 1)[:, None]
    k = np.arange(1, cfg.points + 1)[None, :]
    theta = 2 * np.pi * k / cfg.points + 2 * np.pi * h / cfg.heads
    radius = np.broadcast_to(cfg.l0 + k * cfg.dl, theta.shape).astype(float)
    return radius, theta



def spiral_offsets(cfg):
    ''' H x P x 2 offsets (dx, dy) in coarse-pixel units '''

    radius, theta = spiral_polar(cfg)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=-1)



def _cell_centers(n, g):

    starts = np.arange(0, n, g)
    centers = (starts + np.minimum(starts + g, n) - 1) / 2.0
    return 2.0 * centers / (n - 1) - 1.0 if n > 1 else np.zeros(len(starts))

def reference_grid(height, width, g):
    '''
    Reference points at the centres of the g x g cells of a height x width
    map, in normalised sampling coordinates.

    Returns
    -------
    ndarray
        ceil(height/g) x ceil(width/g) x 2 array of (x, y).

    '''

    if g < 1 or g > min(height, width):
        raise ShapeError('reference_grid: stride '+str(g)+' must lie in [1, '+
                         str(min(height, width))+'] for a '+str(height)+'x'+
                         str(width)+' map')
    ys, xs = _cell_centers(height, g), _cell_centers(width, g)
    grid = np.empty((len(ys), len(xs), 2))
    grid[..., 0] = xs[None, :]
    grid[..., 1] = ys[:, None]
    return grid



def pixel_scale(height, width):
    ''' Normalised units per coarse pixel along (x, y) '''

    return np.array([2.0 / (width - 1) if width > 1 else 0.0,
                     2.0 / (height - 1) if height > 1 else 0.0])



def sfs_sample(y_next, grid, cfg, params):
    '''
    Sample the coarse map at p + s(h, k) + epsilon(h, k) for every head h,
    reference point p and spiral point k.

    Parameters
    ----------
    y_next : Tensor
        B x C x H' x W' coarse map.
    grid : ndarray
        Reference grid from reference_grid.
    cfg : SpiralConfig
    params : SfsParams

    Returns
    -------
    Tensor
        B x H x (H_G W_G P) x C tokens, ordered by reference point (row
        major) and then by spiral point. Tokens keep all C channels because
        the key/value projections in mha_cross mix channels; head h then
        attends with the slice h C/H:(h+1) C/H of its own projected tokens.
        Head h never sees the samples of another head.

    '''

    y = as_tensor(y_next)
    check_tensor4(y, 'sfs coarse map')
    B, C, Hn, Wn = y.shape
    H, P = cfg.heads, cfg.points
    if params.epsilon.shape != (H, P, 2):
        raise ShapeError('sfs epsilon must be '+str((H, P, 2))+', got '+
                         str(params.epsilon.shape))

    ref = np.asarray(grid, dtype=float).reshape(-1, 2)
    R = ref.shape[0]

    delta = mul(add(spiral_offsets(cfg), params.epsilon), pixel_scale(Hn, Wn))
    coords = add(ref.reshape(1, R, 1, 2), reshape(delta, (H, 1, P, 2)))
    samples = bilinear_sample(y, reshape(coords, (H * R * P, 2)))

    return transpose(reshape(samples, (B, C, H, R * P)), (0, 2, 3, 1))



def sfs_fuse(x_purified, y_next, cfg, params, return_weights=False):
    '''
    Y_i = X'_i + F_s with
    F_s = Attn(LN(X'_i) as queries, LN(sampled Y_{i+1}) as keys/values).

    The reference-grid stride is capped at the coarse map size so that the
    smallest pyramid levels keep at least one reference point.
    '''

    x, y = as_tensor(x_purified), as_tensor(y_next)
    check_tensor4(x, 'sfs fine map')
    check_tensor4(y, 'sfs coarse map')
    B, C, Hi, Wi = x.shape
    if y.shape[0] != B or y.shape[1] != C:
        raise ShapeError('sfs_fuse: coarse map '+str(y.shape)+' must share '
                         'batch and channels with fine map '+str(x.shape))
    if (Hi, Wi) != (2 * y.shape[2], 2 * y.shape[3]):
        raise ShapeError('sfs_fuse: coarse height/width '+str(y.shape[2:])+
                         ' must be half of fine '+str((Hi, Wi)))
    if C != params.attention.channels:
        raise ShapeError('sfs_fuse: '+str(C)+' channels but attention built '
                         'for '+str(params.attention.channels))

    g = min(cfg.grid_stride, y.shape[2], y.shape[3])
    grid = reference_grid(y.shape[2], y.shape[3], g)
    tokens = sfs_sample(y, grid, cfg, params)

    queries = transpose(reshape(x, (B, C, Hi * Wi)), (0, 2, 1))
    queries = layer_norm(queries, params.ln_q_gain, params.ln_q_shift)
    tokens = layer_norm(tokens, params.ln_kv_gain, params.ln_kv_shift)

    fused, weights = mha_cross(queries, tokens, cfg.heads, params.attention,
                               return_weights=True)
    f_s = reshape(transpose(fused, (0, 2, 1)), (B, C, Hi, Wi))
    out = add(x, f_s)
    if return_weights:
        return out, weights
    return out



def write_offsets(path, cfg, params=None):
    '''
    Write one "h k dx dy" line per spiral point (1-based h, k; coarse
    pixels). With params, the learned epsilon is included.
    '''

    offsets = spiral_offsets(cfg)
    if params is not None:
        offsets = offsets + params.epsilon.data

    with open(path, 'w') as filehandle:
        for h in range(cfg.heads):
            for k in range(cfg.points):
                filehandle.write('%d %d %.17g %.17g\n' % (h + 1, k + 1,
                                 offsets[h, k, 0], offsets[h, k, 1]))



def read_offsets(path):
    ''' Parse an offset dump back into an H x P x 2 array '''

    rows = []
    with open(path, 'r') as filehandle:
        for n, line in enumerate(filehandle):
            if not line.strip():
                continue
            frags = line.split()
            if len(frags) != 4:
                raise ValueError(path+': line '+str(n + 1)+' must read '
                                 '"h k dx dy", got "'+line.rstrip()+'"')
            rows.append((int(frags[0]), int(frags[1]),
                         float(frags[2]), float(frags[3])))

    H = max(r[0] for r in rows)
    P = max(r[1] for r in rows)
    offsets = np.full((H, P, 2), np.nan)
    for h, k, dx, dy in rows:
        offsets[h - 1, k - 1] = (dx, dy)
    if np.isnan(offsets).any():
        raise ValueError(path+': offset table is incomplete')
    return offsets



def dat_offset_params(channels, cfg):
    '''
    Learnable scalars of a per-query offset predictor (a linear map from
    every C-channel query to its H x P x 2 offsets) for the same spiral size.
    '''

    return (channels + 1) * cfg.heads * cfg.points * 2
