#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Synthetic infrared small-target scenes: smooth clutter, Gaussian-profile
targets, hot-clutter distractors and white noise. The ground-truth mask is
the set of pixels where a target's own signal exceeds half its peak.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from scipy.ndimage import gaussian_filter

from .commons import ConfigError, seed_sequence
from .tensor import Tensor

@dataclass
class SceneConfig:
    '''
    Ranges are inclusive (low, high) pairs; targets and distractors are
    integer counts, the others are intensities on a [0, 1] scale or pixel
    lengths.
    '''
    height: int = 64
    width: int = 64
    targets: tuple = (1, 3)
    amplitude: tuple = (0.35, 0.8)
    radius: tuple = (0.8, 2.0)
    background: float = 0.15
    clutter_amplitude: float = 0.08
    clutter_smoothness: float = 6.0
    noise_std: float = 0.03
    distractors: int = 2
    distractor_amplitude: tuple = (0.1, 0.3)
    distractor_radius: tuple = (2.5, 4.0)
    min_separation: float = 8.0
    border: int = 3

    def __post_init__(self):
        for name in ('targets', 'amplitude', 'radius', 'distractor_amplitude',
                     'distractor_radius'):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError('scene.'+name+' range is empty: '+
                                  str((lo, hi)))
            setattr(self, name, (lo, hi))
        if self.targets[0] < 0 or self.distractors < 0:
            raise ConfigError('scene target/distractor counts must be >= 0')
        if self.amplitude[0] <= self.noise_std:
            raise ConfigError('scene.amplitude must exceed noise_std (SCR > 1)')
        if self.radius[0] <= 0:
            raise ConfigError('scene.radius must be positive')
        if min(self.height, self.width) <= 2 * self.border:
            raise ConfigError('scene is smaller than its border margin')



def _gaussian_blob(shape, center, amplitude, sigma):

    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    r2 = (yy - center[0])**2 + (xx - center[1])**2
    return amplitude * np.exp(-r2 / (2.0 * sigma**2))

def _place(rng, cfg, count, taken, separation):
    ''' Draw `count` integer centres at least `separation` from `taken` '''

    centers = []
    for _ in range(1000 * max(count, 1)):
        if len(centers) == count:
            break
        c = (int(rng.integers(cfg.border, cfg.height - cfg.border)),
             int(rng.integers(cfg.border, cfg.width - cfg.border)))
        if all(np.hypot(c[0] - t[0], c[1] - t[1]) >= separation
               for t in taken + centers):
            centers.append(c)
    return centers



def synth_scene(seed, cfg, index=0):
    '''
    One scene, deterministic in (seed, index).

    Parameters
    ----------
    seed : int
        Base seed.
    cfg : SceneConfig
    index : int, optional
        Scene index within a dataset. The default is 0.

    Returns
    -------
    image, mask : Tensor
        1 x 1 x H x W each; image in [0, 1], mask in {0, 1}.

    '''

    rng = seed_sequence(seed, index)
    shape = (cfg.height, cfg.width)

    clutter = gaussian_filter(rng.normal(size=shape), cfg.clutter_smoothness,
                              mode='reflect')
    std = clutter.std()
    clutter = clutter / std if std > 0 else clutter
    image = cfg.background + cfg.clutter_amplitude * clutter

    n = int(rng.integers(cfg.targets[0], cfg.targets[1] + 1))
    centers = _place(rng, cfg, n, [], cfg.min_separation)
    if len(centers) < n:
        raise ConfigError('could not place '+str(n)+' targets '+
                          str(cfg.min_separation)+' pixels apart in a '+
                          str(shape)+' scene')

    mask = np.zeros(shape, dtype=bool)
    for c in centers:
        a = rng.uniform(*cfg.amplitude)
        s = rng.uniform(*cfg.radius)
        blob = _gaussian_blob(shape, c, a, s)
        image = image + blob
        mask |= blob > 0.5 * a

    # Hot clutter stays out of the mask and away from the targets
    for c in _place(rng, cfg, cfg.distractors, centers, cfg.min_separation):
        image = image + _gaussian_blob(shape, c,
            rng.uniform(*cfg.distractor_amplitude),
            rng.uniform(*cfg.distractor_radius))

    image = image + rng.normal(0.0, cfg.noise_std, size=shape)
    image = np.clip(image, 0.0, 1.0)

    return (Tensor(image.reshape(1, 1, *shape)),
            Tensor(mask.astype(float).reshape(1, 1, *shape)))



def make_dataset(seed, count, cfg, workers=1):
    '''
    `count` scenes (index 0..count-1) generated over a thread pool; the
    result does not depend on the worker count.

    Returns
    -------
    images, masks : ndarray
        count x 1 x H x W each.

    '''

    shape = (count, 1, cfg.height, cfg.width)
    if count == 0:
        return np.zeros(shape), np.zeros(shape)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        scenes = list(pool.map(lambda i: synth_scene(seed, cfg, i),
                               range(count)))

    images = np.concatenate([im.data for im, _ in scenes])
    masks = np.concatenate([m.data for _, m in scenes])
    return images, masks
