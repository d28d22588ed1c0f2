#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Segmentation metrics for small targets: pixel-level IoU, and target-level
probability of detection (Pd) and false-alarm rate (Fa) from 8-connected
regions matched by centroid distance.
"""

import numpy as np              # Import Numpy for computations
import pandas as pd             # Import Pandas to store data in frames
from dataclasses import dataclass, asdict
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as graph_components

from .commons import ShapeError

FA_MODES = ('pixel', 'region')

@dataclass
class Region:
    ''' One 8-connected region: (row, col) pixels in scan order, centroid '''
    pixels: np.ndarray
    centroid: tuple

    @property
    def size(self):
        return len(self.pixels)



@dataclass
class SegMetrics:
    '''
    Metrics of one image (or a micro-averaged set of images). fa is a rate
    per pixel; multiply by 1e6 for the customary reporting scale.
    '''
    iou: float
    pd: float
    fa: float
    matched: int = 0
    missed: int = 0
    false_regions: int = 0
    false_pixels: int = 0
    gt_targets: int = 0
    pred_regions: int = 0
    intersection: int = 0
    union: int = 0
    pixels: int = 0

    @property
    def fa_e6(self):
        return self.fa * 1e6

    def as_row(self):
        row = asdict(self)
        row['fa_e6'] = self.fa_e6
        return row



def _binary(mask, what):
    m = np.asarray(mask)
    if m.ndim != 2:
        m = np.squeeze(m)
    if m.ndim != 2:
        raise ShapeError(what+' must be a single H x W mask, got shape '+
                         str(np.shape(mask)))
    return m.astype(bool)

def _same_shape(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeError('prediction '+str(pred.shape)+' and ground truth '+
                         str(gt.shape)+' differ in shape')



def connected_components(mask):
    '''
    Label the 8-connected foreground regions of a binary mask.

    Parameters
    ----------
    mask : ndarray
        H x W binary mask (singleton axes are squeezed).

    Returns
    -------
    list of Region
        Sorted by the scan-order (row-major) position of each region's first
        pixel.

    '''

    m = _binary(mask, 'mask')
    H, W = m.shape
    fg = np.flatnonzero(m)
    if len(fg) == 0:
        return []

    # Graph over foreground pixels, one edge per 8-neighbour pair
    node = -np.ones(H * W, dtype=int)
    node[fg] = np.arange(len(fg))
    node = np.pad(node.reshape(H, W), 1, constant_values=-1)
    a = node[1:H + 1, 1:W + 1]
    rows, cols = [], []
    for dy, dx in ((0, 1), (1, -1), (1, 0), (1, 1)):
        b = node[1 + dy:H + 1 + dy, 1 + dx:W + 1 + dx]
        both = (a >= 0) & (b >= 0)
        rows.append(a[both])
        cols.append(b[both])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)),
                       shape=(len(fg), len(fg)))

    _, labels = graph_components(graph, directed=False)

    # Relabel by first appearance in scan order
    _, first = np.unique(labels, return_index=True)
    regions = []
    for label in np.argsort(first):
        idx = fg[labels == label]
        pixels = np.stack([idx // W, idx % W], axis=1)
        regions.append(Region(pixels, tuple(pixels.mean(axis=0))))
    return regions



def iou(pred, gt):
    ''' |pred & gt| / |pred | gt|; 1 when both masks are empty '''

    p, g = _binary(pred, 'prediction'), _binary(gt, 'ground truth')
    _same_shape(p, g)
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union



def match_regions(gt_regions, pred_regions, match_radius):
    '''
    Greedy one-to-one matching, nearest centroid pairs first. Returns a list
    of (gt index, pred index) pairs within match_radius.
    '''

    pairs = []
    for i, r in enumerate(gt_regions):
        for j, q in enumerate(pred_regions):
            d = np.hypot(r.centroid[0] - q.centroid[0],
                         r.centroid[1] - q.centroid[1])
            if d <= match_radius:
                pairs.append((d, i, j))
    pairs.sort()

    used_gt, used_pred, matches = set(), set(), []
    for _, i, j in pairs:
        if i not in used_gt and j not in used_pred:
            used_gt.add(i)
            used_pred.add(j)
            matches.append((i, j))
    return matches



def pd_fa(pred, gt, match_radius=3.0, fa_mode='pixel'):
    '''
    Target-level detection and false alarms of one image.

    Parameters
    ----------
    pred, gt : ndarray
        Binary H x W masks.
    match_radius : float, optional
        Maximum centroid distance of a match in pixels. The default is 3.
    fa_mode : str, optional
        `pixel`: pixels of unmatched predicted regions per image pixel;
        `region`: unmatched predicted regions per image pixel.

    Returns
    -------
    SegMetrics
        With pd = 1 when the ground truth has no targets.

    '''

    if fa_mode not in FA_MODES:
        raise ValueError('fa_mode must be one of '+str(FA_MODES))
    p, g = _binary(pred, 'prediction'), _binary(gt, 'ground truth')
    _same_shape(p, g)

    gt_regions = connected_components(g)
    pred_regions = connected_components(p)
    matches = match_regions(gt_regions, pred_regions, match_radius)

    matched_pred = {j for _, j in matches}
    false = [r for j, r in enumerate(pred_regions) if j not in matched_pred]
    false_pixels = sum(r.size for r in false)

    pixels = p.size
    inter = int(np.count_nonzero(p & g))
    union = int(np.count_nonzero(p | g))
    n_gt = len(gt_regions)

    return SegMetrics(
        iou=1.0 if union == 0 else inter / union,
        pd=1.0 if n_gt == 0 else len(matches) / n_gt,
        fa=(false_pixels if fa_mode == 'pixel' else len(false)) / pixels,
        matched=len(matches), missed=n_gt - len(matches),
        false_regions=len(false), false_pixels=false_pixels,
        gt_targets=n_gt, pred_regions=len(pred_regions),
        intersection=inter, union=union, pixels=pixels)



class MetricAccumulator(object):
    '''
    Collects per-image metrics and reports micro-averaged totals:
    IoU = sum(intersections) / sum(unions), Pd = sum(matched) / sum(targets),
    Fa = sum(false counts) / sum(pixels).
    '''

    def __init__(self, fa_mode='pixel'):
        self.fa_mode = fa_mode
        self.rows = []
        self.names = []

    def add(self, metrics, name=None):
        self.rows.append(metrics)
        self.names.append(str(len(self.rows) - 1) if name is None else name)

    def __len__(self):
        return len(self.rows)

    def summary(self):

        if not self.rows:
            raise ValueError('no images were evaluated')
        total = lambda key: sum(getattr(m, key) for m in self.rows)

        union, targets, pixels = total('union'), total('gt_targets'), \
            total('pixels')
        false = total('false_pixels') if self.fa_mode == 'pixel' else \
            total('false_regions')
        return SegMetrics(
            iou=1.0 if union == 0 else total('intersection') / union,
            pd=1.0 if targets == 0 else total('matched') / targets,
            fa=false / pixels,
            matched=total('matched'), missed=total('missed'),
            false_regions=total('false_regions'),
            false_pixels=total('false_pixels'), gt_targets=targets,
            pred_regions=total('pred_regions'),
            intersection=total('intersection'), union=union, pixels=pixels)

    def frame(self):
        ''' Per-image rows as a DataFrame '''

        df = pd.DataFrame([m.as_row() for m in self.rows])
        df.insert(0, 'image', self.names)
        return df
