#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Loss, optimiser, training loop and evaluation of the segmentation model.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
from progressbar import progressbar # Import to create progress bars

from .commons import NonFiniteError, seed_sequence, table, ticDiff, tocDiff
from .metrics import MetricAccumulator, pd_fa
from .tensor import GradTape, Tensor, add, allow_nonfinite, as_tensor, \
    bce_with_logits, div, mul, reduce_sum, scale, sigmoid, sub

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.05
    eps: float = 1e-10
    bce_weight: float = 1.0
    iou_weight: float = 1.0
    smooth: float = 1.0

    def loss_kwargs(self):
        return {'bce_weight': self.bce_weight, 'iou_weight': self.iou_weight,
                'smooth': self.smooth}



@dataclass
class EvalConfig:
    threshold: float = 0.5
    match_radius: float = 3.0
    fa_mode: str = 'pixel'
    batch_size: int = 16
    workers: int = 1



def seg_loss(logits, target, bce_weight=1.0, iou_weight=1.0, smooth=1.0):
    '''
    Binary cross-entropy on logits plus (1 - soft IoU) on probabilities.
    The soft IoU sums over the whole batch:
        (sum p t + smooth) / (sum p + sum t - sum p t + smooth)
    '''

    z, t = as_tensor(logits), as_tensor(target)
    p = sigmoid(z)
    inter = reduce_sum(mul(p, t))
    union = sub(add(reduce_sum(p), float(np.sum(t.data))), inter)
    soft_iou = div(add(inter, smooth), add(union, smooth))
    return add(scale(bce_with_logits(z, t), bce_weight),
               scale(sub(1.0, soft_iou), iou_weight))



class Adagrad(object):
    '''
    Per-parameter adaptive steps: every parameter keeps the running sum of
    its squared gradients G and moves by -lr * g / (sqrt(G) + eps).
    '''

    def __init__(self, lr=0.05, eps=1e-10, initial_accumulator=0.0):
        self.lr = lr
        self.eps = eps
        self.initial_accumulator = initial_accumulator
        self.accumulators = {}

    def step(self, params):
        for name, t in params.items():
            if t.grad is None:
                continue
            acc = self.accumulators.get(name)
            if acc is None:
                acc = np.full(t.shape, float(self.initial_accumulator))
                self.accumulators[name] = acc
            acc += t.grad**2
            t.data -= self.lr * t.grad / (np.sqrt(acc) + self.eps)



def first_nonfinite(params):
    ''' Name of the first parameter whose gradient holds NaN/Inf, or None '''

    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            return name
    return None



def train_step(batch, model, optimizer, loss_cfg=None):
    '''
    One optimisation step on a batch of (images, masks), each B x 1 x H x W.

    Returns
    -------
    float
        Loss before the update.

    Raises
    ------
    NonFiniteError
        When the loss or a gradient is not finite; parameters are left
        untouched and the error names the first offending gradient.

    '''

    images, masks = batch
    params = model.parameters()
    model.zero_grad()

    with allow_nonfinite(), GradTape() as tape:
        logits = model.forward(Tensor(images))
        loss = seg_loss(logits, Tensor(masks), **(loss_cfg or {}))
        tape.backward(loss, check_finite=False)

    value = loss.item()
    bad = first_nonfinite(params)
    if bad is not None or not np.isfinite(value):
        raise NonFiniteError('non-finite loss ('+str(value)+'); first '
                             'non-finite parameter gradient: '+str(bad), bad)

    optimizer.step(params)
    return value



def predict(model, images, batch_size=16):
    ''' Foreground probabilities N x 1 x H x W, computed without a tape '''

    out = []
    for start in range(0, len(images), batch_size):
        logits = model.forward(Tensor(images[start:start + batch_size]))
        out.append(sigmoid(logits).data)
    return np.concatenate(out)



def evaluate(model, images, masks, cfg=None, names=None):
    '''
    Threshold the model's probabilities and collect per-image metrics.

    Returns
    -------
    MetricAccumulator

    '''

    cfg = EvalConfig() if cfg is None else cfg
    if len(images) == 0:
        raise ValueError('cannot evaluate on an empty dataset')

    pred = predict(model, images, cfg.batch_size) > cfg.threshold
    gt = masks > 0.5

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = list(pool.map(
            lambda i: pd_fa(pred[i, 0], gt[i, 0], cfg.match_radius,
                            cfg.fa_mode), range(len(images))))

    acc = MetricAccumulator(cfg.fa_mode)
    for i, m in enumerate(results):
        acc.add(m, None if names is None else names[i])
    return acc



def fit(model, train, test, cfg, eval_cfg, seed=0, label='ns', verbose=False,
        on_epoch=None):
    '''
    Train for cfg.epochs with shuffled mini-batches and evaluate after every
    epoch on the training set and (when given) the test set.

    Parameters
    ----------
    model : NsFpn
    train, test : tuple
        (images, masks) arrays; test may be None.
    cfg : TrainConfig
    eval_cfg : EvalConfig
    seed : int, optional
        Seed of the batch order. The default is 0.
    label : str, optional
        Value of the `mode` column. The default is 'ns'.
    verbose : bool, optional
        Print one row per epoch instead of a progress bar.
    on_epoch : callable, optional
        Called with the history after every epoch (e.g. to flush a CSV).

    Returns
    -------
    list of dict
        One row per epoch and split.

    '''

    optimizer = Adagrad(cfg.lr, cfg.eps)
    images, masks = train
    history = []

    tab = table([8, 8, 12, 10, 10, 12, 10])
    if verbose:
        tab.print_row(['EPOCH', 'SPLIT', 'LOSS', 'IOU', 'PD', 'FA (1e-6)',
                       'TIME [s]'], head=True)

    epochs = range(1, cfg.epochs + 1)
    for epoch in (epochs if verbose else
                  progressbar(epochs, redirect_stdout=True)):
        ticDiff()
        order = seed_sequence(seed, 7, epoch).permutation(len(images))

        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            losses.append(train_step((images[idx], masks[idx]), model,
                                     optimizer, cfg.loss_kwargs()) * len(idx))
        loss = float(np.sum(losses) / len(order))
        seconds = tocDiff(False)

        splits = [('train', train)] + ([('test', test)] if test is not None
                                      and len(test[0]) else [])
        for split, (x, y) in splits:
            summary = evaluate(model, x, y, eval_cfg).summary()
            row = {'epoch': epoch, 'mode': label, 'seed': seed,
                   'split': split, 'loss': loss}
            row.update(summary_row(summary))
            row['seconds'] = seconds
            history.append(row)

            if verbose:
                tab.print_row([epoch, split, '%.5f' % loss,
                               '%.4f' % row['iou'], '%.4f' % row['pd'],
                               '%.2f' % row['fa_e6'], '%.2f' % seconds])

        if on_epoch is not None:
            on_epoch(history)

    return history



def summary_row(summary):
    ''' Metric columns shared by the training log and the eval summary '''

    return {'iou': summary.iou, 'pd': summary.pd, 'fa_e6': summary.fa_e6,
            'matched': summary.matched, 'missed': summary.missed,
            'false_regions': summary.false_regions}
