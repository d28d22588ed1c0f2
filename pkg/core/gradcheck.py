#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Finite-difference verification of the analytic backward maps, and the suite
of checks run by the `gradcheck` command.
"""

import numpy as np              # Import Numpy for computations
from progressbar import progressbar # Import to create progress bars

from .commons import NonFiniteError, table, ticDiff, tocDiff
from . import tensor, wavelet, lfp, sfs, nsfpn, training
from .tensor import GradTape, Tensor, ConvParams, AttentionParams, parameter

def grad_check(operation, inputs, step=1e-5, seed=0, max_elements=None,
               atol=0.0):
    '''
    Compare the analytic gradient of `operation` against central differences.

    Parameters
    ----------
    operation : callable
        Maps the inputs (positionally) to a Tensor. A non-scalar output is
        reduced by a fixed random weighting so that every output element
        contributes to the checked scalar.
    inputs : list
        Tensors (or arrays) to differentiate with respect to. Arrays are
        wrapped as tensors that require a gradient; tensors that do not
        require one are passed through unchecked. Values are perturbed in
        place and restored exactly.
    step : float, optional
        Central-difference step. The default is 1e-5.
    seed : int, optional
        Seed of the reduction weights and element subsampling.
    max_elements : int, optional
        Check at most this many randomly chosen elements per input.
    atol : float, optional
        Elements whose analytic and numeric values differ by at most atol
        count as agreeing. Only whole-model checks need a floor, see
        ROUNDOFF_FLOOR. The default is 0, every element is compared.

    Returns
    -------
    float
        Worst |a - n| / (|a| + |n| + 1e-12) over the checked elements.

    '''

    rng = np.random.default_rng(seed)
    inputs = [t if isinstance(t, Tensor) else Tensor(t, requires_grad=True)
              for t in inputs]
    checked = [t for t in inputs if t.requires_grad]

    for t in checked:
        t.zero_grad()
    with GradTape() as tape:
        out = operation(*inputs)
        weights = np.ones(out.shape) if out.size == 1 else \
            rng.normal(size=out.shape)
        loss = tensor.reduce_sum(tensor.mul(out, weights))
    tape.backward(loss)

    def evaluate():
        return float(np.sum(operation(*inputs).data * weights))

    worst = 0.0
    for t in checked:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        index = np.arange(t.size)
        if max_elements is not None and t.size > max_elements:
            index = np.sort(rng.choice(t.size, max_elements, replace=False))

        for i in index:
            original = flat[i]
            flat[i] = original + step
            f_plus = evaluate()
            flat[i] = original - step
            f_minus = evaluate()
            flat[i] = original

            a = analytic.reshape(-1)[i]
            n = (f_plus - f_minus) / (2 * step)
            if not np.isfinite(n):
                raise NonFiniteError('non-finite finite difference for '+
                                     str(t), t.name)
            if abs(a - n) > atol:
                worst = max(worst, abs(a - n) / (abs(a) + abs(n) + 1e-12))

    return worst



#-----------------------------------------------------------------------------
# Suite: every differentiable operation at desk sizes
#-----------------------------------------------------------------------------

def _conv(rng):
    p = ConvParams.create(3, 4, 3, padding=1, rng=rng)
    x = parameter(rng.normal(size=(2, 3, 5, 5)))
    return (lambda x, w, b: tensor.conv2d(x, ConvParams(w, b, 1, 1)),
            [x, p.weight, p.bias])

def _conv_stride(rng):
    p = ConvParams.create(2, 3, 3, stride=2, padding=1, rng=rng)
    x = parameter(rng.normal(size=(1, 2, 6, 6)))
    return (lambda x, w, b: tensor.conv2d(x, ConvParams(w, b, 2, 1)),
            [x, p.weight, p.bias])

def _depthwise(rng):
    return (tensor.depthwise_conv2d,
            [parameter(rng.normal(size=(1, 2, 6, 6))),
             parameter(rng.normal(size=(3, 3)))])

def _pad(rng):
    return (lambda x: tensor.pad2d(x, (2, 1, 1, 2), 'symmetric'),
            [parameter(rng.normal(size=(1, 2, 4, 5)))])

def _pool(rng):
    return (tensor.pool_channel_avg_max,
            [parameter(rng.normal(size=(2, 4, 3, 3)))])

def _bilinear(rng):
    return (tensor.bilinear_sample,
            [parameter(rng.normal(size=(2, 2, 5, 4))),
             parameter(rng.uniform(-0.95, 0.95, size=(2, 7, 2)))])

def _layer_norm(rng):
    return (tensor.layer_norm,
            [parameter(rng.normal(size=(8, 16))),
             parameter(rng.uniform(0.5, 1.5, size=16)),
             parameter(rng.normal(size=16))])

def _pointwise(name):
    def build(rng):
        return (getattr(tensor, name), [parameter(rng.normal(size=(3, 5)))])
    return build

def _linear(rng):
    return (tensor.linear,
            [parameter(rng.normal(size=(2, 3, 4))),
             parameter(rng.normal(size=(5, 4))),
             parameter(rng.normal(size=5))])

def _mha(rng):
    p = AttentionParams.create(4, 2, rng)
    for t in p.tensors().values():
        t.data[...] = rng.normal(0.0, 0.5, size=t.shape)
    q = parameter(rng.normal(size=(2, 3, 4)))
    kv = parameter(rng.normal(size=(2, 2, 5, 4)))
    return (lambda q, kv, *_: tensor.mha_cross(q, kv, 2, p),
            [q, kv] + list(p.tensors().values()))

def _upsample(name):
    def build(rng):
        return (getattr(tensor, name),
                [parameter(rng.normal(size=(1, 2, 3, 4)))])
    return build

def _bce(rng):
    target = Tensor((rng.uniform(size=(1, 1, 4, 4)) > 0.7).astype(float))
    return (lambda z: tensor.bce_with_logits(z, target),
            [parameter(rng.normal(size=(1, 1, 4, 4)))])

def _dwt(rng):
    return (lambda x: tensor.concat(wavelet.dwt2(x).bands(), axis=1),
            [parameter(rng.normal(size=(2, 3, 4, 6)))])

def _idwt(rng):
    bands = [parameter(rng.normal(size=(1, 2, 3, 3))) for _ in range(4)]
    return (lambda *b: wavelet.idwt2(wavelet.WaveletBands(*b)), bands)

def _gaussian(rng):
    return (lambda s: lfp.gaussian_kernel(tensor.softplus(s), 5),
            [parameter(rng.normal(size=1))])

def _lfp_params(rng):
    p = lfp.LfpParams.create(rng, sigma_init=rng.uniform(0.6, 1.5))
    p.attention.weight.data[...] = rng.normal(0.0, 0.3, size=(1, 2, 7, 7))
    return p

def _spatial_attention(rng):
    p = _lfp_params(rng)
    return (lambda f, *_: lfp.spatial_attention(f, p),
            [parameter(rng.normal(size=(1, 3, 6, 6)))] +
            list(p.tensors().values())[:2])

def _gated(rng):
    p = _lfp_params(rng)
    return (lambda ll, lh, hl, hh, s: tensor.concat(lfp.gated_gaussian(
                wavelet.WaveletBands(ll, lh, hl, hh), p).details(), axis=1),
            [parameter(rng.normal(size=(1, 2, 4, 4))) for _ in range(4)] +
            [p.sigma_raw])

def _lfp(rng):
    p = _lfp_params(rng)
    return (lambda x, *_: lfp.lfp_forward(x, p),
            [parameter(rng.normal(size=(1, 4, 8, 8)))] +
            list(p.tensors().values()))

def _sfs_params(rng, channels, cfg):
    p = sfs.SfsParams.create(channels, cfg, rng)
    p.epsilon.data[...] = rng.uniform(-0.3, 0.3, size=p.epsilon.shape)
    for t in (p.ln_q_gain, p.ln_kv_gain):
        t.data[...] = rng.uniform(0.5, 1.5, size=t.shape)
    return p

def _sfs_sample(rng):
    cfg = sfs.SpiralConfig(heads=2, points=3, l0=0.5, dl=0.7, grid_stride=1)
    p = _sfs_params(rng, 4, cfg)
    grid = sfs.reference_grid(4, 4, 1)
    return (lambda y, e: sfs.sfs_sample(y, grid, cfg, p),
            [parameter(rng.normal(size=(1, 4, 4, 4))), p.epsilon])

def _sfs_fuse(rng):
    cfg = sfs.SpiralConfig(heads=2, points=2, l0=0.5, dl=0.5, grid_stride=1)
    p = _sfs_params(rng, 8, cfg)
    return (lambda x, y, *_: sfs.sfs_fuse(x, y, cfg, p),
            [parameter(rng.normal(size=(1, 8, 4, 4))),
             parameter(rng.normal(size=(1, 8, 2, 2)))] +
            list(p.tensors().values()))

def _seg_head(rng):
    head = [ConvParams.create(8, 4, 3, padding=1, rng=rng),
            ConvParams.create(4, 1, 1, rng=rng)]
    return (lambda y, *_: nsfpn.seg_head(y, head),
            [parameter(rng.normal(size=(1, 8, 8, 8)))] +
            [t for c in head for t in c.tensors().values()])

def _seg_loss(rng):
    target = Tensor((rng.uniform(size=(2, 1, 4, 4)) > 0.7).astype(float))
    return (lambda z: training.seg_loss(z, target),
            [parameter(rng.normal(size=(2, 1, 4, 4)))])

def desk_model(seed=0, fpn_mode='ns'):
    ''' Smallest model that still has every component (16 x 16 input) '''

    cfg = nsfpn.NsFpnConfig(channels=8, backbone_widths=(4, 4, 8, 8),
        head_width=4, fpn_mode=fpn_mode, head_bias=0.0,
        spiral=sfs.SpiralConfig(heads=2, points=2, l0=0.5, dl=0.5,
                                grid_stride=2))
    model = nsfpn.NsFpn(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    for p in model.sfs.values():
        p.epsilon.data[...] = rng.uniform(-0.3, 0.3, size=p.epsilon.shape)
    return model

def _model(rng):
    model = desk_model(int(rng.integers(1 << 16)))
    image = parameter(rng.uniform(size=(1, 1, 16, 16)))
    return (lambda x, *_: model.forward(x),
            [image] + list(model.parameters().values()))

# Finite-difference round-off of a whole forward pass is about eps |f| / step,
# which swamps gradients below 1e-7 on the composite cases.
ROUNDOFF_FLOOR = 1e-7

# name -> (builder, tolerance or None for the configured one, frozen gates,
# elements checked per tensor, absolute noise floor)
SUITE = {
    'conv2d': (_conv, None, False, None, 0.0),
    'conv2d_stride2': (_conv_stride, None, False, None, 0.0),
    'depthwise_conv2d': (_depthwise, None, False, None, 0.0),
    'pad2d': (_pad, None, False, None, 0.0),
    'pool_channel_avg_max': (_pool, None, False, None, 0.0),
    'bilinear_sample': (_bilinear, None, False, None, 0.0),
    'layer_norm': (_layer_norm, None, False, None, 0.0),
    'softmax': (_pointwise('softmax'), None, False, None, 0.0),
    'sigmoid': (_pointwise('sigmoid'), None, False, None, 0.0),
    'silu': (_pointwise('silu'), None, False, None, 0.0),
    'softplus': (_pointwise('softplus'), None, False, None, 0.0),
    'linear': (_linear, None, False, None, 0.0),
    'mha_cross': (_mha, None, False, None, 0.0),
    'upsample_bilinear2x': (_upsample('upsample_bilinear2x'), None, False,
                            None, 0.0),
    'upsample_nearest2x': (_upsample('upsample_nearest2x'), None, False,
                            None, 0.0),
    'bce_with_logits': (_bce, None, False, None, 0.0),
    'dwt2': (_dwt, 1e-6, False, None, 0.0),
    'idwt2': (_idwt, 1e-6, False, None, 0.0),
    'gaussian_kernel': (_gaussian, None, False, None, 0.0),
    'spatial_attention': (_spatial_attention, None, False, None, 0.0),
    'gated_gaussian': (_gated, None, True, None, 0.0),
    'lfp_forward': (_lfp, None, True, None, ROUNDOFF_FLOOR),
    'sfs_sample': (_sfs_sample, None, False, None, 0.0),
    'sfs_fuse': (_sfs_fuse, None, False, 12, ROUNDOFF_FLOOR),
    'seg_head': (_seg_head, None, False, 24, ROUNDOFF_FLOOR),
    'seg_loss': (_seg_loss, None, False, None, 0.0),
    'nsfpn_model': (_model, None, True, 4, ROUNDOFF_FLOOR),
}

def check_case(name, seed, step=1e-5):
    ''' Worst relative error of one suite entry at one seed '''

    builder, _, frozen, max_elements, floor = SUITE[name]
    rng = np.random.default_rng([seed, len(name)])
    operation, inputs = builder(rng)
    if frozen:
        with lfp.frozen_gates():
            return grad_check(operation, inputs, step, seed, max_elements, floor)
    return grad_check(operation, inputs, step, seed, max_elements, floor)



def run_suite(seeds=(0,), step=1e-5, tolerance=1e-4, names=None,
              verbose=False):
    '''
    Run the suite and return one row per operation:
    {op, max_rel_error, tolerance, passed, seconds, error}. A check that
    raises is reported as failed with the exception text.
    '''

    names = list(SUITE) if names is None else list(names)
    rows = []

    tab = table([24, 16, 12, 8])
    if verbose:
        tab.print_row(['OPERATION', 'MAX REL ERROR', 'TOLERANCE', 'PASSED'],
                      head=True)

    iterator = names if verbose else progressbar(names, redirect_stdout=True)
    for name in iterator:
        tol = SUITE[name][1] or tolerance
        ticDiff()
        error, message = 0.0, ''
        try:
            for seed in seeds:
                error = max(error, check_case(name, seed, step))
        except (NonFiniteError, ValueError) as e:
            error, message = np.inf, str(e)

        row = {'op': name, 'max_rel_error': error, 'tolerance': tol,
               'passed': bool(error < tol), 'seconds': tocDiff(False),
               'error': message}
        rows.append(row)

        if verbose:
            tab.print_row([name, '%.3e' % error, '%.0e' % tol,
                           str(row['passed'])],
                          sort=False if row['passed'] else 'Warning')

    return rows
