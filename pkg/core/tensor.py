#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Batched real arrays, a recording tape, and the differentiable primitives that
the wavelet, LFP, SFS and pyramid modules are composed of.

Every primitive computes its value with numpy. While a GradTape is active and
one of its inputs requires a gradient, the primitive also records a backward
map returning one gradient per input; replaying the tape in reverse order
accumulates gradients into the leaf tensors.

Conventions:
 - convolution is cross-correlation (no kernel flip);
 - normalised sampling coordinates put (-1, -1) at the centre of the top-left
   pixel and (+1, +1) at the centre of the bottom-right pixel; coordinates
   outside [-1, 1] are clamped;
 - float64 throughout.
______________________________________________________________________________
"""

import numpy as np              # Import Numpy for computations
import threading
from dataclasses import dataclass
from numpy.lib.stride_tricks import sliding_window_view

from .commons import ShapeError, NonFiniteError

# Per-thread autodiff state: the open tapes and the NaN/Inf switch
_state = threading.local()

def _open_tapes():
    if not hasattr(_state, 'tapes'):
        _state.tapes = []
    return _state.tapes

def finite_checks_enabled():
    ''' True unless an allow_nonfinite block is open in this thread '''
    return getattr(_state, 'finite_checks', True)


class allow_nonfinite(object):
    ''' Let NaN/Inf propagate through the primitives inside the block '''

    def __enter__(self):
        self.previous = finite_checks_enabled()
        _state.finite_checks = False
        self.errstate = np.errstate(all='ignore')
        self.errstate.__enter__()
        return self

    def __exit__(self, *exc):
        _state.finite_checks = self.previous
        self.errstate.__exit__(*exc)
        return False



class Tensor(object):
    '''
    Real array plus gradient bookkeeping. Feature maps, images and masks are
    B x C x H x W; token sets are (B x) N x C.
    '''

    def __init__(self, data, requires_grad=False, name=None):

        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = '' if self.name is None else self.name+', '
        return 'Tensor('+label+'shape='+str(self.shape)+ \
            (', requires_grad' if self.requires_grad else '')+')'

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)



def as_tensor(x):
    ''' Wrap constants (numbers, arrays) as tensors that need no gradient '''
    return x if isinstance(x, Tensor) else Tensor(x)



def parameter(data, name=None):
    ''' Leaf tensor that receives a gradient '''
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True,
                  name=name)



def check_tensor4(t, what='input'):
    if t.ndim != 4:
        raise ShapeError(what+' must be B x C x H x W, got shape '+
                         str(tuple(t.shape)))
    if min(t.shape) < 1:
        raise ShapeError(what+' has an empty dimension: '+str(tuple(t.shape)))



class _Record(object):

    __slots__ = ('name', 'inputs', 'output', 'backward')

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward



class GradTape(object):
    '''
    Records primitive applications while active and replays their backward
    maps in reverse order.

        with GradTape() as tape:
            loss = f(x, w)
        tape.backward(loss)     # fills x.grad, w.grad
    '''

    def __init__(self):
        self.records = []

    def __enter__(self):
        _open_tapes().append(self)
        return self

    def __exit__(self, *exc):
        _open_tapes().pop()
        return False

    @staticmethod
    def active():
        ''' Innermost tape opened in the calling thread, or None '''
        tapes = _open_tapes()
        return tapes[-1] if tapes else None

    def record(self, name, inputs, output, backward):
        self.records.append(_Record(name, inputs, output, backward))

    def backward(self, output, grad=None, check_finite=True):
        '''
        Replay the tape starting from `output`.

        Parameters
        ----------
        output : Tensor
            Tensor to differentiate (normally a scalar loss).
        grad : ndarray, optional
            Seed gradient; ones by default.
        check_finite : bool, optional
            Raise NonFiniteError naming the primitive whose backward produced
            the first NaN/Inf. The default is True.

        Returns
        -------
        None. Gradients are accumulated into `.grad` of the leaf tensors.

        '''

        if grad is None:
            grad = np.ones_like(output.data)
        grads = {id(output): np.asarray(grad, dtype=np.float64)}
        tensors = {id(output): output}

        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue

            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if check_finite and not np.all(np.isfinite(gi)):
                    raise NonFiniteError('non-finite gradient in backward of `'
                                         +rec.name+'`', rec.name)

                key = id(t)
                grads[key] = grads[key] + gi if key in grads else gi
                tensors[key] = t

        # Whatever was not consumed by a producer belongs to a leaf
        for key, g in grads.items():
            t = tensors[key]
            t.grad = g if t.grad is None else t.grad + g



def primitive(name, value, inputs, backward):
    '''
    Wrap `value` as the output of primitive `name` and record `backward`
    (a map from the output gradient to one gradient per input) on the active
    tape when any input requires a gradient.
    '''

    value = np.asarray(value, dtype=np.float64)
    if finite_checks_enabled() and not np.all(np.isfinite(value)):
        raise NonFiniteError('non-finite value produced by `'+name+'`', name)

    out = Tensor(value)
    tape = GradTape.active()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(name, inputs, out, backward)

    return out



def _unbroadcast(grad, shape):
    ''' Sum `grad` over the axes that were broadcast to reach it '''

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad



def _sigmoid(x):

    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out



def _softmax(x, axis=-1):

    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)



#-----------------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting)
#-----------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return primitive('add', a.data + b.data, [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return primitive('sub', a.data - b.data, [a, b],
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return primitive('mul', a.data * b.data, [a, b],
        lambda g: (_unbroadcast(g * b.data, a.shape),
                   _unbroadcast(g * a.data, b.shape)))

def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return primitive('div', a.data / b.data, [a, b],
        lambda g: (_unbroadcast(g / b.data, a.shape),
                   _unbroadcast(-g * a.data / b.data**2, b.shape)))

def scale(a, factor):
    a = as_tensor(a)
    return primitive('scale', a.data * factor, [a], lambda g: (g * factor,))



#-----------------------------------------------------------------------------
# Pointwise nonlinearities
#-----------------------------------------------------------------------------

def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return primitive('sigmoid', s, [x], lambda g: (g * s * (1.0 - s),))

def silu(x):
    ''' x * sigmoid(x); smooth, so finite differences see no kinks '''
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return primitive('silu', x.data * s, [x],
        lambda g: (g * (s + x.data * s * (1.0 - s)),))

def softplus(x):
    x = as_tensor(x)
    return primitive('softplus', np.logaddexp(0.0, x.data), [x],
        lambda g: (g * _sigmoid(x.data),))

def softmax(x, axis=-1):
    x = as_tensor(x)
    y = _softmax(x.data, axis)
    return primitive('softmax', y, [x],
        lambda g: (y * (g - np.sum(g * y, axis=axis, keepdims=True)),))



#-----------------------------------------------------------------------------
# Reductions and shape manipulation
#-----------------------------------------------------------------------------

def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (g * np.ones(a.shape),)

    return primitive('sum', np.sum(a.data, axis=axis, keepdims=keepdims),
                     [a], backward)

def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size / np.size(np.sum(a.data, axis=axis, keepdims=keepdims))
    return scale(reduce_sum(a, axis, keepdims), 1.0 / count)

def reshape(a, shape):
    a = as_tensor(a)
    return primitive('reshape', a.data.reshape(shape), [a],
        lambda g: (g.reshape(a.shape),))

def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return primitive('transpose', a.data.transpose(axes), [a],
        lambda g: (g.transpose(inverse),))

def _is_basic_index(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is Ellipsis
               for k in parts)

def getitem(a, key):
    a = as_tensor(a)
    basic = _is_basic_index(key)

    def backward(g):
        full = np.zeros(a.shape)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return primitive('getitem', np.array(a.data[key]), [a], backward)

def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return primitive('concat', np.concatenate([t.data for t in tensors], axis),
        tensors, lambda g: tuple(np.split(g, splits, axis=axis)))

def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return primitive('stack', np.stack([t.data for t in tensors], axis),
        tensors, lambda g: tuple(np.take(g, i, axis=axis)
                                 for i in range(len(tensors))))

def where_frozen(mask, a, b):
    '''
    Elementwise choice a if mask else b. The mask is a constant: gradients
    flow into both branch values but not through the selection.
    '''
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    return primitive('where_frozen', np.where(mask, a.data, b.data), [a, b],
        lambda g: (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                   _unbroadcast(np.where(mask, 0.0, g), b.shape)))



#-----------------------------------------------------------------------------
# Linear algebra
#-----------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return primitive('matmul', a.data @ b.data, [a, b],
        lambda g: (_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape),
                   _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)))

def linear(x, weight, bias=None):
    '''
    y = x W^T + b over the last axis; weight is Cout x Cin.
    '''
    x, weight = as_tensor(x), as_tensor(weight)
    cout, cin = weight.shape
    if x.shape[-1] != cin:
        raise ShapeError('linear: last dimension of input is '+
                         str(x.shape[-1])+' but weight expects '+str(cin))

    out = x.data @ weight.data.T
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        inputs.append(bias)

    def backward(g):
        g2 = g.reshape(-1, cout)
        grads = (g @ weight.data, g2.T @ x.data.reshape(-1, cin))
        if bias is not None:
            grads += (g2.sum(axis=0),)
        return grads

    return primitive('linear', out, inputs, backward)



#-----------------------------------------------------------------------------
# Convolution and padding
#-----------------------------------------------------------------------------

@dataclass
class ConvParams:
    '''
    weight: Cout x Cin x k x k, bias: Cout. Output size is
    floor((H + 2 padding - k) / stride) + 1 per spatial axis.
    '''
    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError('conv weight must be Cout x Cin x k x k, got '+
                             str(self.weight.shape))
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ShapeError('conv bias must have Cout = '+
                             str(self.weight.shape[0])+' entries, got '+
                             str(self.bias.shape))
        if self.stride < 1 or self.padding < 0:
            raise ShapeError('conv stride must be >= 1 and padding >= 0')

    @classmethod
    def create(cls, cin, cout, k, stride=1, padding=0, rng=None, gain=np.sqrt(2)):
        ''' He-normal weights (std gain / sqrt(Cin k^2)), zero bias '''

        rng = np.random.default_rng(0) if rng is None else rng
        std = gain / np.sqrt(cin * k * k)
        return cls(parameter(rng.normal(0.0, std, (cout, cin, k, k))),
                   parameter(np.zeros(cout)), stride, padding)

    @classmethod
    def identity(cls, channels):
        ''' 1x1 convolution that maps every channel onto itself '''

        w = np.eye(channels).reshape(channels, channels, 1, 1)
        return cls(parameter(w), parameter(np.zeros(channels)))

    @property
    def kernel_size(self):
        return self.weight.shape[2]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def out_size(self, h, w):
        k, s, p = self.kernel_size, self.stride, self.padding
        return (h + 2*p - k) // s + 1, (w + 2*p - k) // s + 1

    def count(self):
        return self.weight.size + (0 if self.bias is None else self.bias.size)

    def tensors(self):
        out = {'weight': self.weight}
        if self.bias is not None:
            out['bias'] = self.bias
        return out



def conv2d(input, params):
    '''
    Cross-correlation of a B x Cin x H x W input with `params`, plus bias.
    '''

    x = as_tensor(input)
    check_tensor4(x, 'conv2d input')
    w, b = params.weight, params.bias
    cout, cin, k, _ = w.shape
    B, C, H, W = x.shape
    if C != cin:
        raise ShapeError('conv2d: input channel dimension (dim 1) is '+str(C)+
                         ' but the weight expects Cin = '+str(cin))

    s, p = params.stride, params.padding
    Ho, Wo = params.out_size(H, W)
    if Ho < 1 or Wo < 1:
        raise ShapeError('conv2d: spatial output size '+str((Ho, Wo))+
                         ' < 1 for input height/width '+str((H, W))+
                         ' and kernel '+str(k))

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    cols = cols[:, :, :Ho, :Wo]

    out = np.tensordot(cols, w.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    inputs = [x, w]
    if b is not None:
        out = out + b.data[None, :, None, None]
        inputs.append(b)

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        gcols = np.tensordot(g, w.data, axes=([1], [0]))  # B Ho Wo C k k
        gxp = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i+s*(Ho-1)+1:s, j:j+s*(Wo-1)+1:s] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grads = (gxp[:, :, p:p+H, p:p+W], gw)
        if b is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    return primitive('conv2d', out, inputs, backward)



def depthwise_conv2d(input, kernel):
    '''
    Valid cross-correlation of every channel with the same k x k kernel.
    '''

    x, kernel = as_tensor(input), as_tensor(kernel)
    check_tensor4(x, 'depthwise_conv2d input')
    k = kernel.shape[0]
    B, C, H, W = x.shape
    Ho, Wo = H - k + 1, W - k + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError('depthwise_conv2d: kernel '+str(k)+
                         ' larger than the (padded) height/width '+str((H, W)))

    win = sliding_window_view(x.data, (k, k), axis=(2, 3))
    out = np.tensordot(win, kernel.data, axes=([4, 5], [0, 1]))

    def backward(g):
        gk = np.tensordot(g, win, axes=([0, 1, 2, 3], [0, 1, 2, 3]))
        gx = np.zeros(x.shape)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i+Ho, j:j+Wo] += kernel.data[i, j] * g
        return gx, gk

    return primitive('depthwise_conv2d', out, [x, kernel], backward)



def pad2d(input, pads, mode='symmetric'):
    '''
    Pad the two spatial axes by pads = (top, bottom, left, right).
    `symmetric` repeats the edge sample (numpy's symmetric mode);
    `constant` pads with zeros.
    '''

    x = as_tensor(input)
    top, bottom, left, right = pads
    H, W = x.shape[-2:]

    if mode == 'constant':
        width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
        return primitive('pad2d', np.pad(x.data, width), [x],
            lambda g: (g[..., top:top+H, left:left+W],))

    if mode != 'symmetric':
        raise ValueError('unknown padding mode `'+str(mode)+'`')

    rows = np.pad(np.arange(H), (top, bottom), mode='symmetric')
    cols = np.pad(np.arange(W), (left, right), mode='symmetric')
    index = (slice(None), rows[:, None], cols[None, :])

    def backward(g):
        gx = np.zeros((int(np.prod(x.shape[:-2])), H, W))
        np.add.at(gx, index, g.reshape((-1,) + g.shape[-2:]))
        return (gx.reshape(x.shape),)

    out = x.data.reshape((-1, H, W))[index]
    return primitive('pad2d', out.reshape(x.shape[:-2] + out.shape[-2:]),
                     [x], backward)



#-----------------------------------------------------------------------------
# Pooling, sampling, resizing
#-----------------------------------------------------------------------------

def pool_channel_avg_max(input):
    '''
    B x C x H x W -> B x 2 x H x W: per-pixel channel mean and channel max.
    '''

    x = as_tensor(input)
    check_tensor4(x, 'pool_channel_avg_max input')
    C = x.shape[1]
    idx = np.argmax(x.data, axis=1)
    out = np.stack([x.data.mean(axis=1), x.data.max(axis=1)], axis=1)

    def backward(g):
        onehot = np.arange(C)[None, :, None, None] == idx[:, None]
        return (g[:, :1] / C + onehot * g[:, 1:2],)

    return primitive('pool_channel_avg_max', out, [x], backward)



def bilinear_sample(feat, coords):
    '''
    Sample a B x C x H x W map at normalised (x, y) coordinates.

    Parameters
    ----------
    feat : Tensor
        Feature map.
    coords : Tensor
        B x N x 2 coordinates per batch element, or N x 2 shared by the
        whole batch. x runs along W, y along H.

    Returns
    -------
    Tensor
        B x C x N samples. Coordinates outside [-1, 1] are clamped to the
        border first; their coordinate gradient is zero.

    '''

    f, c = as_tensor(feat), as_tensor(coords)
    check_tensor4(f, 'bilinear_sample feature map')
    B, C, H, W = f.shape
    shared = c.ndim == 2
    cd = c.data[None] if shared else c.data
    if cd.ndim != 3 or cd.shape[-1] != 2:
        raise ShapeError('bilinear_sample: coordinates must be N x 2 or '
                         'B x N x 2, got '+str(c.shape))
    if not shared and cd.shape[0] != B:
        raise ShapeError('bilinear_sample: coordinate batch '+str(cd.shape[0])+
                         ' differs from feature batch '+str(B))
    N = cd.shape[1]
    cd = np.broadcast_to(cd, (B, N, 2))

    sx, sy = (W - 1) / 2.0, (H - 1) / 2.0
    inside_x = (cd[..., 0] > -1.0) & (cd[..., 0] < 1.0)
    inside_y = (cd[..., 1] > -1.0) & (cd[..., 1] < 1.0)
    px = (np.clip(cd[..., 0], -1.0, 1.0) + 1.0) * sx
    py = (np.clip(cd[..., 1], -1.0, 1.0) + 1.0) * sy

    x0 = np.clip(np.floor(px), 0, max(W - 2, 0)).astype(int)
    y0 = np.clip(np.floor(py), 0, max(H - 2, 0)).astype(int)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = (px - x0)[..., None]
    wy = (py - y0)[..., None]

    ft = f.data.transpose(0, 2, 3, 1)
    bi = np.broadcast_to(np.arange(B)[:, None], (B, N))
    f00, f01 = ft[bi, y0, x0], ft[bi, y0, x1]
    f10, f11 = ft[bi, y1, x0], ft[bi, y1, x1]

    w00, w01 = (1 - wy) * (1 - wx), (1 - wy) * wx
    w10, w11 = wy * (1 - wx), wy * wx
    val = w00 * f00 + w01 * f01 + w10 * f10 + w11 * f11

    def backward(g):
        gt = g.transpose(0, 2, 1)
        gft = np.zeros(ft.shape)
        for yy, xx, ww in ((y0, x0, w00), (y0, x1, w01),
                           (y1, x0, w10), (y1, x1, w11)):
            np.add.at(gft, (bi, yy, xx), gt * ww)

        dpx = (1 - wy) * (f01 - f00) + wy * (f11 - f10)
        dpy = (1 - wx) * (f10 - f00) + wx * (f11 - f01)
        gc = np.stack([np.sum(gt * dpx, axis=-1) * sx * inside_x,
                       np.sum(gt * dpy, axis=-1) * sy * inside_y], axis=-1)
        if shared:
            gc = gc.sum(axis=0)
        return gft.transpose(0, 3, 1, 2), gc

    return primitive('bilinear_sample', val.transpose(0, 2, 1), [f, c],
                     backward)



def _upsample_matrix(n):
    ''' 2n x n matrix of 2x bilinear upsampling with half-pixel centres '''

    m = np.zeros((2 * n, n))
    src = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0, n - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n - 1)
    rows = np.arange(2 * n)
    np.add.at(m, (rows, i0), 1.0 - (src - i0))
    np.add.at(m, (rows, i1), src - i0)
    return m

def upsample_bilinear2x(input):
    x = as_tensor(input)
    check_tensor4(x, 'upsample input')
    mh, mw = _upsample_matrix(x.shape[2]), _upsample_matrix(x.shape[3])
    return primitive('upsample_bilinear2x', mh @ x.data @ mw.T, [x],
        lambda g: (mh.T @ g @ mw,))

def upsample_nearest2x(input):
    x = as_tensor(input)
    check_tensor4(x, 'upsample input')
    B, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    return primitive('upsample_nearest2x', out, [x],
        lambda g: (g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)),))



#-----------------------------------------------------------------------------
# Normalisation and attention
#-----------------------------------------------------------------------------

def layer_norm(tokens, gain, shift, eps=1e-5):
    '''
    Normalise every token over its last (channel) axis to zero mean and unit
    variance (eps in the denominator), then apply gain and shift.
    '''

    x, gain, shift = as_tensor(tokens), as_tensor(gain), as_tensor(shift)
    C = x.shape[-1]
    if gain.shape != (C,) or shift.shape != (C,):
        raise ShapeError('layer_norm: gain/shift must have C = '+str(C)+
                         ' entries, got '+str(gain.shape)+'/'+str(shift.shape))

    mu = x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv

    def backward(g):
        gx_hat = g * gain.data
        gx = inv / C * (C * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                        - xhat * np.sum(gx_hat * xhat, axis=-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return gx, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return primitive('layer_norm', xhat * gain.data + shift.data,
                     [x, gain, shift], backward)



def _head_view(x, heads):
    ''' B x Hk x N x C (Hk in {1, heads}) -> B x heads x N x C/heads '''

    B, Hk, N, C = x.shape
    x5 = x.reshape(B, Hk, N, heads, C // heads)
    if Hk == 1:
        return x5[:, 0].transpose(0, 2, 1, 3)
    h = np.arange(heads)
    return x5[:, h, :, h, :].transpose(1, 0, 2, 3)

def _head_scatter(gh, Hk):
    ''' Adjoint of _head_view '''

    B, heads, N, d = gh.shape
    if Hk == 1:
        return gh.transpose(0, 2, 1, 3).reshape(B, 1, N, heads * d)
    g5 = np.zeros((B, heads, N, heads, d))
    h = np.arange(heads)
    g5[:, h, :, h, :] = gh.transpose(1, 0, 2, 3)
    return g5.reshape(B, heads, N, heads * d)



def attention(q, k, v, heads):
    '''
    Multi-head scaled dot-product attention on projected tokens.

    Parameters
    ----------
    q : Tensor
        B x Nq x C projected queries.
    k, v : Tensor
        B x Hk x Nk x C projected keys/values. With Hk = 1 all heads share
        one token set; with Hk = heads, head h reads the channel slice
        h*C/H:(h+1)*C/H of its own token set.
    heads : int

    Returns
    -------
    Tensor
        B x Nq x C, heads concatenated. The attention weights
        (B x heads x Nq x Nk) are attached as `.weights`.

    '''

    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    B, Nq, C = q.shape
    Hk = k.shape[1]
    d = C // heads
    norm = 1.0 / np.sqrt(d)

    qh = q.data.reshape(B, Nq, heads, d).transpose(0, 2, 1, 3)
    kh, vh = _head_view(k.data, heads), _head_view(v.data, heads)
    A = _softmax(qh @ np.swapaxes(kh, -1, -2) * norm, axis=-1)
    out = (A @ vh).transpose(0, 2, 1, 3).reshape(B, Nq, C)

    def backward(g):
        goh = g.reshape(B, Nq, heads, d).transpose(0, 2, 1, 3)
        gA = goh @ np.swapaxes(vh, -1, -2)
        gS = A * (gA - np.sum(gA * A, axis=-1, keepdims=True)) * norm
        gq = (gS @ kh).transpose(0, 2, 1, 3).reshape(B, Nq, C)
        gk = _head_scatter(np.swapaxes(gS, -1, -2) @ qh, Hk)
        gv = _head_scatter(np.swapaxes(A, -1, -2) @ goh, Hk)
        return gq, gk, gv

    result = primitive('attention', out, [q, k, v], backward)
    result.weights = A
    return result



@dataclass
class AttentionParams:
    '''
    Projections Wq/Wk/Wv/Wo (C x C, applied as x W^T) with biases.
    '''
    channels: int
    heads: int
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    def __post_init__(self):
        if self.heads < 1 or self.channels % self.heads != 0:
            raise ShapeError('attention: channels ('+str(self.channels)+
                             ') must be divisible by heads ('+str(self.heads)+')')
        for name, t in self.tensors().items():
            want = (self.channels,) if name[0] == 'b' else \
                   (self.channels, self.channels)
            if t.shape != want:
                raise ShapeError('attention projection `'+name+'` must be '+
                                 str(want)+', got '+str(t.shape))

    @classmethod
    def create(cls, channels, heads, rng=None):

        rng = np.random.default_rng(0) if rng is None else rng
        std = 1.0 / np.sqrt(channels)
        w = lambda: parameter(rng.normal(0.0, std, (channels, channels)))
        b = lambda: parameter(np.zeros(channels))
        return cls(channels, heads, w(), b(), w(), b(), w(), b(), w(), b())

    def tensors(self):
        return {'wq': self.wq, 'bq': self.bq, 'wk': self.wk, 'bk': self.bk,
                'wv': self.wv, 'bv': self.bv, 'wo': self.wo, 'bo': self.bo}



def mha_cross(queries, keyvalues, heads, params, return_weights=False):
    '''
    Multi-head cross attention: softmax over the key tokens of
    (q k^T) / sqrt(C/H) per head, weighted sum of values, heads concatenated
    and output-projected.

    Parameters
    ----------
    queries : Tensor
        Nq x C, or B x Nq x C.
    keyvalues : Tensor
        Nk x C / B x Nk x C (shared by all heads) or B x H x Nk x C (one
        token set per head).
    heads : int
    params : AttentionParams
    return_weights : bool, optional
        Also return the B x H x Nq x Nk attention weights.

    '''

    q_in, kv = as_tensor(queries), as_tensor(keyvalues)
    if heads != params.heads:
        raise ShapeError('mha_cross: '+str(heads)+' heads requested but the '
                         'projections were built for '+str(params.heads))

    unbatched = q_in.ndim == 2
    if unbatched:
        q_in = reshape(q_in, (1,) + q_in.shape)
        kv = reshape(kv, (1,) + kv.shape)
    if kv.ndim == 3:
        kv = reshape(kv, (kv.shape[0], 1) + kv.shape[1:])

    B, Nq, C = q_in.shape
    if C != params.channels or kv.shape[-1] != params.channels:
        raise ShapeError('mha_cross: token channels '+str((C, kv.shape[-1]))+
                         ' differ from projection size '+str(params.channels))
    if kv.shape[0] != B or kv.shape[1] not in (1, heads):
        raise ShapeError('mha_cross: key/value shape '+str(kv.shape)+
                         ' incompatible with queries '+str(q_in.shape))
    if kv.shape[2] < 1:
        raise ShapeError('mha_cross: at least one key/value token required')

    q = linear(q_in, params.wq, params.bq)
    k = linear(kv, params.wk, params.bk)
    v = linear(kv, params.wv, params.bv)
    fused = attention(q, k, v, heads)
    out = linear(fused, params.wo, params.bo)

    if unbatched:
        out = reshape(out, (Nq, C))
    if return_weights:
        return out, fused.weights
    return out



#-----------------------------------------------------------------------------
# Loss primitive
#-----------------------------------------------------------------------------

def bce_with_logits(logits, target):
    '''
    Mean binary cross-entropy computed from logits in the stable form
    max(z, 0) - z t + log(1 + exp(-|z|)).
    '''

    z, t = as_tensor(logits), as_tensor(target)
    if z.shape != t.shape:
        raise ShapeError('bce_with_logits: logits '+str(z.shape)+
                         ' and target '+str(t.shape)+' differ')
    n = z.size
    loss = np.maximum(z.data, 0) - z.data * t.data + \
        np.log1p(np.exp(-np.abs(z.data)))

    return primitive('bce_with_logits', np.mean(loss), [z, t],
        lambda g: (g * (_sigmoid(z.data) - t.data) / n,
                   g * (-z.data) / n))
