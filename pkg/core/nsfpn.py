#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Noise-suppression feature pyramid: lateral 1x1 reduction, purification on the
laterals, top-down spiral-sampling fusion (Y4 -> Y3 -> Y2 -> Y1), plus the
small backbone and segmentation head used for desk-scale experiments.
"""

import numpy as np              # Import Numpy for computations
from dataclasses import dataclass, field, asdict

from .commons import CheckpointError, ConfigError, ShapeError, seed_sequence
from .tensor import ConvParams, add, as_tensor, check_tensor4, conv2d, \
    silu, upsample_bilinear2x, upsample_nearest2x
from .lfp import LfpParams, lfp_forward
from .sfs import SfsParams, SpiralConfig, dat_offset_params, sfs_fuse

FPN_MODES = ('plain', 'lfp', 'sfs', 'ns')
STRIDES = (2, 4, 8, 16)

# Top-down edges (coarse level -> fine level), 1-based
EDGES = ((4, 3), (3, 2), (2, 1))

@dataclass
class NsFpnConfig:
    '''
    Architecture of the desk-scale model.

    fpn_mode selects the ablation variant: `plain` (identity laterals,
    nearest upsampling + addition), `lfp` (purified laterals, plain fusion),
    `sfs` (raw laterals, spiral fusion) or `ns` (both). lfp_levels lists the
    1-based levels that carry purification in `lfp`/`ns` mode.
    '''
    in_channels: int = 1
    channels: int = 64
    backbone_widths: tuple = (16, 32, 64, 64)
    head_width: int = 16
    fpn_mode: str = 'ns'
    lfp_levels: tuple = (1, 2, 3, 4)
    tau_quantile: float = 0.5
    tau_abs: float = None
    kernel_size: int = 3
    attention_kernel: int = 7
    sigma_init: float = 1.0
    head_bias: float = -4.6
    spiral: SpiralConfig = field(default_factory=SpiralConfig)

    def __post_init__(self):
        if isinstance(self.spiral, dict):
            self.spiral = SpiralConfig(**self.spiral)
        self.backbone_widths = tuple(int(w) for w in self.backbone_widths)
        self.lfp_levels = tuple(sorted(int(l) for l in self.lfp_levels))

        if self.fpn_mode not in FPN_MODES:
            raise ConfigError('fpn_mode must be one of '+str(FPN_MODES)+
                              ', got `'+str(self.fpn_mode)+'`')
        if len(self.backbone_widths) != 4:
            raise ConfigError('backbone_widths needs four stage widths')
        if any(l not in (1, 2, 3, 4) for l in self.lfp_levels):
            raise ConfigError('lfp_levels must be a subset of {1, 2, 3, 4}')
        if self.uses_sfs and self.channels % self.spiral.heads != 0:
            raise ShapeError('channels ('+str(self.channels)+') must be '
                             'divisible by spiral heads ('+
                             str(self.spiral.heads)+')')

    @property
    def uses_lfp(self):
        return self.fpn_mode in ('lfp', 'ns')

    @property
    def uses_sfs(self):
        return self.fpn_mode in ('sfs', 'ns')

    def to_dict(self):
        out = asdict(self)
        out['backbone_widths'] = list(self.backbone_widths)
        out['lfp_levels'] = list(self.lfp_levels)
        return out

    @classmethod
    def from_dict(cls, values):
        return cls(**values)



@dataclass
class PyramidFeatures:
    ''' Four maps at strides {2, 4, 8, 16} sharing batch and channels '''
    levels: tuple

    def __post_init__(self):
        self.levels = tuple(self.levels)
        check_chain(self.levels, 'pyramid')
        if len({t.shape[1] for t in self.levels}) != 1:
            raise ShapeError('pyramid levels differ in channel count: '+
                             str([t.shape[1] for t in self.levels]))

    def __getitem__(self, i):
        return self.levels[i]

    def __len__(self):
        return len(self.levels)

    def shapes(self):
        return [tuple(t.shape) for t in self.levels]



def check_chain(feats, what):
    ''' Four B x C x H x W maps, each half the size of the previous one '''

    if len(feats) != 4:
        raise ShapeError(what+': expected 4 levels, got '+str(len(feats)))
    for i, t in enumerate(feats):
        check_tensor4(t, what+' level '+str(i + 1))
        if t.shape[0] != feats[0].shape[0]:
            raise ShapeError(what+': batch size of level '+str(i + 1)+
                             ' differs from level 1')
        if i and (2 * t.shape[2], 2 * t.shape[3]) != tuple(feats[i - 1].shape[2:]):
            raise ShapeError(what+': stride chain violated, level '+str(i + 1)+
                             ' is '+str(t.shape[2:])+' but level '+str(i)+
                             ' is '+str(feats[i - 1].shape[2:]))



class NsFpn(object):
    '''
    Parameter container of the full model. Parameter names are stable
    (`backbone.0.weight`, `lateral.1.bias`, `lfp.2.sigma_raw`,
    `sfs.3.epsilon`, `head.1.bias`, ...) and index the checkpoint.
    '''

    def __init__(self, config, seed=0):

        self.config = config
        rng = seed_sequence(seed, 0)
        C = config.channels

        widths = (config.in_channels,) + config.backbone_widths
        self.backbone = [ConvParams.create(widths[i], widths[i + 1], 3,
                                           stride=2, padding=1, rng=rng)
                         for i in range(4)]
        self.laterals = [ConvParams.create(w, C, 1, rng=rng, gain=1.0)
                         for w in config.backbone_widths]

        self.lfp = {}
        if config.uses_lfp:
            for level in config.lfp_levels:
                self.lfp[level] = LfpParams.create(
                    seed_sequence(seed, 1, level), config.sigma_init,
                    config.tau_quantile, config.kernel_size,
                    config.attention_kernel, config.tau_abs)

        self.sfs = {}
        if config.uses_sfs:
            for _, fine in EDGES:
                self.sfs[fine] = SfsParams.create(C, config.spiral,
                                                  seed_sequence(seed, 2, fine))

        # Separate streams keep shared parts identical across fpn modes
        rng = seed_sequence(seed, 3)
        self.head = [ConvParams.create(C, config.head_width, 3, padding=1,
                                       rng=rng),
                     ConvParams.create(config.head_width, 1, 1, rng=rng,
                                       gain=1.0)]
        self.head[1].bias.data[:] = config.head_bias

    def parameters(self):
        ''' Ordered {name: Tensor} of every learnable tensor '''

        params = {}
        for prefix, convs in (('backbone', self.backbone),
                              ('lateral', self.laterals)):
            for i, conv in enumerate(convs):
                for k, t in conv.tensors().items():
                    params[prefix+'.'+str(i)+'.'+k] = t
        for level, p in self.lfp.items():
            for k, t in p.tensors().items():
                params['lfp.'+str(level)+'.'+k] = t
        for level, p in self.sfs.items():
            for k, t in p.tensors().items():
                params['sfs.'+str(level)+'.'+k] = t
        for i, conv in enumerate(self.head):
            for k, t in conv.tensors().items():
                params['head.'+str(i)+'.'+k] = t
        return params

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def load_state(self, arrays):
        '''
        Copy named arrays into the parameters; names and shapes must match.
        '''

        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise CheckpointError('checkpoint does not match the model: '
                                  'missing '+str(missing)+', unexpected '+
                                  str(extra))
        for name, t in params.items():
            a = np.asarray(arrays[name])
            if a.shape != t.shape:
                raise CheckpointError('parameter `'+name+'`: checkpoint shape '+
                                      str(a.shape)+' vs model shape '+
                                      str(t.shape))
            t.data[...] = a

    def zero_grad(self):
        for t in self.parameters().values():
            t.zero_grad()

    def pyramid(self, image):
        return nsfpn_forward(tiny_backbone(image, self.backbone), self)

    def forward(self, image):
        ''' Mask logits B x 1 x H x W '''
        return seg_head(self.pyramid(image)[0], self.head)



def tiny_backbone(image, stages):
    '''
    Four stride-2 3x3 conv + SiLU stages.

    Parameters
    ----------
    image : Tensor
        B x Cin x H x W with H, W divisible by 16.
    stages : list of ConvParams

    Returns
    -------
    list
        Feature maps at strides {2, 4, 8, 16}.

    '''

    x = as_tensor(image)
    check_tensor4(x, 'backbone input')
    H, W = x.shape[2:]
    if H % 16 or W % 16:
        raise ShapeError('backbone input height/width '+str((H, W))+
                         ' must be divisible by 16')

    feats = []
    for conv in stages:
        x = silu(conv2d(x, conv))
        feats.append(x)
    return feats



def lateral_reduce(backbone_feats, laterals):
    ''' 1x1 convolutions to the common channel count: X1..X4 '''

    check_chain(backbone_feats, 'lateral_reduce')
    return PyramidFeatures([conv2d(f, conv)
                            for f, conv in zip(backbone_feats, laterals)])



def nsfpn_forward(backbone_feats, model):
    '''
    Y4 = X'4 and Y_i = fuse(X'_i, Y_{i+1}) for i = 3, 2, 1, where X'_i is the
    purified lateral (or X_i itself) and fuse is spiral sampling fusion or
    nearest 2x upsampling plus addition, depending on fpn_mode.
    '''

    cfg = model.config
    x = lateral_reduce(backbone_feats, model.laterals).levels

    purified = [lfp_forward(x[i], model.lfp[i + 1], pad=True)
                if (i + 1) in model.lfp else x[i] for i in range(4)]

    y = [None, None, None, purified[3]]
    for coarse, fine in EDGES:
        xi, y_next = purified[fine - 1], y[coarse - 1]
        if fine in model.sfs:
            y[fine - 1] = sfs_fuse(xi, y_next, cfg.spiral, model.sfs[fine])
        else:
            y[fine - 1] = add(xi, upsample_nearest2x(y_next))

    return PyramidFeatures(y)



def seg_head(y1, head):
    ''' 3x3 conv, SiLU, 1x1 conv to one channel, bilinear 2x upsample '''

    return upsample_bilinear2x(conv2d(silu(conv2d(y1, head[0])), head[1]))



def count_params_flops(model, image_size=(64, 64)):
    '''
    Analytic parameter and multiply-accumulate counts.

    Parameters
    ----------
    model : NsFpn
    image_size : tuple, optional
        Input height and width for the MAC estimate. The default is (64, 64).

    Returns
    -------
    dict
        `params` and `macs` per component {lfp, sfs, rest, total}, and a
        `detail` breakdown including the per-query (DAT-style) offset
        predictor count for the same heads/points.

    '''

    cfg = model.config
    C = cfg.channels
    H, W = image_size
    sizes = [(H // s, W // s) for s in STRIDES]

    params = {'lfp': 0, 'sfs': 0, 'rest': 0}
    for name, t in model.parameters().items():
        group = name.split('.')[0]
        params[group if group in params else 'rest'] += t.size
    params['total'] = sum(params.values())

    macs = {'lfp': 0, 'sfs': 0, 'rest': 0}
    widths = (cfg.in_channels,) + cfg.backbone_widths
    for i, (h, w) in enumerate(sizes):
        macs['rest'] += widths[i + 1] * widths[i] * 9 * h * w
        macs['rest'] += C * widths[i + 1] * h * w

    for level, p in model.lfp.items():
        h, w = sizes[level - 1]
        hb, wb = (h + 1) // 2, (w + 1) // 2
        k = p.kernel_size
        macs['lfp'] += 8 * C * h * w                                   # dwt + idwt
        macs['lfp'] += 2 * p.attention.kernel_size**2 * hb * wb        # attention conv
        macs['lfp'] += 3 * C * hb * wb * (1 + k * k)                  # modulate + blur

    spiral = cfg.spiral
    dat_macs = 0
    for level in model.sfs:
        h, w = sizes[level - 1]
        hn, wn = sizes[level]
        g = min(spiral.grid_stride, hn, wn)
        n_ref = -(-hn // g) * -(-wn // g)
        nq, nk = h * w, n_ref * spiral.points
        macs['sfs'] += 2 * nq * C * C                           # q and output projections
        macs['sfs'] += 2 * spiral.heads * nk * C * C            # k and v projections
        macs['sfs'] += 2 * nq * nk * C                          # scores + weighted sum
        macs['sfs'] += 4 * spiral.heads * nk * C                # bilinear sampling
        dat_macs += n_ref * C * spiral.heads * spiral.points * 2

    h1, w1 = sizes[0]
    macs['rest'] += cfg.head_width * C * 9 * h1 * w1 + cfg.head_width * h1 * w1
    macs['total'] = sum(macs.values())

    edges = len(model.sfs)
    detail = {
        'lfp.instances': len(model.lfp),
        'lfp.attention_conv': sum(p.attention.count() for p in model.lfp.values()),
        'lfp.sigma': len(model.lfp),
        'sfs.edges': edges,
        'sfs.offsets': edges * spiral.heads * spiral.points * 2,
        'sfs.attention_weights': edges * 4 * C * C,
        'sfs.attention_biases': edges * 4 * C,
        'sfs.layer_norm': edges * 4 * C,
        'dat.offsets': edges * dat_offset_params(C, spiral),
        'dat.offset_macs': dat_macs,
    }

    return {'params': params, 'macs': macs, 'detail': detail}
