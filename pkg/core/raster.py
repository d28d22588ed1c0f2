#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Binary portable graymap (P5) rasters, 8 or 16 bit, and the plain-text
dataset manifest of "image_path mask_path" lines.
"""

import os                       # Import OS to allow creation of folders
import numpy as np              # Import Numpy for computations

from .commons import RasterFormatError, ShapeError
from .tensor import Tensor

WHITESPACE = b' \t\n\r\v\f'

def _header_token(data, pos):
    ''' Next header token and the position after it (skips comments) '''

    while pos < len(data):
        if data[pos:pos + 1] in (b'#',):
            while pos < len(data) and data[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        elif data[pos:pos + 1] and data[pos] in WHITESPACE:
            pos += 1
        else:
            break

    start = pos
    while pos < len(data) and data[pos] not in WHITESPACE and \
            data[pos:pos + 1] != b'#':
        pos += 1
    if start == pos:
        raise RasterFormatError('truncated header', start)
    return data[start:pos], start, pos



def decode_pgm(data):
    '''
    Parse P5 bytes.

    Returns
    -------
    image : ndarray
        H x W uint8 (maxval < 256) or uint16 (big-endian on disk).
    maxval : int

    '''

    if data[:2] != b'P5':
        raise RasterFormatError('not a binary graymap (magic '+
                                repr(bytes(data[:2]))+')', 0)

    pos = 2
    values = []
    for what in ('width', 'height', 'maxval'):
        token, start, pos = _header_token(data, pos)
        if not token.isdigit():
            raise RasterFormatError('invalid '+what+' '+repr(token), start)
        values.append(int(token))
    width, height, maxval = values

    if width < 1 or height < 1:
        raise RasterFormatError('empty raster '+str((width, height)), pos)
    if not 0 < maxval < 65536:
        raise RasterFormatError('maxval '+str(maxval)+' out of range', pos)
    if pos >= len(data) or data[pos] not in WHITESPACE:
        raise RasterFormatError('missing whitespace before pixel data', pos)
    pos += 1

    dtype = np.dtype('u1') if maxval < 256 else np.dtype('>u2')
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise RasterFormatError('truncated pixel data: '+str(need)+
                                ' bytes expected, '+str(len(data) - pos)+
                                ' present', len(data))

    image = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    image = image.reshape(height, width).astype(np.uint8 if maxval < 256
                                                else np.uint16)
    if image.max() > maxval:
        bad = int(np.argmax(image.reshape(-1) > maxval))
        raise RasterFormatError('sample exceeds maxval '+str(maxval),
                                pos + bad * dtype.itemsize)
    return image, maxval



def encode_pgm(image, maxval):

    image = np.asarray(image)
    if image.ndim != 2:
        raise ShapeError('graymap must be H x W, got '+str(image.shape))
    dtype = np.dtype('u1') if maxval < 256 else np.dtype('>u2')
    header = ('P5\n%d %d\n%d\n' % (image.shape[1], image.shape[0], maxval))
    return header.encode('ascii') + image.astype(dtype).tobytes()



def _squeeze2d(image, what):
    a = image.data if isinstance(image, Tensor) else np.asarray(image)
    a = np.squeeze(a) if a.ndim != 2 else a
    if a.ndim != 2:
        raise ShapeError(what+' must be a single H x W plane, got '+
                         str(np.shape(a)))
    return a



def quantize(images, bits=16):
    '''
    Round intensities in [0, 1] to the levels of a `bits` raster, so that
    in-memory images equal what write_gray/read_gray would give back.
    '''

    maxval = (1 << bits) - 1
    return np.round(np.clip(images, 0.0, 1.0) * maxval) / maxval



def write_gray(path, image, bits=16):
    '''
    Write a grayscale raster. Integer arrays are stored as they are (they
    must fit in `bits`); floats are read as intensities in [0, 1], clipped
    and rounded to the full range.
    '''

    a = _squeeze2d(image, 'image')
    maxval = (1 << bits) - 1
    if np.issubdtype(a.dtype, np.integer):
        if a.min() < 0 or a.max() > maxval:
            raise ValueError('integer image does not fit in '+str(bits)+' bits')
        q = a
    else:
        q = np.round(np.clip(a, 0.0, 1.0) * maxval)

    with open(path, 'wb') as filehandle:
        filehandle.write(encode_pgm(q, maxval))



def read_gray(path, raw=False):
    '''
    Read a grayscale raster. Returns the stored integers when raw, otherwise
    intensities in [0, 1] (float64).
    '''

    with open(path, 'rb') as filehandle:
        image, maxval = decode_pgm(filehandle.read())
    return image if raw else image.astype(np.float64) / maxval



def write_mask(path, mask):
    ''' Binary mask as an 8-bit raster with values {0, 255} '''

    m = _squeeze2d(mask, 'mask') > 0
    with open(path, 'wb') as filehandle:
        filehandle.write(encode_pgm(m.astype(np.uint8) * 255, 255))



def read_mask(path):
    with open(path, 'rb') as filehandle:
        image, _ = decode_pgm(filehandle.read())
    return image > 0



def write_manifest(path, pairs):
    '''
    Write "image_path mask_path" lines; paths are stored relative to the
    manifest directory.
    '''

    root = os.path.dirname(os.path.abspath(path))
    with open(path, 'w') as filehandle:
        for image_path, mask_path in pairs:
            filehandle.write(os.path.relpath(image_path, root)+' '+
                             os.path.relpath(mask_path, root)+'\n')



def read_manifest(path):
    ''' (image_path, mask_path) pairs, resolved against the manifest dir '''

    root = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path, 'r') as filehandle:
        for n, line in enumerate(filehandle):
            line = line.strip()
            if not line or line[0] == '#':
                continue
            frags = line.split()
            if len(frags) != 2:
                raise ValueError(path+': line '+str(n + 1)+' must hold '
                                 '"image_path mask_path"')
            pairs.append(tuple(p if os.path.isabs(p) else
                               os.path.normpath(os.path.join(root, p))
                               for p in frags))
    return pairs



def write_dataset(folder, images, masks, prefix='scene'):
    '''
    Store N x 1 x H x W images (16 bit) and masks (8 bit) plus a
    `manifest.txt`; returns the manifest path.
    '''

    os.makedirs(folder, exist_ok=True)
    pairs = []
    for i in range(len(images)):
        image_path = os.path.join(folder, '%s_%04d.pgm' % (prefix, i))
        mask_path = os.path.join(folder, '%s_%04d_mask.pgm' % (prefix, i))
        write_gray(image_path, images[i])
        write_mask(mask_path, masks[i])
        pairs.append((image_path, mask_path))

    manifest = os.path.join(folder, 'manifest.txt')
    write_manifest(manifest, pairs)
    return manifest



def load_dataset(manifest):
    '''
    Images (float in [0, 1]) and masks ({0, 1}) listed in a manifest, as
    N x 1 x H x W arrays, plus the image names.
    '''

    pairs = read_manifest(manifest)
    if not pairs:
        raise ValueError(manifest+': dataset is empty')

    images = [read_gray(i) for i, _ in pairs]
    masks = [read_mask(m).astype(float) for _, m in pairs]
    if len({im.shape for im in images + masks}) != 1:
        raise ShapeError(manifest+': images and masks differ in size')

    names = [os.path.splitext(os.path.basename(i))[0] for i, _ in pairs]
    return np.stack(images)[:, None], np.stack(masks)[:, None], names
