#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np              # Import Numpy for computations
import matplotlib
matplotlib.use('Agg')           # Figures are only written to file
import matplotlib.pyplot as plt # Import Pyplot to generate plots
import seaborn as sns

from core.commons import cm2inch
from core.decompose import HIGHFREQ_OFFSET

def set_style():
    ''' Default pyplot style (font size, template, etc.) '''

    plt.close('all')
    sns.set_theme(style='ticks', palette='deep')
    plt.rcParams.update({'font.size': 7, 'font.family': 'serif',
                         'figure.dpi': 300})

    SMALL_SIZE = 7
    MEDIUM_SIZE = 9

    # Make sure the matplotlib generates editable text (e.g. for Illustrator)
    plt.rcParams['pdf.fonttype'] = 42
    plt.rcParams['ps.fonttype'] = 42

    plt.rc('axes', titlesize=MEDIUM_SIZE, labelsize=MEDIUM_SIZE)
    plt.rc('xtick', labelsize=SMALL_SIZE)
    plt.rc('ytick', labelsize=SMALL_SIZE)
    plt.rc('legend', fontsize=SMALL_SIZE)



def save_figure(fig, filename, formats=('pdf', 'png')):
    ''' Write a figure once per export format and close it '''

    fig.tight_layout()
    for form in formats:
        fig.savefig(filename+'.'+str(form), format=form, bbox_inches='tight')
    plt.close(fig)



def training_curves(frame, filename, formats=('pdf', 'png')):
    '''
    Loss, IoU and Fa per epoch of one or more training logs.

    Parameters
    ----------
    frame : DataFrame
        Rows of metrics.csv files (columns epoch, mode, seed, split, loss,
        iou, fa_e6).
    filename : str
        Output path without extension.

    Returns
    -------
    None.

    '''

    test = frame[frame['split'] == 'test']
    if test.empty:
        test = frame[frame['split'] == 'train']

    fig, axes = plt.subplots(1, 3, figsize=cm2inch(18, 5.5))
    for ax, column, label in zip(axes, ('loss', 'iou', 'fa_e6'),
                                 ('Loss', 'IoU', 'Fa ($10^{-6}$)')):
        sns.lineplot(data=test, x='epoch', y=column, hue='mode',
                     estimator=np.median, errorbar=None, ax=ax, linewidth=1)
        ax.set_xlabel('Epoch')
        ax.set_ylabel(label)
    for ax in axes[1:]:
        if ax.get_legend() is not None:
            ax.get_legend().remove()

    save_figure(fig, filename, formats)



def spiral_offsets(offsets, filename, formats=('pdf', 'png'), learned=None):
    '''
    Sampling points of every head around one reference point.

    Parameters
    ----------
    offsets : ndarray
        H x P x 2 spiral offsets (dx, dy) in coarse pixels.
    learned : ndarray, optional
        The same points after training, drawn hollow.

    '''

    fig = plt.figure(figsize=cm2inch(8, 8))
    ax = plt.gca()

    for h in range(offsets.shape[0]):
        color = sns.color_palette('deep')[h % 10]
        ax.plot(offsets[h, :, 0], offsets[h, :, 1], 'o-', color=color,
                markersize=3, linewidth=0.8, label='head '+str(h + 1))
        if learned is not None:
            ax.plot(learned[h, :, 0], learned[h, :, 1], 'o', color=color,
                    markerfacecolor='none', markersize=4)

    ax.plot([0], [0], 'k+', markersize=8)
    ax.set_aspect('equal')
    ax.set_xlabel('dx (coarse pixels)')
    ax.set_ylabel('dy (coarse pixels)')
    ax.legend(loc='upper right')

    save_figure(fig, filename, formats)



def decomposition_panel(original, lowfreq, highfreq, filename,
                        formats=('pdf', 'png')):
    ''' Original image next to its low- and high-frequency reconstructions '''

    fig, axes = plt.subplots(1, 3, figsize=cm2inch(15, 5.5))
    panels = ((original, 'Original'), (lowfreq, 'Low frequency'),
              (highfreq + HIGHFREQ_OFFSET, 'High frequency'))
    for ax, (image, title) in zip(axes, panels):
        ax.imshow(image, cmap='gray', vmin=0, vmax=1)
        ax.set_title(title)
        ax.axis('off')

    save_figure(fig, filename, formats)



def ablation_bars(frame, filename, formats=('pdf', 'png'), by='mode'):
    '''
    Median IoU, Pd and Fa per group (pyramid mode or input variant).
    '''

    fig, axes = plt.subplots(1, 3, figsize=cm2inch(16, 5))
    for ax, column, label in zip(axes, ('iou', 'pd', 'fa_e6'),
                                 ('IoU', 'Pd', 'Fa ($10^{-6}$)')):
        sns.barplot(data=frame, x=by, y=column, estimator=np.median,
                    errorbar=None, ax=ax)
        ax.set_xlabel('')
        ax.set_ylabel(label)

    save_figure(fig, filename, formats)
