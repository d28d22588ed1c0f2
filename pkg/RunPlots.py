#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""

Post-processing of finished runs: median final metrics per pyramid mode over
seeds, median metrics per decomposition variant, the trend checks of the
ablation and decomposition studies, and the figures.

Usage:  python RunPlots.py <run folder> [<run folder> ...] [--out DIR]
______________________________________________________________________________
"""

import os
import sys
import glob
import argparse
import numpy as np
import pandas as pd

from core.commons import createDirectory, printSuccess, printWarning, table
from core.decompose import highfreq_from_raster
from core.export import read_csv, result_exporter
from core.raster import read_gray
from core.sfs import read_offsets

# Allowed IoU loss of the full model against the plain pyramid
IOU_MARGIN = 0.02

def final_rows(folders):
    ''' Last-epoch rows of every training log (test split when present) '''

    rows = []
    for folder in folders:
        path = os.path.join(folder, 'metrics.csv')
        if not os.path.isfile(path):
            continue
        df = read_csv(path)
        last = df[df['epoch'] == df['epoch'].max()]
        split = 'test' if (last['split'] == 'test').any() else 'train'
        row = last[last['split'] == split].iloc[0].to_dict()
        row['folder'] = folder
        rows.append(row)
    return pd.DataFrame(rows)



def variant_rows(folders):

    frames = []
    for folder in folders:
        path = os.path.join(folder, 'variants.csv')
        if os.path.isfile(path):
            df = read_csv(path)
            df['folder'] = folder
            frames.append(df)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()



def check_trends(ablation, variants):
    '''
    Returns a list of (description, holds) for every trend the available
    results allow to check.
    '''

    checks = []
    if {'plain', 'ns'} <= set(ablation.index):
        ns, plain = ablation.loc['ns'], ablation.loc['plain']
        checks.append(('median Fa: ns <= plain', ns['fa_e6'] <= plain['fa_e6']))
        checks.append(('median IoU: ns >= plain - '+str(IOU_MARGIN),
                       ns['iou'] >= plain['iou'] - IOU_MARGIN))
    if {'original', 'lowfreq'} <= set(variants.index):
        checks.append(('median Fa: lowfreq <= original',
                       variants.loc['lowfreq', 'fa_e6'] <=
                       variants.loc['original', 'fa_e6']))
    return checks



def plot(folders, out, finals=None, variants=None, formats=('pdf', 'png')):

    from plotting import createPlots
    createPlots.set_style()

    if finals is not None and len(finals):
        createPlots.ablation_bars(finals, os.path.join(out, 'ablation'),
                                  formats)
    if variants is not None and len(variants):
        createPlots.ablation_bars(variants, os.path.join(out, 'variants'),
                                  formats, by='variant')

    logs = []
    for folder in folders:
        path = os.path.join(folder, 'metrics.csv')
        if os.path.isfile(path):
            logs.append(read_csv(path))
    if logs:
        createPlots.training_curves(pd.concat(logs, ignore_index=True),
                                    os.path.join(out, 'training_curves'),
                                    formats)

    for folder in folders:
        path = os.path.join(folder, 'offsets.txt')
        if os.path.isfile(path):
            learned = sorted(glob.glob(os.path.join(folder, 'offsets_level*.txt')))
            createPlots.spiral_offsets(
                read_offsets(path), os.path.join(out, 'spiral_offsets'),
                formats, read_offsets(learned[0]) if learned else None)
            break

    for folder in folders:
        images = sorted(glob.glob(os.path.join(folder, 'original', '*.pgm')))
        if images:
            name = os.path.basename(images[0])
            createPlots.decomposition_panel(
                read_gray(images[0]),
                read_gray(os.path.join(folder, 'lowfreq', name)),
                highfreq_from_raster(read_gray(os.path.join(folder,
                                               'highfreq', name), raw=True)),
                os.path.join(out, 'decomposition'), formats)
            break



def main(argv=None):

    parser = argparse.ArgumentParser(description="Summarise finished runs")
    parser.add_argument('folders', nargs='+', help="Output folders of train/decompose/spiral-dump runs")
    parser.add_argument('--out', type=str, default='output/summary', help="Folder for tables and figures")
    parser.add_argument('--no-plots', dest='plots', action='store_false', help="Skip the figures")
    args = parser.parse_args(argv)

    createDirectory(args.out)
    exporter = result_exporter(args.out)
    metrics = ['iou', 'pd', 'fa_e6']

    finals = final_rows(args.folders)
    ablation = finals.groupby('mode')[metrics].median() if len(finals) \
        else pd.DataFrame(columns=metrics)
    variants = variant_rows(args.folders)
    by_variant = variants.groupby('variant')[metrics].median() \
        if len(variants) else pd.DataFrame(columns=metrics)

    tab = table([12, 8, 10, 10, 12])
    if len(ablation):
        tab.print_row(['MODE', 'RUNS', 'IOU', 'PD', 'FA (1e-6)'], head=True)
        for mode, row in ablation.iterrows():
            runs = int(np.sum(finals['mode'] == mode))
            tab.print_row([mode, runs, '%.4f' % row['iou'], '%.4f' % row['pd'],
                           '%.2f' % row['fa_e6']])
        exporter.replace_df(ablation.reset_index(), 'ablation')
        exporter.write_csv('ablation')

    if len(by_variant):
        tab.print_row(['VARIANT', 'RUNS', 'IOU', 'PD', 'FA (1e-6)'], head=True)
        for variant, row in by_variant.iterrows():
            runs = int(np.sum(variants['variant'] == variant))
            tab.print_row([variant, runs, '%.4f' % row['iou'],
                           '%.4f' % row['pd'], '%.2f' % row['fa_e6']])
        exporter.replace_df(by_variant.reset_index(), 'variants_summary')
        exporter.write_csv('variants_summary')

    checks = check_trends(ablation, by_variant)
    for description, holds in checks:
        (printSuccess if holds else printWarning)(
            description+(': holds' if holds else ': violated'))

    if args.plots:
        plot(args.folders, args.out, finals, variants)
        print('-- Figures written to', args.out)

    return 0 if all(holds for _, holds in checks) else 1



if __name__ == '__main__':
    sys.exit(main())
