#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Subcommands of RunFile.py. Every command takes the resolved settings and
the parsed arguments, writes its outputs into one folder together with the
resolved configuration, and returns the process exit code.
"""

import os                       # Import OS to allow creation of folders
import numpy as np              # Import Numpy for computations
import pandas as pd             # Import Pandas to store data in frames
import imageio.v2 as imageio     # Import to write PNG previews
from progressbar import progressbar # Import to create progress bars

from .commons import ConfigError, RasterFormatError, createDirectory, \
    printSuccess, printWarning, table
from .decompose import HIGHFREQ_OFFSET, VARIANTS, freq_decompose_image, \
    highfreq_to_raster, variant_images
from .export import restore_model, result_exporter, save_checkpoint
from .gradcheck import SUITE, run_suite
from .metrics import MetricAccumulator
from .nsfpn import NsFpn, count_params_flops
from .raster import load_dataset, quantize, read_gray, read_manifest, \
    read_mask, write_dataset, write_gray
from .scene import make_dataset
from .sfs import spiral_polar, write_offsets
from .training import evaluate, fit, summary_row

def _prepare(setup, args, command):
    ''' Output folder with the resolved configuration written into it '''

    folder = setup.output_folder(command, args.out)
    setup.write(os.path.join(folder, 'resolved_config.txt'))
    print(' -- Output folder:', folder)
    return folder



def load_split(setup, split, manifest=None):
    '''
    Images, masks and names of a split: read from a manifest when one is
    given (argument or `data.<split>_manifest`), otherwise generated from
    the scene configuration and quantised to the raster bit depth.
    '''

    manifest = manifest or setup.data[split+'_manifest']
    if manifest:
        images, masks, names = load_dataset(manifest)
        print(' -- Loaded '+str(len(images))+' '+split+' images from', manifest)
        return images, masks, names

    count = setup.data[split+'_size']
    # Disjoint seed streams per split
    seed = 2 * setup.data['seed'] + (split == 'test')
    images, masks = make_dataset(seed, count, setup.scene_config(),
                                 setup.run['workers'])
    print(' -- Generated '+str(count)+' synthetic '+split+' scenes')
    return quantize(images, setup.data['bits']), masks, \
        ['%s_%04d' % (split, i) for i in range(count)]



def _summary_table(rows, label):

    tab = table([14, 10, 10, 12, 10, 10, 14])
    tab.print_row([label.upper(), 'IOU', 'PD', 'FA (1e-6)', 'MATCHED',
                   'MISSED', 'FALSE REGIONS'], head=True)
    for name, row in rows:
        tab.print_row([name, '%.4f' % row['iou'], '%.4f' % row['pd'],
                       '%.2f' % row['fa_e6'], row['matched'], row['missed'],
                       row['false_regions']])



#-----------------------------------------------------------------------------
# gradcheck
#-----------------------------------------------------------------------------

def cmd_gradcheck(setup, args):
    '''
    Finite-difference check of every differentiable operation and of the
    full model. Exit code 1 names the operations that exceed tolerance.
    '''

    names = args.ops
    unknown = [n for n in (names or []) if n not in SUITE]
    if unknown:
        raise ConfigError('unknown gradcheck operation(s) '+str(unknown)+
                          '; available: '+', '.join(SUITE))

    folder = _prepare(setup, args, 'gradcheck')
    cfg = setup.gradcheck
    rows = run_suite(seeds=cfg['seeds'], step=cfg['step'],
                     tolerance=cfg['tolerance'], names=names,
                     verbose=args.verbose)

    exporter = result_exporter(folder)
    exporter.replace_df(rows, 'gradcheck')
    exporter.write_csv('gradcheck')

    tab = table([24, 16, 12, 8])
    tab.print_row(['OPERATION', 'MAX REL ERROR', 'TOLERANCE', 'PASSED'],
                  head=True)
    for row in rows:
        tab.print_row([row['op'], '%.3e' % row['max_rel_error'],
                       '%.0e' % row['tolerance'], str(row['passed'])],
                      sort=False if row['passed'] else 'Warning')

    failed = [row['op'] for row in rows if not row['passed']]
    if failed:
        print('ERROR: gradient check failed for: '+', '.join(failed))
        return 1

    printSuccess('All '+str(len(rows))+' gradient checks passed')
    return 0



#-----------------------------------------------------------------------------
# train
#-----------------------------------------------------------------------------

def cmd_train(setup, args):
    '''
    Train one model. metrics.csv is rewritten after every epoch, so an
    aborted run keeps its log up to the last finished epoch.
    '''

    folder = _prepare(setup, args, 'train')
    seed = setup.run['seed']
    model_cfg = setup.model_config()

    train = load_split(setup, 'train')
    test = load_split(setup, 'test')
    if len(train[0]) == 0:
        raise ValueError('the training set is empty')

    model = NsFpn(model_cfg, seed)
    exporter = result_exporter(folder)

    def flush(history):
        exporter.replace_df(pd.DataFrame(history).drop(columns='seconds'),
                            'metrics')
        exporter.write_csv('metrics')

    print(' -- Train `'+model_cfg.fpn_mode+'` model ('+
          str(sum(t.size for t in model.parameters().values()))+
          ' parameters) for '+str(setup.train['epochs'])+' epochs')
    try:
        history = fit(model, train[:2], test[:2] if len(test[0]) else None,
                      setup.train_config(), setup.eval_config(), seed=seed,
                      label=model_cfg.fpn_mode, verbose=args.verbose,
                      on_epoch=flush)
    except FloatingPointError:
        printWarning('Training aborted; the log up to the last finished '
                     'epoch is kept in '+folder)
        raise
    timing = pd.DataFrame(history)
    timing = timing[timing['split'] == 'train'][['epoch', 'seconds']]
    exporter.replace_df(timing, 'timing')
    exporter.write_csv('timing')

    save_checkpoint(os.path.join(folder, 'checkpoint.npz'), model)
    exporter.save_to_excel(os.path.join(folder, 'metrics.xlsx'))

    final = [(row['split'], row) for row in history
             if row['epoch'] == history[-1]['epoch']]
    _summary_table(final, 'split')
    printSuccess('Training finished after '+
                 str(np.round(timing['seconds'].sum(), 1))+' seconds of updates')
    return 0



#-----------------------------------------------------------------------------
# eval
#-----------------------------------------------------------------------------

def cmd_eval(setup, args):
    ''' Per-image and micro-averaged metrics of a checkpoint '''

    folder = _prepare(setup, args, 'eval')
    model = restore_model(args.checkpoint, setup.model_config())
    images, masks, names = load_split(setup, args.split, args.manifest)

    acc = evaluate(model, images, masks, setup.eval_config(), names)
    summary = acc.summary()

    exporter = result_exporter(folder)
    exporter.replace_df(acc.frame(), 'per_image')
    row = {'images': len(acc)}
    row.update(summary.as_row())
    exporter.replace_df([row], 'summary')
    exporter.write_csv('per_image')
    exporter.write_csv('summary')

    _summary_table([('all', summary_row(summary))], 'images')
    return 0



#-----------------------------------------------------------------------------
# decompose
#-----------------------------------------------------------------------------

def _decompose_sources(setup, args):
    ''' (name, loader) pairs; loaders read lazily so bad files are skipped '''

    manifest = args.manifest or setup.data[args.split+'_manifest']
    if not manifest:
        images, masks, names = load_split(setup, args.split)
        return [(name, lambda i=i: (images[i, 0], masks[i, 0]))
                for i, name in enumerate(names)]

    return [(os.path.splitext(os.path.basename(image_path))[0],
             lambda p=(image_path, mask_path):
                 (read_gray(p[0]), read_mask(p[1]).astype(float)))
            for image_path, mask_path in read_manifest(manifest)]



def _preview(path, original, lowfreq, highfreq):
    ''' Side-by-side 8-bit panel: original, lowfreq, highfreq + offset '''

    panel = np.hstack([original, lowfreq, highfreq + HIGHFREQ_OFFSET])
    imageio.imwrite(path, np.round(np.clip(panel, 0, 1) * 255).astype(np.uint8))



def cmd_decompose(setup, args):
    '''
    Low/high-frequency reconstructions of every image as rasters, PNG
    previews and detail-band energies; with a checkpoint, metrics on the
    original, low-frequency and high-frequency variants. Exit code 3 when
    images were skipped.
    '''

    folder = _prepare(setup, args, 'decompose')
    bits = setup.data['bits']
    for sub in ('original', 'lowfreq', 'highfreq', 'previews'):
        createDirectory(os.path.join(folder, sub))

    model = None
    if args.checkpoint:
        model = restore_model(args.checkpoint, setup.model_config())
        accumulators = {v: MetricAccumulator(setup.eval['fa_mode'])
                        for v in VARIANTS}

    energy, skipped = [], []
    sources = _decompose_sources(setup, args)
    for name, load in (sources if args.verbose else progressbar(sources)):
        try:
            image, mask = load()
        except (OSError, RasterFormatError) as e:
            printWarning('Skipped `'+name+'`: '+str(e))
            skipped.append(name)
            continue

        d = freq_decompose_image(image)
        high_raw, clipped = highfreq_to_raster(d.highfreq, bits)
        write_gray(os.path.join(folder, 'original', name+'.pgm'), image, bits)
        write_gray(os.path.join(folder, 'lowfreq', name+'.pgm'), d.lowfreq,
                   bits)
        write_gray(os.path.join(folder, 'highfreq', name+'.pgm'), high_raw,
                   bits)
        _preview(os.path.join(folder, 'previews', name+'.png'), image,
                 d.lowfreq, d.highfreq)

        energy.append({
            'image': name,
            'original': d.detail_energy,
            'lowfreq': freq_decompose_image(d.lowfreq).detail_energy,
            'highfreq': freq_decompose_image(d.highfreq).detail_energy,
            'll_energy': d.ll_energy,
            'highfreq_clipped': clipped})

        if model is not None:
            for variant, x in variant_images(image).items():
                acc = evaluate(model, x[None, None], mask[None, None],
                               setup.eval_config(), [name])
                accumulators[variant].add(acc.rows[0], name)

    if not energy:
        raise ValueError('no readable images to decompose')

    exporter = result_exporter(folder)
    exporter.replace_df(energy, 'energy')
    exporter.write_csv('energy')

    if model is not None:
        rows = []
        for variant in VARIANTS:
            row = {'variant': variant, 'images': len(accumulators[variant])}
            row.update(summary_row(accumulators[variant].summary()))
            rows.append(row)
        exporter.replace_df(rows, 'variants')
        exporter.write_csv('variants')
        _summary_table([(r['variant'], r) for r in rows], 'variant')

    print(' -- Decomposed '+str(len(energy))+' images')
    if skipped:
        printWarning(str(len(skipped))+' image(s) skipped: '+
                     ', '.join(skipped))
        return 3
    return 0



#-----------------------------------------------------------------------------
# spiral-dump, generate, complexity
#-----------------------------------------------------------------------------

def cmd_spiral_dump(setup, args):
    '''
    Offset table of the configured spiral (`offsets.txt`); with a
    checkpoint also the learned offsets of every fusion edge.
    '''

    folder = _prepare(setup, args, 'spiral-dump')
    cfg = setup.spiral_config()
    path = os.path.join(folder, 'offsets.txt')
    write_offsets(path, cfg)
    print(' -- Wrote '+str(cfg.heads * cfg.points)+' offsets to', path)

    if args.verbose:
        radius, theta = spiral_polar(cfg)
        tab = table([6, 6, 12, 12])
        tab.print_row(['H', 'K', 'RADIUS', 'ANGLE'], head=True)
        for h in range(cfg.heads):
            for k in range(cfg.points):
                tab.print_row([h + 1, k + 1, '%.4f' % radius[h, k],
                               '%.4f' % theta[h, k]])

    if args.checkpoint:
        model = restore_model(args.checkpoint)
        for level, params in model.sfs.items():
            learned = os.path.join(folder, 'offsets_level'+str(level)+'.txt')
            write_offsets(learned, model.config.spiral, params)
            print(' -- Wrote learned offsets of level '+str(level)+' to',
                  learned)
    return 0



def cmd_generate(setup, args):
    ''' Synthetic train/test rasters with one manifest per split '''

    folder = _prepare(setup, args, 'generate')
    for split in ('train', 'test'):
        images, masks, _ = load_split(setup, split)
        manifest = write_dataset(os.path.join(folder, split), images, masks,
                                 prefix=split)
        print(' -- Manifest of the '+split+' split:', manifest)
    return 0



def cmd_complexity(setup, args):
    '''
    Parameter and multiply-accumulate breakdown of the configured model,
    with the per-query offset predictor count for comparison.
    '''

    folder = _prepare(setup, args, 'complexity')
    model = NsFpn(setup.model_config(), setup.run['seed'])
    counts = count_params_flops(model, (setup.scene['height'],
                                        setup.scene['width']))

    rows = []
    for group in ('params', 'macs', 'detail'):
        for key, value in counts[group].items():
            rows.append({'quantity': group+'.'+key, 'value': int(value)})

    exporter = result_exporter(folder)
    exporter.replace_df(rows, 'complexity')
    exporter.write_csv('complexity')

    tab = table([28, 16])
    tab.print_row(['QUANTITY', 'VALUE'], head=True)
    for row in rows:
        tab.print_row([row['quantity'], row['value']])
    return 0



COMMANDS = {
    'gradcheck': cmd_gradcheck,
    'train': cmd_train,
    'eval': cmd_eval,
    'decompose': cmd_decompose,
    'spiral-dump': cmd_spiral_dump,
    'generate': cmd_generate,
    'complexity': cmd_complexity,
}
