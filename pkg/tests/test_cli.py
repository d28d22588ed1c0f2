#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import os
import glob
import numpy as np
import pandas as pd
import pytest

import RunFile
import RunPlots
from core.export import read_csv
from core.raster import load_dataset, quantize, write_dataset
from core.sfs import read_offsets

@pytest.fixture(scope='module')
def trained(tmp_path_factory):
    ''' One-epoch smoke runs of the full and the plain pyramid '''

    root = tmp_path_factory.mktemp('runs')
    folders = {}
    for name, mode in (('ns', 'ns'), ('ns_again', 'ns'), ('plain', 'plain')):
        folders[name] = str(root / name)
        code = RunFile.main(['train', '--preset', 'smoke', '--epochs', '1',
                             '--mode', mode, '--seed', '5',
                             '--out', folders[name]])
        assert code == 0
    return folders


def _last_row(folder, split):
    df = read_csv(os.path.join(folder, 'metrics.csv'))
    return df[(df['split'] == split) & (df['epoch'] == df['epoch'].max())].iloc[0]


def test_train_outputs(trained):
    folder = trained['ns']
    for name in ('metrics.csv', 'timing.csv', 'checkpoint.npz', 'metrics.xlsx',
                 'resolved_config.txt'):
        assert os.path.isfile(os.path.join(folder, name)), name

    df = read_csv(os.path.join(folder, 'metrics.csv'))
    assert list(df['split']) == ['train', 'test']
    assert 'seconds' not in df.columns
    assert list(read_csv(os.path.join(folder, 'timing.csv')).columns) == \
        ['epoch', 'seconds']


def test_train_is_deterministic(trained):
    pd.testing.assert_frame_equal(
        read_csv(os.path.join(trained['ns'], 'metrics.csv')),
        read_csv(os.path.join(trained['ns_again'], 'metrics.csv')))


def test_modes_share_the_log_schema(trained):
    ns = read_csv(os.path.join(trained['ns'], 'metrics.csv'))
    plain = read_csv(os.path.join(trained['plain'], 'metrics.csv'))
    assert list(ns.columns) == list(plain.columns)
    assert set(plain['mode']) == {'plain'}


def test_eval_reproduces_training_log(trained, smoke_args, tmp_path):
    folder = trained['ns']
    code = RunFile.main(smoke_args('eval', 'eval',
                                   '--config', os.path.join(folder, 'resolved_config.txt'),
                                   '--checkpoint', os.path.join(folder, 'checkpoint.npz'),
                                   '--split', 'train'))
    assert code == 0

    summary = read_csv(str(tmp_path / 'eval' / 'summary.csv')).iloc[0]
    logged = _last_row(folder, 'train')
    for key in ('iou', 'pd', 'fa_e6'):
        assert abs(summary[key] - logged[key]) <= 1e-6, key
    assert summary['images'] == 6

    per_image = read_csv(str(tmp_path / 'eval' / 'per_image.csv'))
    assert len(per_image) == 6


def test_eval_on_empty_manifest_fails(trained, smoke_args, tmp_path, capsys):
    manifest = tmp_path / 'manifest.txt'
    manifest.write_text('')
    code = RunFile.main(smoke_args('eval', 'eval', '--manifest', str(manifest),
                                   '--checkpoint', os.path.join(trained['ns'],
                                                                'checkpoint.npz')))
    assert code == 1
    assert 'ERROR:' in capsys.readouterr().out


def test_eval_rejects_mismatching_checkpoint(trained, smoke_args, capsys):
    code = RunFile.main(smoke_args('eval', 'eval', '--set', 'model.fpn_mode=plain',
                                   '--checkpoint', os.path.join(trained['ns'],
                                                                'checkpoint.npz')))
    assert code == 1
    assert 'does not match' in capsys.readouterr().out


def test_decompose_synthetic_split(smoke_args, tmp_path):
    assert RunFile.main(smoke_args('decompose', 'dec')) == 0

    folder = tmp_path / 'dec'
    energy = read_csv(str(folder / 'energy.csv'))
    assert len(energy) == 4
    for sub in ('original', 'lowfreq', 'highfreq'):
        assert len(glob.glob(str(folder / sub / '*.pgm'))) == 4
    assert len(glob.glob(str(folder / 'previews' / '*.png'))) == 4


def test_decompose_skips_unreadable_images(smoke_args, tmp_path, rng):
    images = quantize(rng.uniform(size=(2, 1, 8, 8)))
    masks = np.zeros((2, 1, 8, 8))
    manifest = write_dataset(str(tmp_path / 'set'), images, masks, prefix='img')
    with open(str(tmp_path / 'set' / 'img_0001.pgm'), 'wb') as filehandle:
        filehandle.write(b'P5\n8 8\n65535\n\x00')

    code = RunFile.main(smoke_args('decompose', 'dec', '--manifest', manifest))
    assert code == 3
    energy = read_csv(str(tmp_path / 'dec' / 'energy.csv'))
    assert list(energy['image']) == ['img_0000']


def test_decompose_with_checkpoint(trained, smoke_args, tmp_path):
    code = RunFile.main(smoke_args('decompose', 'dec', '--checkpoint',
                                   os.path.join(trained['ns'], 'checkpoint.npz')))
    assert code == 0
    variants = read_csv(str(tmp_path / 'dec' / 'variants.csv'))
    assert list(variants['variant']) == ['original', 'lowfreq', 'highfreq']
    assert (variants['images'] == 4).all()


def test_spiral_dump(trained, smoke_args, tmp_path):
    code = RunFile.main(smoke_args('spiral-dump', 'spiral', '--checkpoint',
                                   os.path.join(trained['ns'], 'checkpoint.npz')))
    assert code == 0

    folder = tmp_path / 'spiral'
    assert len((folder / 'offsets.txt').read_text().splitlines()) == 2 * 4
    assert read_offsets(str(folder / 'offsets.txt')).shape == (2, 4, 2)
    learned = glob.glob(str(folder / 'offsets_level*.txt'))
    assert learned
    for path in learned:
        assert read_offsets(path).shape == (2, 4, 2)


def test_generate_writes_both_splits(smoke_args, tmp_path):
    assert RunFile.main(smoke_args('generate', 'gen')) == 0
    train = load_dataset(str(tmp_path / 'gen' / 'train' / 'manifest.txt'))
    test = load_dataset(str(tmp_path / 'gen' / 'test' / 'manifest.txt'))
    assert train[0].shape == (6, 1, 32, 32)
    assert test[0].shape == (4, 1, 32, 32)
    assert train[2][0] == 'train_0000'


def test_complexity(smoke_args, tmp_path):
    assert RunFile.main(smoke_args('complexity', 'size')) == 0
    df = read_csv(str(tmp_path / 'size' / 'complexity.csv'))
    values = dict(zip(df['quantity'], df['value']))
    assert values['params.total'] == values['params.lfp'] + \
        values['params.sfs'] + values['params.rest']
    assert values['params.sfs'] > 0


@pytest.mark.parametrize('argv', [[], ['train', '--mode', 'pyramid'],
                                  ['train', '--preset', 'huge'],
                                  ['eval'], ['train', '--epochs', 'ten']])
def test_invalid_arguments(argv):
    assert RunFile.main(argv) == 2


def test_bad_override_is_an_error(smoke_args, capsys):
    assert RunFile.main(smoke_args('complexity', 'size', '--set',
                                   'model.depth=3')) == 1
    assert 'unknown configuration key' in capsys.readouterr().out


def test_run_plots(trained, tmp_path):
    out = str(tmp_path / 'summary')
    code = RunPlots.main([trained['ns'], trained['plain'], '--out', out])
    assert code in (0, 1)

    ablation = read_csv(os.path.join(out, 'ablation.csv'))
    assert sorted(ablation['mode']) == ['ns', 'plain']
    for name in ('training_curves.png', 'ablation.png'):
        assert os.path.isfile(os.path.join(out, name)), name


def test_trend_checks():
    ablation = pd.DataFrame({'iou': [0.5, 0.51], 'fa_e6': [10.0, 20.0]},
                            index=['ns', 'plain'])
    variants = pd.DataFrame({'fa_e6': [30.0, 10.0]}, index=['lowfreq', 'original'])
    checks = dict(RunPlots.check_trends(ablation, variants))

    assert checks['median Fa: ns <= plain']
    assert checks['median IoU: ns >= plain - '+str(RunPlots.IOU_MARGIN)]
    assert not checks['median Fa: lowfreq <= original']
    assert RunPlots.check_trends(pd.DataFrame(), pd.DataFrame()) == []
