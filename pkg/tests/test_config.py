#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import pytest

from core.commons import ConfigError
from core.preprocessing.master_classes import coerce_value, format_value, \
    loadOptions, parse_value, settings
from models.presets import smoke
from RunFile import available_presets, resolve_settings
from core.preprocessing.argument_parser import parse_arguments

@pytest.mark.parametrize('text,value', [('3', 3), ('3.0', 3.0), ('1e-5', 1e-5),
                                        ('true', True), ('False', False),
                                        ('none', None), ('ns', 'ns'),
                                        ('1, 3', (1, 3)), ('0,', (0,)),
                                        (' pdf, png ', ('pdf', 'png'))])
def test_parse_value(text, value):
    parsed = parse_value(text)
    assert parsed == value
    assert type(parsed) is type(value)


def test_coerce_value_follows_default_type():
    assert coerce_value(2, 0.5, 'x') == 2.0
    assert isinstance(coerce_value(2, 0.5, 'x'), float)
    assert coerce_value(4.0, 1, 'x') == 4
    assert coerce_value(3, (1, 2), 'x') == (3,)
    assert coerce_value('', (1, 2), 'x') == ()
    assert coerce_value(None, None, 'x') is None

    with pytest.raises(ConfigError, match='integer'):
        coerce_value(2.5, 1, 'train.epochs')
    with pytest.raises(ConfigError, match='true/false'):
        coerce_value(1, True, 'x')
    with pytest.raises(ConfigError, match='number'):
        coerce_value('fast', 0.5, 'x')


def test_format_value_is_inverse_of_parse():
    for value in ((1, 3), (0,), (), None, 0.05, 1e-10, 'pixel', True, 7):
        assert parse_value(format_value(value)) == (value if value != () else '')


def test_load_options_file(tmp_path):
    path = tmp_path / 'options.txt'
    path.write_text('# comment\n\nscene.targets = 2, 4\ntrain.lr = 0.01\n'
                    'model.fpn_mode = plain\nlfp.tau_abs = 0.3\n')
    setup = loadOptions(str(path), settings(verbose=False))

    assert setup.scene['targets'] == (2, 4)
    assert setup.train['lr'] == 0.01
    assert setup.model_config().fpn_mode == 'plain'
    assert setup.model_config().tau_abs == 0.3


def test_resolved_config_reloads_identically(tmp_path):
    setup = settings(verbose=False)
    setup.apply_preset(smoke())
    setup.apply_overrides(['train.lr=0.125', 'data.seed=7'])
    path = str(tmp_path / 'resolved_config.txt')
    setup.write(path)

    back = loadOptions(path, settings(verbose=False))
    for section in setup.sections:
        assert getattr(back, section) == getattr(setup, section), section
    assert back.model_config() == setup.model_config()


@pytest.mark.parametrize('line,match', [('model.colour = red', 'unknown configuration key'),
                                        ('optics.focal = 3', 'unknown configuration section'),
                                        ('epochs = 3', 'section.key'),
                                        ('train.epochs = many', 'integer'),
                                        ('train.epochs 3', 'line 1')])
def test_bad_options_are_rejected(tmp_path, line, match):
    path = tmp_path / 'options.txt'
    path.write_text(line+'\n')
    with pytest.raises(ConfigError, match=match):
        loadOptions(str(path), settings(verbose=False))


def test_missing_options_file():
    with pytest.raises(ConfigError, match='does not exist'):
        loadOptions('no/such/options.txt', settings(verbose=False))


def test_presets_are_discovered():
    assert {'desk', 'published', 'smoke'} <= set(available_presets())


def test_precedence_of_settings_sources(tmp_path):
    path = tmp_path / 'options.txt'
    path.write_text('train.epochs = 5\ntrain.batch_size = 3\nrun.seed = 4\n')
    args = parse_arguments(['train', '--preset', 'smoke', '--config', str(path),
                            '--set', 'train.batch_size=2', '--epochs', '7',
                            '--mode', 'plain'], sorted(available_presets()))
    setup = resolve_settings(args, available_presets())

    # preset < options file < --set < dedicated flags
    assert setup.scene['height'] == 32
    assert setup.run['seed'] == 4
    assert setup.train['batch_size'] == 2
    assert setup.train['epochs'] == 7
    assert setup.model['fpn_mode'] == 'plain'


def test_invalid_model_values_fail_on_construction():
    setup = settings(verbose=False)
    setup.apply_overrides(['model.fpn_mode=pyramid'])
    with pytest.raises(ConfigError):
        setup.model_config()
