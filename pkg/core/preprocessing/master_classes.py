#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import os                       # Import OS to allow creation of folders
from dataclasses import asdict
from datetime import datetime   # Import Datetime to retreive current date/time

from core.commons import ConfigError, createDirectory
from core.nsfpn import NsFpnConfig
from core.scene import SceneConfig
from core.sfs import SpiralConfig
from core.training import EvalConfig, TrainConfig

# Keys of NsFpnConfig that live in the `lfp` section instead of `model`
LFP_KEYS = ('tau_quantile', 'tau_abs', 'kernel_size', 'attention_kernel',
            'sigma_init')

def default_options():
    '''
    Built-in defaults per section, taken from the configuration classes so
    that both stay in sync.
    '''

    model = asdict(NsFpnConfig())
    model.pop('spiral')
    lfp = {k: model.pop(k) for k in LFP_KEYS}

    return {
        'run': {'seed': 0, 'workers': 4, 'output': 'output',
                'export_formats': ('pdf', 'png')},
        'scene': asdict(SceneConfig()),
        'data': {'seed': 2024, 'train_size': 200, 'test_size': 50,
                 'train_manifest': '', 'test_manifest': '', 'bits': 16},
        'model': model,
        'lfp': lfp,
        'spiral': asdict(SpiralConfig()),
        'train': asdict(TrainConfig()),
        'eval': asdict(EvalConfig()),
        'gradcheck': {'step': 1e-5, 'tolerance': 1e-4,
                      'seeds': tuple(range(10))},
    }



def parse_value(text):
    '''
    Parse an option value: float, then int when integral, then bool, then
    `none`, then plain string. Comma-separated values become a tuple.
    '''

    text = text.strip()
    if ',' in text:
        return tuple(parse_value(t) for t in text.split(',') if t.strip())

    try:
        value = float(text)
        if value == int(value) and 'e' not in text.lower() and \
                '.' not in text:
            value = int(value)
        return value
    except (ValueError, OverflowError):
        pass

    if text in ['True', 'true']:
        return True
    elif text in ['False', 'false']:
        return False
    elif text in ['None', 'none']:
        return None
    return str(text)



def coerce_value(value, default, where):
    ''' Bring a parsed value to the type of the option's default '''

    if isinstance(default, tuple):
        if value == '' or value is None:
            return ()
        items = value if isinstance(value, tuple) else (value,)
        if default:
            items = tuple(coerce_value(v, default[0], where) for v in items)
        return items

    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where+' expects true/false, got `'+str(value)+'`')
        return value

    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or value != int(value):
            raise ConfigError(where+' expects an integer, got `'+
                              str(value)+'`')
        return int(value)

    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where+' expects a number, got `'+str(value)+'`')
        return float(value)

    return '' if value is None else str(value)



def format_value(value):
    ''' Inverse of parse_value for the resolved-config file '''

    if isinstance(value, tuple):
        return ', '.join(format_value(v) for v in value) + \
            (',' if len(value) == 1 else '')
    if value is None:
        return 'none'
    return str(value)



def loadOptions(file, setup):
    '''
    Load user options from the provided file

    Parameters
    ----------
    file : str
        Filename to load options from; lines read `section.key = value`.
    setup : settings
        Object containing all setup data.

    Returns
    -------
    setup
        Modified setup object.

    '''

    if not os.path.isfile(file):
        raise ConfigError('configuration file `'+str(file)+'` does not exist')

    with open(file, 'r') as options:
        for n, line in enumerate(options.readlines()):
            line_cut = line.strip()
            if not line_cut or line_cut[0] == '#':
                continue
            if '=' not in line_cut:
                raise ConfigError(file+': line '+str(n + 1)+' must read '
                                  '`section.key = value`')

            key, value = line_cut.split('=', 1)
            setup.set_value(key.strip(), value)

    return setup



class settings(object):

    def setOptions(self, category=None, **kwargs):
        '''
        Change options in the main 'options' object

        Parameters
        ----------
        category : str, optional
            Category (i.e. dictionary entry) for which to make changes.
            The default is None.
        **kwargs : <multiple arguments>
            Multiple arguments for which to make changes in the settings.

        Returns
        -------
        None.

        '''

        if category not in self.sections:
            raise ConfigError('unknown configuration section `'+
                              str(category)+'`')
        category_upd = getattr(self, category)

        for key, value in kwargs.items():
            if key not in category_upd:
                raise ConfigError('unknown configuration key `'+
                                  str(category)+'.'+str(key)+'`')

            category_upd[str(key)] = coerce_value(
                value, self.defaults[category][key], category+'.'+key)

            if self.verbose:
                print(' >> Changed "'+str(key)+'" in "'+str(category)+
                      '" to "'+str(category_upd[key])+'"')

        setattr(self, category, category_upd)

    def set_value(self, key, text):
        ''' Apply a `section.key` option given as text '''

        frags = key.split('.')
        if len(frags) != 2:
            raise ConfigError('option `'+key+'` must read `section.key`')
        self.setOptions(frags[0], **{frags[1]: parse_value(text)})

    def __init__(self, verbose=True):
        '''
        Initialize 'options' object with the built-in defaults

        Parameters
        ----------
        verbose : bool, optional
            Echo every changed option. The default is True.

        Returns
        -------
        None.

        '''

        self.verbose = verbose
        self.defaults = default_options()
        self.sections = tuple(self.defaults)
        for section, values in self.defaults.items():
            setattr(self, section, dict(values))

        # Default time/date settings
        self.time = {'datetime': datetime.now().strftime("%m-%d-%Y_%H-%M-%S")}

    def apply_preset(self, preset):
        ''' Apply the options of a preset object (see models/presets.py) '''

        for category, values in preset.setup.items():
            self.setOptions(category, **values)

    def apply_overrides(self, overrides):
        ''' Apply `section.key=value` strings '''

        for item in overrides or []:
            if '=' not in item:
                raise ConfigError('override `'+item+'` must read '
                                  '`section.key=value`')
            key, value = item.split('=', 1)
            self.set_value(key.strip(), value)

    def output_folder(self, command, out=None):
        '''
        Output directory of a command: `out` when given, otherwise
        `<run.output>/<command>_<datetime>`. The folder is created.
        '''

        folder = out if out else os.path.join(
            self.run['output'], command+'_'+self.time['datetime'])
        createDirectory(folder)
        return folder

    def write(self, path):
        ''' Write the resolved configuration (re-loadable by loadOptions) '''

        lines = []
        for section in self.sections:
            for key, value in getattr(self, section).items():
                lines.append(section+'.'+key+' = '+format_value(value)+'\n')
        with open(path, 'w') as filehandle:
            filehandle.writelines(lines)

    def spiral_config(self):
        return SpiralConfig(**self.spiral)

    def model_config(self, fpn_mode=None):
        values = dict(self.model)
        values.update(self.lfp)
        if fpn_mode is not None:
            values['fpn_mode'] = fpn_mode
        return NsFpnConfig(spiral=self.spiral_config(), **values)

    def scene_config(self):
        return SceneConfig(**self.scene)

    def train_config(self):
        return TrainConfig(**self.train)

    def eval_config(self):
        return EvalConfig(**self.eval)



class preset_master(object):

    def setOptions(self, category=None, **kwargs):
        '''
        Change options in the preset-specific 'setup' dictionary

        Parameters
        ----------
        category : str, optional
            Category (i.e. dictionary entry) for which to make changes.
            The default is None.
        **kwargs : <multiple arguments>
            Multiple arguments for which to make changes in the settings.

        Returns
        -------
        None.

        '''

        self.setup.setdefault(str(category), {}).update(kwargs)

    def __init__(self):
        '''
        Initialize the preset object

        Returns
        -------
        None.

        '''

        self.setup = {}

        self.name = type(self).__name__
