#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""

Noise-suppression feature pyramid for infrared small-target segmentation,
at desk scale: gradient verification, training, evaluation, frequency
decomposition and spiral-offset inspection.

Usage:  python RunFile.py <command> [--preset NAME] [--config FILE]
                          [--set section.key=value ...] [--seed N] [--out DIR]
______________________________________________________________________________
"""

# Load general packages
import sys
from inspect import getmembers, isclass # To get list of all available presets
import importlib

# Load main classes and methods
from core.commands import COMMANDS
from core.preprocessing.master_classes import loadOptions, preset_master, \
    settings
from core.preprocessing.argument_parser import parse_arguments

def available_presets():
    ''' Preset classes in models/presets.py, by class name '''

    presets = importlib.import_module("models.presets", package=None)
    return {name: method for name, method in getmembers(presets, isclass)
            if issubclass(method, preset_master) and method is not preset_master}



def resolve_settings(args, presets):
    '''
    Defaults < preset < options file < --set overrides < dedicated flags
    '''

    setup = settings()

    if args.preset:
        print('-- Apply preset `'+args.preset+'`')
        setup.apply_preset(presets[args.preset]())
    if args.config:
        print('-- Load options from `'+args.config+'`')
        loadOptions(args.config, setup)
    setup.apply_overrides(args.overrides)

    if args.seed is not None:
        setup.setOptions('run', seed=args.seed)
    if args.workers is not None:
        setup.setOptions('run', workers=args.workers)
        setup.setOptions('eval', workers=args.workers)
    if getattr(args, 'mode', None):
        setup.setOptions('model', fpn_mode=args.mode)
    if getattr(args, 'epochs', None) is not None:
        setup.setOptions('train', epochs=args.epochs)

    return setup



def main(argv=None):
    '''
    Run one command. Returns the exit code: 0 on success, 1 on an error, 2
    on invalid arguments, 3 when decompose skipped unreadable images.
    '''

    presets = available_presets()
    try:
        args = parse_arguments(argv, sorted(presets))
    except SystemExit as e:
        return e.code

    print('Run using arguments:')
    for key,val in vars(args).items():
        print(' - `'+str(key)+'`: '+str(val))

    try:
        setup = resolve_settings(args, presets)

        print('\n++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++\n' +
              'COMMAND `'+args.command+'` STARTED AT \n'+setup.time['datetime'] +
              '\n++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++\n')

        code = COMMANDS[args.command](setup, args)

    # Library contract violations (shape, config, raster, checkpoint), I/O
    # errors and non-finite values end the run with status 1
    except (ValueError, FloatingPointError, OSError) as e:
        print('ERROR: '+str(e))
        return 1

    print('\n++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++\n' +
          'COMMAND `'+args.command+'` FINISHED WITH EXIT CODE '+str(code) +
          '\n++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++++\n')

    return code



if __name__ == '__main__':
    sys.exit(main())
