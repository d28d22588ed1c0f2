#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse

from core.nsfpn import FPN_MODES

COMMANDS = ('gradcheck', 'train', 'eval', 'decompose', 'spiral-dump',
            'generate', 'complexity')

def _common_arguments(presets):
    ''' Flags shared by every subcommand '''

    parser = argparse.ArgumentParser(add_help=False)

    parser.add_argument('--config', type=str, action="store", dest='config',
                        default=None, help="Options file with `section.key = value` lines")

    parser.add_argument('--preset', type=str, action="store", dest='preset',
                        default=None, choices=presets,
                        help="Named preset applied before the options file")

    parser.add_argument('--set', type=str, action="append", dest='overrides',
                        default=[], metavar='SECTION.KEY=VALUE',
                        help="Override a single option (repeatable)")

    parser.add_argument('--seed', type=int, action="store", dest='seed',
                        default=None, help="Seed of the run (overrides run.seed)")

    parser.add_argument('--out', type=str, action="store", dest='out',
                        default=None, help="Output directory")

    parser.add_argument('--workers', type=int, action="store", dest='workers',
                        default=None, help="Worker threads for data generation and evaluation")

    ### Verbose switch
    parser.add_argument('--verbose', dest='verbose', action='store_true',
                        help="If enabled, print per-step rows instead of progress bars")
    parser.set_defaults(verbose=False)

    return parser



def _dataset_arguments(parser, default_split):

    parser.add_argument('--manifest', type=str, action="store", dest='manifest',
                        default=None, help="Dataset manifest (`image_path mask_path` lines)")

    parser.add_argument('--split', type=str, action="store", dest='split',
                        default=default_split, choices=('train', 'test'),
                        help="Synthetic split used when no manifest is given")



def parse_arguments(argv=None, presets=()):
    """
    Function to parse arguments provided

    Parameters
    ----------
    argv : list, optional
        Arguments without the program name; sys.argv when None.
    presets : sequence of str
        Names accepted by --preset.

    Returns
    -------
    :args: Namespace with all arguments

    """

    common = _common_arguments(list(presets) or None)

    parser = argparse.ArgumentParser(description="Noise-suppression feature pyramid for infrared small targets",
                                     prefix_chars='--')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    ### Gradient verification
    p = commands.add_parser('gradcheck', parents=[common],
                            help="Check every analytic backward against finite differences")
    p.add_argument('--ops', type=str, nargs='+', dest='ops', default=None,
                   help="Subset of operations to check")

    ### Training
    p = commands.add_parser('train', parents=[common],
                            help="Train a model and log metrics per epoch")
    p.add_argument('--mode', type=str, action="store", dest='mode',
                   default=None, choices=FPN_MODES, help="Pyramid variant (overrides model.fpn_mode)")
    p.add_argument('--epochs', type=int, action="store", dest='epochs',
                   default=None, help="Number of epochs (overrides train.epochs)")

    ### Evaluation
    p = commands.add_parser('eval', parents=[common],
                            help="Evaluate a checkpoint on a dataset")
    p.add_argument('--checkpoint', type=str, action="store", dest='checkpoint',
                   required=True, help="Checkpoint written by `train`")
    _dataset_arguments(p, 'test')

    ### Frequency decomposition
    p = commands.add_parser('decompose', parents=[common],
                            help="Split images into low/high frequency parts")
    p.add_argument('--checkpoint', type=str, action="store", dest='checkpoint',
                   default=None, help="Also evaluate this checkpoint on every variant")
    _dataset_arguments(p, 'test')

    ### Spiral offsets
    p = commands.add_parser('spiral-dump', parents=[common],
                            help="Write the spiral offset table")
    p.add_argument('--checkpoint', type=str, action="store", dest='checkpoint',
                   default=None, help="Include the learned offsets of this checkpoint")

    ### Data and model size
    commands.add_parser('generate', parents=[common],
                        help="Write the synthetic train/test rasters and manifests")
    commands.add_parser('complexity', parents=[common],
                        help="Report parameter and multiply-accumulate counts")

    # Now, parse the command line arguments and store the
    # values in the `args` variable
    args, unknown = parser.parse_known_args(argv)

    if len(unknown) > 0:
        print('\nWarning: There are unknown arguments:\n', unknown,'\n')

    return args
