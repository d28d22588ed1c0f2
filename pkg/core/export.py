#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Result frames (CSV and Excel) and model checkpoints.
"""

import os                       # Import OS to allow creation of folders
import json
import numpy as np              # Import Numpy for computations
import pandas as pd             # Import Pandas to store data in frames

from .commons import CheckpointError
from .nsfpn import NsFpn, NsFpnConfig

# Bumped whenever a CSV gains, loses or renames a column
SCHEMA_VERSION = 1

CHECKPOINT_FORMAT = 'nsfpn-checkpoint'
CHECKPOINT_VERSION = 1

class result_exporter(object):
    '''
    Collects the result frames of a run under a key each, and writes them
    to `<key>.csv` and a shared Excel workbook.
    '''

    def __init__(self, folder):

        self.folder = folder
        self.frames = dict()

    def replace_df(self, df, key):

        self.frames[key] = pd.DataFrame(df).reset_index(drop=True)

    def write_csv(self, key, filename=None):
        '''
        Write one frame with a leading `schema_version` column; returns the
        file path.
        '''

        df = self.frames[key].copy()
        df.insert(0, 'schema_version', SCHEMA_VERSION)
        path = os.path.join(self.folder, (filename or key)+'.csv')
        df.to_csv(path, index=False)
        return path

    def save_to_excel(self, output_file):

        # Create a Pandas Excel writer using XlsxWriter as the engine
        with pd.ExcelWriter(output_file, engine='xlsxwriter') as writer:
            for key, df in self.frames.items():
                df.to_excel(writer, sheet_name=str(key)[:31], index=False)



def read_csv(path):
    '''
    Read a result CSV and drop its schema column; files written by a newer
    schema are rejected.
    '''

    df = pd.read_csv(path)
    if 'schema_version' not in df.columns:
        raise ValueError(path+': missing `schema_version` column')
    version = df['schema_version'].iloc[0] if len(df) else SCHEMA_VERSION
    if int(version) > SCHEMA_VERSION:
        raise ValueError(path+': schema version '+str(version)+' is newer '
                         'than the supported version '+str(SCHEMA_VERSION))
    return df.drop(columns='schema_version')



def save_checkpoint(path, model):
    '''
    Store the model parameters and its configuration in a numpy archive.
    '''

    arrays = model.state_dict()
    arrays['__format__'] = np.array(CHECKPOINT_FORMAT)
    arrays['__version__'] = np.array(CHECKPOINT_VERSION)
    arrays['__config__'] = np.array(json.dumps(model.config.to_dict(),
                                               sort_keys=True))

    # Write through a handle so numpy does not append a suffix
    with open(path, 'wb') as filehandle:
        np.savez(filehandle, **arrays)



def load_checkpoint(path):
    '''
    Read a checkpoint.

    Returns
    -------
    config : NsFpnConfig
        Architecture the checkpoint was trained with.
    arrays : dict
        Parameter name -> array.

    '''

    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise CheckpointError(str(path)+': not a readable checkpoint ('+
                              str(e)+')')

    with archive:
        keys = set(archive.files)
        if '__format__' not in keys or \
                str(archive['__format__']) != CHECKPOINT_FORMAT:
            raise CheckpointError(str(path)+': not an '+CHECKPOINT_FORMAT+
                                  ' archive')
        version = int(archive['__version__'])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(str(path)+': checkpoint version '+
                                  str(version)+' is not supported')

        config = NsFpnConfig.from_dict(json.loads(str(archive['__config__'])))
        arrays = {k: archive[k] for k in keys if not k.startswith('__')}

    return config, arrays



def restore_model(path, config=None):
    '''
    Build a model and load a checkpoint into it. With `config`, the model is
    built from that configuration and the checkpoint must fit it.
    '''

    stored, arrays = load_checkpoint(path)
    model = NsFpn(stored if config is None else config)
    model.load_state(arrays)
    return model
