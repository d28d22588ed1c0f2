#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Named experiment presets, selected with `--preset <name>`. Every class in
this file that derives from preset_master is available by its class name.
"""

import core.preprocessing.master_classes as master

class desk(master.preset_master):

    def __init__(self):
        '''
        Desk-scale regime: 64x64 scenes, 200 training and 50 test images,
        a short Adagrad schedule that runs on a desktop CPU.
        '''

        # Initialize superclass
        master.preset_master.__init__(self)

        self.setOptions('scene', height=64, width=64)
        self.setOptions('data', train_size=200, test_size=50)
        self.setOptions('model', channels=64, fpn_mode='ns')
        self.setOptions('train', epochs=30, batch_size=8, lr=0.05)



class published(master.preset_master):

    def __init__(self):
        '''
        Published training schedule (500 epochs, batch size 16, learning
        rate 0.05). Far beyond desk scale on CPU.
        '''

        # Initialize superclass
        master.preset_master.__init__(self)

        self.setOptions('scene', height=256, width=256)
        self.setOptions('data', train_size=800, test_size=200)
        self.setOptions('model', channels=64, fpn_mode='ns')
        self.setOptions('train', epochs=500, batch_size=16, lr=0.05)



class smoke(master.preset_master):

    def __init__(self):
        '''
        Tiny model and dataset for pipeline checks; finishes in seconds.
        '''

        # Initialize superclass
        master.preset_master.__init__(self)

        self.setOptions('run', workers=1)
        self.setOptions('scene', height=32, width=32, targets=(1, 2),
                        distractors=1)
        self.setOptions('data', train_size=6, test_size=4)
        self.setOptions('model', channels=8, backbone_widths=(4, 4, 8, 8),
                        head_width=4)
        self.setOptions('spiral', heads=2, points=4)
        self.setOptions('train', epochs=2, batch_size=4)
        self.setOptions('eval', batch_size=4)
