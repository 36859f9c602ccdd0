"""Singing-language identification from phoneme posteriorgrams.

A CTC-trained convolutional-recurrent acoustic model turns acoustic
features into per-frame phoneme probabilities; a recurrent classifier
(or a statistics-pooling variant) turns those into language scores.
Song verdicts average segment scores.
"""

__version__ = "0.1.0"
