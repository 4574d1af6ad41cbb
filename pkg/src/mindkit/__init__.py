"""Toolkit for unsupervised at-home EEG studies.

Modules:
    streamkit  streaming per-channel signal quality and line-noise checks
    session    study schedule, questionnaires, and the session state machine
    datastore  recording container, hybrid encryption, upload queue
    features   Welch band powers, dominant frequency, normalization, R^2 maps
    decoder    MAP ridge decoding under a learned Gaussian prior
    simkit     deterministic synthetic EEG subjects and corpora
    cli        operator commands tying the pipeline together
"""

__version__ = "0.1.0"
