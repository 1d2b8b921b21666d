"""Batch toolkit for analysing ultrasound vocalisation corpora.

Stages: corpus filtering, pitch-contour feature extraction,
subject-independent fold construction, class-weighted one-vs-one SVM
training with nested cost selection, imbalance-aware evaluation, and
spectrogram export for external model training.
"""

__version__ = "0.1.0"
