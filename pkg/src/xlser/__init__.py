"""Cross-lingual speech emotion recognition: WAV decoding, MFCC features,
corpus manifests, speaker-independent splits, a small numpy CNN engine and
the experiment harness that ties them together."""

__version__ = "0.1.0"
