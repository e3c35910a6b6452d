"""signpipe: sign-transcription pipeline and evaluation harness for
bounding-box-annotated tablet corpora."""

__version__ = "0.1.0"
