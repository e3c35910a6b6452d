"""External detection/classification backend: wraps serialized neural
models (TorchScript) behind the line-delimited JSON wire protocol, with
deterministic stub models for protocol testing."""

__version__ = "0.1.0"
