"""Worker processes bridging the difflens wire protocol to real tensor
libraries (PyTorch by default, TensorFlow when installed)."""

__version__ = "0.1.0"
