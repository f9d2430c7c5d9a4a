"""Replicated lock-step execution with rollback recovery and an overhead model."""

__version__ = "0.1.0"

from .encoding import EncodingError, digest_tree, encode_tree, fnv1a64

__all__ = [
    "EncodingError",
    "digest_tree",
    "encode_tree",
    "fnv1a64",
    "__version__",
]
