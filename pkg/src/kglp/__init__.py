# src/kglp/__init__.py

"""kglp: feature-fusion knowledge-graph embeddings with rule augmentation and staged distillation."""

from .cli import main  # CLI entrypoint

try:
    from importlib.metadata import PackageNotFoundError, version

    try:
        __version__ = version("kglp")
    except PackageNotFoundError:
        # Source checkout without an install
        __version__ = "dev"
except ImportError:
    __version__ = "dev"

__all__ = ["main"]
