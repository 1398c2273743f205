"""Export pooled vision-backbone embeddings to the OCCF binary format."""

from .export import ExportError, ExportSpec, export, write_occf

__version__ = "0.1.0"
