"""Progressive knowledge-graph completion: train, mine, verify, repeat."""

from .kg import ClassDict, FactSet, PartitionConfig, Triple, Vocabulary, load_class_dict, load_triples, pack, partition, unpack
from .models import EmbeddingModel, FAMILIES

__all__ = [
    "ClassDict",
    "EmbeddingModel",
    "FAMILIES",
    "FactSet",
    "PartitionConfig",
    "Triple",
    "Vocabulary",
    "load_class_dict",
    "load_triples",
    "pack",
    "partition",
    "unpack",
]
