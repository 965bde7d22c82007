"""Knowledge-graph storage: vocabularies, packed fact sets, entity classes, partitioning.

Facts are (head, relation, tail) over dense integer ids. Hot paths key every
fact as a single packed int64, so membership tests and set algebra run on
plain hash sets of integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DataError, InfeasibleRatioError, ParseError

# Fixed-width bit packing: ids must stay below 2**21 (~2M entities/relations).
# Packed order is (relation, head, tail), so ascending packed id equals the
# deterministic (r, h, t) enumeration order used by the miner.
FIELD_BITS = 21
FIELD_MASK = (1 << FIELD_BITS) - 1
MAX_ID = FIELD_MASK


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def pack(head: int, relation: int, tail: int) -> int:
    return (relation << (2 * FIELD_BITS)) | (head << FIELD_BITS) | tail


def unpack(packed: int) -> Triple:
    return Triple(
        (packed >> FIELD_BITS) & FIELD_MASK,
        packed >> (2 * FIELD_BITS),
        packed & FIELD_MASK,
    )


def pack_array(heads: np.ndarray, relations: np.ndarray, tails: np.ndarray) -> np.ndarray:
    return (
        (relations.astype(np.int64) << (2 * FIELD_BITS))
        | (heads.astype(np.int64) << FIELD_BITS)
        | tails.astype(np.int64)
    )


def unpack_array(packed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = packed.astype(np.int64)
    return (p >> FIELD_BITS) & FIELD_MASK, p >> (2 * FIELD_BITS), p & FIELD_MASK


class FactSet:
    """A duplicate-free collection of facts keyed by packed id."""

    __slots__ = ("_packed",)

    def __init__(self, packed: Iterable[int] = ()):
        self._packed = set(packed)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, int]]) -> "FactSet":
        return cls(pack(h, r, t) for h, r, t in triples)

    def __len__(self) -> int:
        return len(self._packed)

    def __iter__(self) -> Iterator[int]:
        return iter(self._packed)

    def __contains__(self, item) -> bool:
        if isinstance(item, tuple):
            item = pack(*item)
        return item in self._packed

    def __eq__(self, other) -> bool:
        return isinstance(other, FactSet) and self._packed == other._packed

    def add(self, packed: int) -> None:
        self._packed.add(packed)

    def update(self, items: Iterable[int]) -> None:
        self._packed.update(int(p) for p in items)

    def triples(self) -> Iterator[Triple]:
        for p in self._packed:
            yield unpack(p)

    def to_array(self) -> np.ndarray:
        """All packed ids, ascending (deterministic iteration order)."""
        return np.fromiter(self._packed, dtype=np.int64, count=len(self._packed)) if self._packed else np.empty(0, np.int64)

    def sorted_array(self) -> np.ndarray:
        arr = self.to_array()
        arr.sort()
        return arr

    def copy(self) -> "FactSet":
        return FactSet(self._packed)

    def union(self, other: "FactSet") -> "FactSet":
        return FactSet(self._packed | other._packed)

    def intersection(self, other: "FactSet") -> "FactSet":
        return FactSet(self._packed & other._packed)

    def difference(self, other: "FactSet") -> "FactSet":
        return FactSet(self._packed - other._packed)

    def issubset(self, other: "FactSet") -> bool:
        return self._packed <= other._packed

    def isdisjoint(self, other: "FactSet") -> bool:
        return self._packed.isdisjoint(other._packed)


class Vocabulary:
    """Bijective name <-> dense-id maps for entities and relations."""

    def __init__(self):
        self._entity_ids: dict[str, int] = {}
        self._relation_ids: dict[str, int] = {}
        self._entity_names: list[str] = []
        self._relation_names: list[str] = []

    @property
    def n_entities(self) -> int:
        return len(self._entity_names)

    @property
    def n_relations(self) -> int:
        return len(self._relation_names)

    def entity_id(self, name: str, create: bool = False) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            if not create:
                raise DataError(f"unknown entity {name!r}")
            eid = len(self._entity_names)
            if eid > MAX_ID:
                raise DataError("entity vocabulary exceeds packing capacity")
            self._entity_ids[name] = eid
            self._entity_names.append(name)
        return eid

    def relation_id(self, name: str, create: bool = False) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            if not create:
                raise DataError(f"unknown relation {name!r}")
            rid = len(self._relation_names)
            if rid > MAX_ID:
                raise DataError("relation vocabulary exceeds packing capacity")
            self._relation_ids[name] = rid
            self._relation_names.append(name)
        return rid

    def entity_name(self, eid: int) -> str:
        return self._entity_names[eid]

    def relation_name(self, rid: int) -> str:
        return self._relation_names[rid]

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    @classmethod
    def synthetic(cls, n_entities: int, n_relations: int) -> "Vocabulary":
        """Placeholder names e0.., r0.. for generated graphs."""
        vocab = cls()
        for i in range(n_entities):
            vocab.entity_id(f"e{i}", create=True)
        for i in range(n_relations):
            vocab.relation_id(f"r{i}", create=True)
        return vocab


NO_CLASS = -1


class ClassDict:
    """Entity-id -> class-id, with entities allowed to carry no class at all."""

    def __init__(self, class_of: np.ndarray, class_names: list[str], skipped: int = 0):
        self.class_of = class_of.astype(np.int32)
        self.class_names = class_names
        self.skipped = skipped  # lines whose entity was not in the vocabulary

    @classmethod
    def empty(cls, n_entities: int) -> "ClassDict":
        return cls(np.full(n_entities, NO_CLASS, np.int32), [])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def cls(self, entity_id: int) -> int:
        if 0 <= entity_id < len(self.class_of):
            return int(self.class_of[entity_id])
        return NO_CLASS

    def classless_mask(self, n_entities: int) -> np.ndarray:
        out = np.ones(n_entities, bool)
        n = min(n_entities, len(self.class_of))
        out[:n] = self.class_of[:n] == NO_CLASS
        return out


@dataclass
class PartitionConfig:
    rho: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise DataError(f"rho must be in (0, 1], got {self.rho}")


def load_triples(path: str, vocab: Vocabulary) -> FactSet:
    """Read a tab-separated ``head\\trelation\\ttail`` file into a FactSet.

    Unseen names extend the vocabulary in file order; duplicate lines collapse.
    """
    facts = FactSet()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
            h = vocab.entity_id(parts[0], create=True)
            r = vocab.relation_id(parts[1], create=True)
            t = vocab.entity_id(parts[2], create=True)
            facts.add(pack(h, r, t))
    return facts


def load_class_dict(path: str, vocab: Vocabulary) -> ClassDict:
    """Read a tab-separated ``entity\\tclass`` file.

    Entities not listed stay classless; repeated entities keep their first
    class; unknown entity names are skipped and counted, not fatal.
    """
    class_ids: dict[str, int] = {}
    class_names: list[str] = []
    class_of = np.full(vocab.n_entities, NO_CLASS, np.int32)
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 2 tab-separated fields, got {len(parts)}")
            ent, cls_name = parts
            if not vocab.has_entity(ent):
                skipped += 1
                continue
            eid = vocab.entity_id(ent)
            if class_of[eid] != NO_CLASS:
                continue  # first occurrence wins
            cid = class_ids.get(cls_name)
            if cid is None:
                cid = len(class_names)
                class_ids[cls_name] = cid
                class_names.append(cls_name)
            class_of[eid] = cid
    return ClassDict(class_of, class_names, skipped)


def scaffold_mask(heads: np.ndarray, relations: np.ndarray, tails: np.ndarray) -> np.ndarray:
    """Mark the first fact introducing each entity or relation.

    Any fact containing a not-yet-seen component both enters the scaffold and
    marks all its components seen, so "first occurrence" is exactly the
    scaffold membership test.
    """
    n = len(heads)
    idx = np.arange(n, dtype=np.int64)
    first_e = np.full(max(int(heads.max(initial=0)), int(tails.max(initial=0))) + 1, n, np.int64)
    np.minimum.at(first_e, heads, idx)
    np.minimum.at(first_e, tails, idx)
    first_r = np.full(int(relations.max(initial=0)) + 1, n, np.int64)
    np.minimum.at(first_r, relations, idx)
    return (first_e[heads] == idx) | (first_e[tails] == idx) | (first_r[relations] == idx)


def partition(total: FactSet, cfg: PartitionConfig) -> tuple[FactSet, FactSet]:
    """Split a graph into a known part of exactly floor(|total| * rho) facts
    and an unexplored remainder, keeping every entity and relation covered by
    the known part.

    The scaffold pass walks facts in ascending packed order; the non-scaffold
    remainder is shuffled by the seed before slicing.
    """
    if len(total) == 0:
        raise DataError("cannot partition an empty fact set")
    arr = total.sorted_array()
    heads, relations, tails = unpack_array(arr)
    mask = scaffold_mask(heads, relations, tails)
    n_total = len(arr)
    # tiny epsilon guards float artifacts like 0.7*10 -> 6.999...
    n_known = int(math.floor(n_total * cfg.rho + 1e-9))
    n_scaffold = int(mask.sum())
    if n_known < n_scaffold:
        raise InfeasibleRatioError(cfg.rho, n_scaffold / n_total)

    remainder = arr[~mask]
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(remainder))
    shuffled = remainder[perm]
    n_un = n_total - n_known
    unexplored = FactSet(shuffled[:n_un].tolist())
    known = FactSet(shuffled[n_un:].tolist())
    known.update(arr[mask].tolist())
    return known, unexplored
