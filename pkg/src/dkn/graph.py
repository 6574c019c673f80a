"""In-memory knowledge graph: triples, one-hop subgraphs, entity contexts.

Entities and relations are arbitrary strings mapped to dense positive
integers (id 0 is reserved for "no entity").  Triples keep their direction,
but neighborhoods treat edges as undirected: the context of an entity is
the set of entities it shares any triple with, in either direction.
"""

import os
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, DataError, UnknownIdError
from .tables import EmbeddingTable


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class EntityContext(NamedTuple):
    entity: int
    neighbors: frozenset


class Vocabulary:
    """Bidirectional string <-> dense id map; id 0 is the reserved null slot."""

    def __init__(self, names: Iterable[str], null_name: str = ""):
        self.names = [null_name] + sorted(set(names))
        self.ids = {name: idx for idx, name in enumerate(self.names)}
        del self.ids[null_name]

    def __len__(self):
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.ids

    def id_of(self, name: str) -> int:
        try:
            return self.ids[name]
        except KeyError:
            raise UnknownIdError(f"unknown vocabulary entry '{name}'") from None

    def name_of(self, idx: int) -> str:
        if not 1 <= idx < len(self.names):
            raise UnknownIdError(f"unknown vocabulary id {idx}")
        return self.names[idx]

    def save_tsv(self, path: str) -> None:
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for idx, name in enumerate(self.names):
                if idx == 0:
                    continue
                fh.write(f"{name}\t{idx}\n")
        os.replace(tmp, path)

    @classmethod
    def load_tsv(cls, path: str) -> "Vocabulary":
        names = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected `name<TAB>id`")
                names.append(parts[0])
        vocab = cls(names)
        # sanity: the stored ids must match the deterministic assignment
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                name, idx = line.split("\t")
                if vocab.id_of(name) != int(idx):
                    raise DataError(f"{path}:{lineno}: id {idx} for '{name}' does not match "
                                    f"the sorted assignment {vocab.id_of(name)}")
        return vocab


class KnowledgeGraph:
    """Immutable triple store with adjacency indexed in both directions."""

    def __init__(self, entity_vocab: Vocabulary, relation_vocab: Vocabulary,
                 triples: Iterable[Triple], weights: dict | None = None):
        self.entity_vocab = entity_vocab
        self.relation_vocab = relation_vocab
        self.triples = frozenset(triples)
        self.weights = dict(weights or {})
        self.entities = frozenset(e for t in self.triples for e in (t.head, t.tail))
        self._adjacency = {}
        for t in self.triples:
            self._adjacency.setdefault(t.head, []).append(t)
            if t.tail != t.head:
                self._adjacency.setdefault(t.tail, []).append(t)

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    def incident(self, entity: int) -> list:
        """All triples touching `entity`, as head or as tail."""
        self._check_entity(entity)
        return list(self._adjacency.get(entity, []))

    def _check_entity(self, entity: int) -> None:
        if entity not in self.entities:
            raise UnknownIdError(f"entity id {entity} is not in the graph")


def load_triples(path: str, min_confidence: float | None = None) -> KnowledgeGraph:
    """Parse a `head<TAB>relation<TAB>tail[<TAB>confidence]` TSV into a graph.

    Lines starting with `#` are comments.  When `min_confidence` is given,
    weighted triples below it are dropped; unweighted triples always pass.
    """
    raw = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise DataError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields, "
                                f"got {len(parts)}")
            weight = None
            if len(parts) == 4:
                try:
                    weight = float(parts[3])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad confidence '{parts[3]}'") from None
            raw.append((parts[0], parts[1], parts[2], weight))

    if min_confidence is not None:
        raw = [r for r in raw if r[3] is None or r[3] >= min_confidence]

    entity_vocab = Vocabulary([r[0] for r in raw] + [r[2] for r in raw])
    relation_vocab = Vocabulary([r[1] for r in raw])
    triples = []
    weights = {}
    for head, rel, tail, weight in raw:
        t = Triple(entity_vocab.id_of(head), relation_vocab.id_of(rel), entity_vocab.id_of(tail))
        triples.append(t)
        if weight is not None:
            weights[t] = weight
    return KnowledgeGraph(entity_vocab, relation_vocab, triples, weights)


def save_triples(graph: KnowledgeGraph, path: str) -> None:
    """Write the graph back to triple TSV form, sorted for reproducibility."""
    lines = []
    for t in sorted(graph.triples):
        fields = [graph.entity_vocab.name_of(t.head),
                  graph.relation_vocab.name_of(t.relation),
                  graph.entity_vocab.name_of(t.tail)]
        if t in graph.weights:
            fields.append(repr(graph.weights[t]))
        lines.append("\t".join(fields))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    os.replace(tmp, path)


def expand_subgraph(seeds: Iterable[int], graph: KnowledgeGraph) -> KnowledgeGraph:
    """Grow `seeds` by one hop and keep every triple internal to the result.

    The returned graph shares the original vocabularies, so entity ids are
    stable across the expansion.
    """
    seeds = set(seeds)
    for e in seeds:
        graph._check_entity(e)
    keep = set(seeds)
    for e in seeds:
        for t in graph.incident(e):
            keep.add(t.head)
            keep.add(t.tail)
    triples = [t for t in graph.triples if t.head in keep and t.tail in keep]
    weights = {t: w for t, w in graph.weights.items() if t.head in keep and t.tail in keep}
    return KnowledgeGraph(graph.entity_vocab, graph.relation_vocab, triples, weights)


def context_of(entity: int, graph: KnowledgeGraph) -> EntityContext:
    """The set of entities adjacent to `entity`, ignoring edge direction."""
    graph._check_entity(entity)
    neighbors = set()
    for t in graph.incident(entity):
        if t.head == entity:
            neighbors.add(t.tail)
        if t.tail == entity:
            neighbors.add(t.head)
    # the entity itself lands in `neighbors` only via a genuine self-loop triple
    return EntityContext(entity, frozenset(neighbors))


def context_embedding(entity: int, entity_table: EmbeddingTable,
                      graph: KnowledgeGraph) -> np.ndarray:
    """Average of the neighbor entity vectors; zeros when the context is empty."""
    ctx = context_of(entity, graph)
    if not ctx.neighbors:
        return np.zeros(entity_table.dim)
    acc = np.zeros(entity_table.dim)
    for n in sorted(ctx.neighbors):
        acc += entity_table.row(n)
    return acc / len(ctx.neighbors)


def build_context_table(graph: KnowledgeGraph, entity_table: EmbeddingTable) -> EmbeddingTable:
    """Context embedding for every graph entity, in a table shaped like `entity_table`."""
    if len(entity_table) <= (max(graph.entities) if graph.entities else 0):
        raise ConfigError(f"entity table has {len(entity_table)} rows but the graph "
                          f"contains entity id {max(graph.entities)}")
    out = np.zeros_like(entity_table.vectors)
    for e in graph.entities:
        out[e] = context_embedding(e, entity_table, graph)
    return EmbeddingTable(out)
