"""Discrete mental-state graph and the ADD/DEL delta algebra.

A graph is an immutable value: a tuple of entities plus a frozen set of typed
edges ``(relation, src, dst)``.  Every update returns a new graph.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MAX_ENTITIES = 64
DEFAULT_MAX_RELATIONS = 8
SNAPSHOT_VERSION = 1
SINK_NAME = "__sink__"


class Relation(enum.IntEnum):
    CONTAINS = 0
    CARRYING = 1
    WEARING = 2
    WIELDING = 3
    HAS_DESCRIPTION = 4
    HAS_PERSONA = 5
    # slots 6 and 7 are reserved; R stays 8

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Relation":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown relation {label!r}") from None


HOLDER_RELATIONS = (Relation.CONTAINS, Relation.CARRYING, Relation.WEARING, Relation.WIELDING)
POSSESSION_RELATIONS = (Relation.CARRYING, Relation.WEARING, Relation.WIELDING)


class EntityKind(str, enum.Enum):
    AGENT = "agent"
    OBJECT = "object"
    ROOM = "room"
    DESCRIPTION = "description"
    PERSONA = "persona"
    SINK = "sink"


OBJECT_FLAGS = frozenset({"wearable", "food", "drink", "container", "surface", "consumed"})


class GraphError(Exception):
    pass


class InapplicableOp(GraphError):
    def __init__(self, op: "AtomicOp", reason: str):
        super().__init__(f"{op}: {reason}")
        self.op = op
        self.reason = reason


class InvariantViolation(GraphError):
    def __init__(self, name: str, detail: str = ""):
        super().__init__(f"{name}: {detail}" if detail else name)
        self.name = name
        self.detail = detail


class MalformedSnapshot(GraphError):
    pass


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    kind: EntityKind
    flags: frozenset = frozenset()
    text: str = ""

    def key(self) -> tuple:
        return (self.kind.value, self.name)


class OpKind(str, enum.Enum):
    ADD = "ADD"
    DEL = "DEL"


@dataclass(frozen=True)
class AtomicOp:
    kind: OpKind
    src: int
    dst: int
    relation: Relation

    @classmethod
    def add(cls, src: int, dst: int, relation: Relation) -> "AtomicOp":
        return cls(OpKind.ADD, src, dst, Relation(relation))

    @classmethod
    def delete(cls, src: int, dst: int, relation: Relation) -> "AtomicOp":
        return cls(OpKind.DEL, src, dst, Relation(relation))

    def inverse(self) -> "AtomicOp":
        kind = OpKind.DEL if self.kind is OpKind.ADD else OpKind.ADD
        return AtomicOp(kind, self.src, self.dst, self.relation)

    @property
    def edge(self) -> tuple:
        return (int(self.relation), self.src, self.dst)

    def __str__(self) -> str:
        return f"{self.kind.value}({self.src}, {self.dst}, {self.relation.label})"


@dataclass(frozen=True)
class GraphDelta:
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def __add__(self, other: "GraphDelta") -> "GraphDelta":
        return GraphDelta(self.ops + tuple(other.ops))


def invert_delta(delta: GraphDelta | Sequence[AtomicOp]) -> GraphDelta:
    ops = delta.ops if isinstance(delta, GraphDelta) else tuple(delta)
    return GraphDelta(tuple(op.inverse() for op in reversed(ops)))


@dataclass(frozen=True, eq=False)
class DiscreteGraph:
    """Boolean typed adjacency over a registry of entities.

    Equality is structural: two graphs are equal when they hold the same
    entities (by kind, name, flags, text) and the same named edges, whatever
    the entity ids.
    """

    entities: tuple = ()
    edges: frozenset = frozenset()
    max_entities: int = DEFAULT_MAX_ENTITIES
    max_relations: int = DEFAULT_MAX_RELATIONS
    _by_name: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "edges", frozenset((int(r), s, d) for r, s, d in self.edges))
        if len(self.entities) > self.max_entities:
            raise InvariantViolation("ENTITY-CAP", f"{len(self.entities)} > {self.max_entities}")
        for i, ent in enumerate(self.entities):
            if ent.id != i:
                raise InvariantViolation("ENTITY-ID", f"entity {ent.name!r} has id {ent.id}, expected {i}")
        object.__setattr__(self, "_by_name", {e.name: e.id for e in self.entities})

    # -- construction -------------------------------------------------
    def with_entity(self, name: str, kind: EntityKind | str, flags: Iterable[str] = (),
                    text: str = "") -> tuple["DiscreteGraph", int]:
        kind = EntityKind(kind)
        if name in self._by_name:
            raise InvariantViolation("NAME-UNIQUENESS", f"duplicate entity name {name!r}")
        flags = frozenset(flags)
        unknown = flags - OBJECT_FLAGS
        if unknown:
            raise ValueError(f"unknown flags {sorted(unknown)}")
        ent = Entity(len(self.entities), name, kind, flags, text)
        g = DiscreteGraph(self.entities + (ent,), self.edges, self.max_entities, self.max_relations)
        return g, ent.id

    def with_edges(self, edges: Iterable[tuple]) -> "DiscreteGraph":
        return DiscreteGraph(self.entities, self.edges | frozenset(edges),
                             self.max_entities, self.max_relations)

    # -- queries ------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.entities)

    def __len__(self) -> int:
        return len(self.entities)

    def entity(self, ref: int | str) -> Entity:
        if isinstance(ref, str):
            return self.entities[self._by_name[ref]]
        return self.entities[ref]

    def id_of(self, name: str) -> int:
        return self._by_name[name]

    def has_name(self, name: str) -> bool:
        return name in self._by_name

    def has_edge(self, src: int, dst: int, relation: Relation) -> bool:
        return (int(relation), src, dst) in self.edges

    def of_kind(self, kind: EntityKind | str) -> list[Entity]:
        kind = EntityKind(kind)
        return [e for e in self.entities if e.kind is kind]

    @property
    def room(self) -> int:
        rooms = self.of_kind(EntityKind.ROOM)
        if len(rooms) != 1:
            raise InvariantViolation("SINGLE-ROOM", f"{len(rooms)} rooms")
        return rooms[0].id

    @property
    def sink(self) -> int:
        sinks = self.of_kind(EntityKind.SINK)
        if len(sinks) != 1:
            raise InvariantViolation("SINGLE-SINK", f"{len(sinks)} sinks")
        return sinks[0].id

    def holders(self, obj: int) -> list[tuple[Relation, int]]:
        return sorted((Relation(r), s) for r, s, d in self.edges
                      if d == obj and r in _HOLDER_INTS)

    def holder(self, obj: int) -> tuple[Relation, int] | None:
        h = self.holders(obj)
        return h[0] if h else None

    def possessions(self, agent: int, relation: Relation = Relation.CARRYING) -> list[int]:
        r = int(relation)
        return sorted(d for rr, s, d in self.edges if rr == r and s == agent)

    def contents(self, holder: int) -> list[int]:
        r = int(Relation.CONTAINS)
        return sorted(d for rr, s, d in self.edges if rr == r and s == holder)

    def is_consumed(self, obj: int) -> bool:
        sinks = self.of_kind(EntityKind.SINK)
        return bool(sinks) and self.has_edge(sinks[0].id, obj, Relation.CONTAINS)

    def flags_of(self, ref: int | str) -> frozenset:
        ent = self.entity(ref)
        if self.is_consumed(ent.id):
            return ent.flags | {"consumed"}
        return ent.flags

    def adjacency(self, n: int | None = None, r: int | None = None) -> np.ndarray:
        """Boolean tensor indexed ``[relation][src][dst]``."""
        n = self.n if n is None else n
        r = self.max_relations if r is None else r
        adj = np.zeros((r, n, n), dtype=bool)
        for rel, s, d in self.edges:
            if rel < r and s < n and d < n:
                adj[rel, s, d] = True
        return adj

    def named_edges(self) -> list[tuple[str, str, str]]:
        return sorted((Relation(r).label, self.entities[s].name, self.entities[d].name)
                      for r, s, d in self.edges)

    # -- invariants ---------------------------------------------------
    def violations(self) -> list[InvariantViolation]:
        out = []
        kinds = [e.kind for e in self.entities]
        if kinds.count(EntityKind.ROOM) > 1:
            out.append(InvariantViolation("SINGLE-ROOM", "more than one room"))
        if kinds.count(EntityKind.SINK) > 1:
            out.append(InvariantViolation("SINGLE-SINK", "more than one sink"))
        seen = set()
        for e in self.entities:
            if e.key() in seen:
                out.append(InvariantViolation("NAME-UNIQUENESS", e.name))
            seen.add(e.key())
        n = self.n
        in_holder: dict[int, int] = {}
        possession: dict[tuple, int] = {}
        sink_ids = {e.id for e in self.entities if e.kind is EntityKind.SINK}
        for r, s, d in self.edges:
            if not (0 <= r < self.max_relations and 0 <= s < n and 0 <= d < n):
                out.append(InvariantViolation("EDGE-RANGE", str((r, s, d))))
                continue
            if r in _HOLDER_INTS and self.entities[d].kind is EntityKind.OBJECT:
                in_holder[d] = in_holder.get(d, 0) + 1
            if r in _POSSESSION_INTS:
                possession[(s, d)] = possession.get((s, d), 0) + 1
                if self.entities[d].kind is EntityKind.ROOM:
                    out.append(InvariantViolation("ROOM-SANITY", f"room {self.entities[d].name!r} is held"))
        for obj, count in sorted(in_holder.items()):
            if count > 1:
                out.append(InvariantViolation("HOLDER-UNIQUENESS", self.entities[obj].name))
        for (s, d), count in sorted(possession.items()):
            if count > 1:
                out.append(InvariantViolation("EXCLUSIVITY", f"{self.entities[s].name}/{self.entities[d].name}"))
        for sink in sink_ids:
            for r, s, d in self.edges:
                if s == sink and r == int(Relation.CONTAINS):
                    # consumed objects: the sink must be the only holder
                    if in_holder.get(d, 0) != 1:
                        out.append(InvariantViolation("CONSUMED", self.entities[d].name))
                elif s == sink or (d == sink and r in _HOLDER_INTS):
                    out.append(InvariantViolation("CONSUMED", f"unexpected sink edge {(r, s, d)}"))
        return out

    def check_invariants(self) -> None:
        v = self.violations()
        if v:
            raise v[0]

    # -- structural equality ------------------------------------------
    def canonical(self) -> tuple:
        ents = tuple(sorted((e.kind.value, e.name, tuple(sorted(e.flags)), e.text) for e in self.entities))
        return ents, tuple(self.named_edges())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteGraph):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())


_HOLDER_INTS = frozenset(int(r) for r in HOLDER_RELATIONS)
_POSSESSION_INTS = frozenset(int(r) for r in POSSESSION_RELATIONS)


def empty_graph(max_entities: int = DEFAULT_MAX_ENTITIES,
                max_relations: int = DEFAULT_MAX_RELATIONS) -> DiscreteGraph:
    return DiscreteGraph((), frozenset(), max_entities, max_relations)


def apply_delta(graph: DiscreteGraph, delta: GraphDelta | Sequence[AtomicOp],
                strict: bool = True, check: bool = True) -> DiscreteGraph:
    """Apply ops in order and return the new graph; ``graph`` is untouched.

    In lenient mode an ADD of a present edge or a DEL of an absent edge is a
    no-op instead of an ``InapplicableOp``.
    """
    ops = delta.ops if isinstance(delta, GraphDelta) else tuple(delta)
    if not ops:
        return graph
    edges = set(graph.edges)
    n = graph.n
    for op in ops:
        if not (0 <= op.src < n and 0 <= op.dst < n):
            raise InapplicableOp(op, "unknown entity")
        if int(op.relation) >= graph.max_relations:
            raise InapplicableOp(op, "relation out of range")
        e = op.edge
        if op.kind is OpKind.ADD:
            if e in edges:
                if strict:
                    raise InapplicableOp(op, "edge already present")
                continue
            edges.add(e)
        else:
            if e not in edges:
                if strict:
                    raise InapplicableOp(op, "edge absent")
                continue
            edges.remove(e)
    out = DiscreteGraph(graph.entities, frozenset(edges), graph.max_entities, graph.max_relations)
    if check:
        out.check_invariants()
    return out


# -- snapshot / restore ---------------------------------------------------

def snapshot(graph: DiscreteGraph) -> bytes:
    """Canonical UTF-8 JSON; equal graphs give identical bytes."""
    ents = sorted(graph.entities, key=Entity.key)
    doc = {
        "version": SNAPSHOT_VERSION,
        "max_entities": graph.max_entities,
        "max_relations": graph.max_relations,
        "entities": [_entity_doc(e) for e in ents],
        "edges": [list(e) for e in graph.named_edges()],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _entity_doc(e: Entity) -> dict:
    doc = {"name": e.name, "kind": e.kind.value, "flags": sorted(e.flags)}
    if e.text:
        doc["text"] = e.text
    return doc


def restore(data: bytes | str) -> DiscreteGraph:
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedSnapshot(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != SNAPSHOT_VERSION:
        raise MalformedSnapshot("missing or unsupported version")
    try:
        g = empty_graph(int(doc.get("max_entities", DEFAULT_MAX_ENTITIES)),
                        int(doc.get("max_relations", DEFAULT_MAX_RELATIONS)))
        for ed in doc["entities"]:
            g, _ = g.with_entity(ed["name"], ed["kind"], ed.get("flags", ()), ed.get("text", ""))
        edges = []
        for rel, src, dst in doc["edges"]:
            edges.append((int(Relation.from_label(rel)), g.id_of(src), g.id_of(dst)))
        g = g.with_edges(edges)
    except (KeyError, TypeError, ValueError, InvariantViolation) as exc:
        raise MalformedSnapshot(f"bad document: {exc}") from exc
    return g
