"""Template actions: parsing, preconditions, ADD/DEL effects and the action mask."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import (HOLDER_RELATIONS, AtomicOp, DiscreteGraph, EntityKind, GraphDelta, GraphError,
                    Relation, apply_delta)


class Verb(str, enum.Enum):
    GET = "get"
    DROP = "drop"
    PUT = "put"
    GIVE = "give"
    STEAL = "steal"
    WEAR = "wear"
    REMOVE = "remove"
    EAT = "eat"
    DRINK = "drink"
    HUG = "hug"
    HIT = "hit"


TWO_ARG_VERBS = frozenset({Verb.PUT, Verb.GIVE, Verb.STEAL})
AGENT_VERBS = frozenset({Verb.HUG, Verb.HIT})
VERB_PREPOSITIONS = {Verb.PUT: ("in", "on"), Verb.GIVE: ("to",), Verb.STEAL: ("from",)}
_ALL_PREPOSITIONS = frozenset({"in", "on", "to", "from", "into", "onto"})
_ARTICLES = frozenset({"a", "an", "the", "some"})
_KIND_PRIORITY = {EntityKind.OBJECT: 0, EntityKind.AGENT: 1, EntityKind.ROOM: 2}

# reason strings surfaced by the mask and the REPL
NOT_CARRYING = "not carrying"
NOT_IN_ROOM = "not in room"
NOT_AN_OBJECT = "not an object"
NOT_AN_AGENT = "not an agent"
NOT_COLOCATED = "not co-located"
SELF_TARGET = "cannot target self"
NOT_WEARABLE = "not wearable"
NOT_FOOD = "not food"
NOT_DRINK = "not drinkable"
NOT_WORN = "not wearing or wielding"
NOT_RECEPTACLE = "not a container or surface"
NOT_REACHABLE = "not reachable"
SAME_OBJECT = "cannot put an object in itself"
TARGET_NOT_CARRYING = "target not carrying"


class ActionError(Exception):
    pass


class UnknownVerb(ActionError):
    pass


class UnresolvedEntity(ActionError):
    def __init__(self, span: str):
        super().__init__(f"cannot resolve {span!r}")
        self.span = span


class ArityMismatch(ActionError):
    pass


class InfeasibleAction(ActionError):
    def __init__(self, action: "ParsedAction", reason: str):
        super().__init__(f"{action}: {reason}")
        self.action = action
        self.reason = reason


@dataclass(frozen=True)
class ParsedAction:
    actor: int
    verb: Verb
    arg1: int
    arg2: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "verb", Verb(self.verb))
        if (self.verb in TWO_ARG_VERBS) != (self.arg2 is not None):
            raise ArityMismatch(f"{self.verb.value} takes {2 if self.verb in TWO_ARG_VERBS else 1} argument(s)")

    def render(self, graph: DiscreteGraph) -> str:
        a1 = graph.entity(self.arg1).name
        if self.verb is Verb.PUT:
            y = graph.entity(self.arg2)
            prep = "in" if "container" in y.flags else "on"
            return f"put {a1} {prep} {y.name}"
        if self.verb is Verb.GIVE:
            return f"give {a1} to {graph.entity(self.arg2).name}"
        if self.verb is Verb.STEAL:
            return f"steal {a1} from {graph.entity(self.arg2).name}"
        return f"{self.verb.value} {a1}"


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.feasible


# -- parsing --------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9_']+|[^\sa-z0-9_']", text.lower())


def _registry(graph: DiscreteGraph) -> list[tuple[tuple[str, ...], int, EntityKind]]:
    out = []
    for e in graph.entities:
        if e.kind in _KIND_PRIORITY:
            out.append((tuple(e.name.split()), e.id, e.kind))
    return out


def resolve_entity(span: Sequence[str], graph: DiscreteGraph) -> int:
    """Longest registry name occurring in ``span``; ties go object > agent > room."""
    toks = [t for t in span if t not in _ARTICLES]
    if not toks:
        raise UnresolvedEntity(" ".join(span))
    best = None
    for name, eid, kind in _registry(graph):
        k = len(name)
        if k > len(toks):
            continue
        if any(tuple(toks[i:i + k]) == name for i in range(len(toks) - k + 1)):
            exact = tuple(toks) == name
            rank = (not exact, -k, _KIND_PRIORITY[kind], eid)
            if best is None or rank < best[0]:
                best = (rank, eid)
    if best is None:
        raise UnresolvedEntity(" ".join(span))
    return best[1]


def _resolves(span: Sequence[str], graph: DiscreteGraph) -> bool:
    try:
        resolve_entity(span, graph)
        return True
    except UnresolvedEntity:
        return False


def parse_action(actor: int | str, text: str, graph: DiscreteGraph) -> ParsedAction:
    if isinstance(actor, str):
        actor = graph.id_of(actor)
    toks = tokenize(text)
    if not toks:
        raise UnknownVerb("")
    try:
        verb = Verb(toks[0])
    except ValueError:
        raise UnknownVerb(toks[0]) from None
    rest = toks[1:]
    if not rest:
        raise ArityMismatch(f"{verb.value} needs an argument")
    if verb in TWO_ARG_VERBS:
        preps = VERB_PREPOSITIONS[verb]
        splits = [i for i, t in enumerate(rest) if t in preps]
        if not splits:
            raise ArityMismatch(f"{verb.value} needs '{'/'.join(preps)}' and a second argument")
        last_error = None
        # the split whose both halves resolve; prefer the one with the longest left span
        for i in reversed(splits):
            left, right = rest[:i], rest[i + 1:]
            try:
                return ParsedAction(actor, verb, resolve_entity(left, graph), resolve_entity(right, graph))
            except UnresolvedEntity as exc:
                last_error = exc
        raise last_error
    for i, t in enumerate(rest):
        if t in _ALL_PREPOSITIONS and _resolves(rest[:i], graph) and _resolves(rest[i + 1:], graph):
            raise ArityMismatch(f"{verb.value} takes one argument")
    return ParsedAction(actor, verb, resolve_entity(rest, graph))


# -- preconditions and effects --------------------------------------------

def _colocated(graph: DiscreteGraph, a: int, b: int) -> bool:
    room = graph.room
    return graph.has_edge(room, a, Relation.CONTAINS) and graph.has_edge(room, b, Relation.CONTAINS)


def preconditions(action: ParsedAction, graph: DiscreteGraph) -> Feasibility:
    """First failed condition of the verb table, or feasible."""
    v, actor, x, y = action.verb, action.actor, action.arg1, action.arg2
    C, K = Relation.CONTAINS, Relation.CARRYING
    if graph.entity(actor).kind is not EntityKind.AGENT:
        return Feasibility(False, NOT_AN_AGENT)
    if v in AGENT_VERBS:
        if graph.entity(x).kind is not EntityKind.AGENT:
            return Feasibility(False, NOT_AN_AGENT)
        if x == actor:
            return Feasibility(False, SELF_TARGET)
        if not _colocated(graph, actor, x):
            return Feasibility(False, NOT_COLOCATED)
        return Feasibility(True)
    if graph.entity(x).kind is not EntityKind.OBJECT:
        return Feasibility(False, NOT_AN_OBJECT)
    room = graph.room
    if v is Verb.GET:
        return Feasibility(True) if graph.has_edge(room, x, C) else Feasibility(False, NOT_IN_ROOM)
    if v is Verb.STEAL:
        if graph.entity(y).kind is not EntityKind.AGENT:
            return Feasibility(False, NOT_AN_AGENT)
        if y == actor:
            return Feasibility(False, SELF_TARGET)
        if not graph.has_edge(y, x, K):
            return Feasibility(False, TARGET_NOT_CARRYING)
        if not _colocated(graph, actor, y):
            return Feasibility(False, NOT_COLOCATED)
        return Feasibility(True)
    if v is Verb.REMOVE:
        if graph.has_edge(actor, x, Relation.WEARING) or graph.has_edge(actor, x, Relation.WIELDING):
            return Feasibility(True)
        return Feasibility(False, NOT_WORN)
    # every remaining verb starts from the actor carrying X
    if not graph.has_edge(actor, x, K):
        return Feasibility(False, NOT_CARRYING)
    flags = graph.flags_of(x)
    if v is Verb.DROP:
        return Feasibility(True)
    if v is Verb.WEAR:
        return Feasibility(True) if "wearable" in flags else Feasibility(False, NOT_WEARABLE)
    if v is Verb.EAT:
        return Feasibility(True) if "food" in flags else Feasibility(False, NOT_FOOD)
    if v is Verb.DRINK:
        return Feasibility(True) if "drink" in flags else Feasibility(False, NOT_DRINK)
    if v is Verb.GIVE:
        if graph.entity(y).kind is not EntityKind.AGENT:
            return Feasibility(False, NOT_AN_AGENT)
        if y == actor:
            return Feasibility(False, SELF_TARGET)
        if not _colocated(graph, actor, y):
            return Feasibility(False, NOT_COLOCATED)
        return Feasibility(True)
    if v is Verb.PUT:
        if graph.entity(y).kind is not EntityKind.OBJECT:
            return Feasibility(False, NOT_AN_OBJECT)
        if y == x:
            return Feasibility(False, SAME_OBJECT)
        if not ({"container", "surface"} & graph.flags_of(y)):
            return Feasibility(False, NOT_RECEPTACLE)
        if not (graph.has_edge(room, y, C) or graph.has_edge(actor, y, K)):
            return Feasibility(False, NOT_REACHABLE)
        return Feasibility(True)
    raise AssertionError(v)  # pragma: no cover


def _raw_effects(action: ParsedAction, graph: DiscreteGraph) -> list[AtomicOp]:
    v, actor, x, y = action.verb, action.actor, action.arg1, action.arg2
    C, K = Relation.CONTAINS, Relation.CARRYING
    add, dele = AtomicOp.add, AtomicOp.delete
    if v in AGENT_VERBS:
        return []
    if v is Verb.GET:
        return [dele(graph.room, x, C), add(actor, x, K)]
    if v is Verb.DROP:
        return [dele(actor, x, K), add(graph.room, x, C)]
    if v is Verb.PUT:
        return [dele(actor, x, K), add(y, x, C)]
    if v is Verb.GIVE:
        return [dele(actor, x, K), add(y, x, K)]
    if v is Verb.STEAL:
        return [dele(y, x, K), add(actor, x, K)]
    if v is Verb.WEAR:
        return [dele(actor, x, K), add(actor, x, Relation.WEARING)]
    if v is Verb.REMOVE:
        rel = Relation.WEARING if graph.has_edge(actor, x, Relation.WEARING) else Relation.WIELDING
        return [dele(actor, x, rel), add(actor, x, K)]
    if v in (Verb.EAT, Verb.DRINK):
        return [dele(actor, x, K), add(graph.sink, x, C)]
    raise AssertionError(v)  # pragma: no cover


def effects(action: ParsedAction, graph: DiscreteGraph) -> GraphDelta:
    feas = preconditions(action, graph)
    if not feas:
        raise InfeasibleAction(action, feas.reason)
    return GraphDelta(_raw_effects(action, graph))


def forced_effects(action: ParsedAction, graph: DiscreteGraph) -> GraphDelta:
    """Delta that realises the action's end state regardless of preconditions.

    Used by lenient replay: the object's current holder edges are deleted
    before the destination edge is added, so the result stays valid.
    """
    ops = _raw_effects(action, graph)
    if not ops:
        return GraphDelta()
    target = ops[-1]
    obj = target.dst
    out = []
    for r, s, d in sorted(graph.edges):
        if d == obj and Relation(r) in HOLDER_RELATIONS and (r, s, d) != target.edge:
            out.append(AtomicOp.delete(s, d, Relation(r)))
    if not graph.has_edge(target.src, target.dst, target.relation):
        out.append(target)
    return GraphDelta(out)


# -- enumeration and masking ----------------------------------------------

def enumerate_feasible(actor: int | str, graph: DiscreteGraph) -> frozenset:
    """All feasible actions for ``actor``, generated from the graph structure."""
    if isinstance(actor, str):
        actor = graph.id_of(actor)
    if graph.entity(actor).kind is not EntityKind.AGENT:
        return frozenset()
    room = graph.room
    C, K = Relation.CONTAINS, Relation.CARRYING
    out = set()
    in_room = set(graph.contents(room))
    objects = {e.id for e in graph.of_kind(EntityKind.OBJECT)}
    others = [a.id for a in graph.of_kind(EntityKind.AGENT)
              if a.id != actor and actor in in_room and a.id in in_room]
    for b in others:
        out.add(ParsedAction(actor, Verb.HUG, b))
        out.add(ParsedAction(actor, Verb.HIT, b))
        for x in graph.possessions(b, K):
            if x in objects:
                out.add(ParsedAction(actor, Verb.STEAL, x, b))
    for x in in_room & objects:
        out.add(ParsedAction(actor, Verb.GET, x))
    carried = [x for x in graph.possessions(actor, K) if x in objects]
    receptacles = [y for y in (in_room & objects) | set(carried)
                   if {"container", "surface"} & graph.flags_of(y)]
    for x in carried:
        flags = graph.flags_of(x)
        out.add(ParsedAction(actor, Verb.DROP, x))
        if "wearable" in flags:
            out.add(ParsedAction(actor, Verb.WEAR, x))
        if "food" in flags:
            out.add(ParsedAction(actor, Verb.EAT, x))
        if "drink" in flags:
            out.add(ParsedAction(actor, Verb.DRINK, x))
        for b in others:
            out.add(ParsedAction(actor, Verb.GIVE, x, b))
        for y in receptacles:
            if y != x:
                out.add(ParsedAction(actor, Verb.PUT, x, y))
    for rel in (Relation.WEARING, Relation.WIELDING):
        for x in graph.possessions(actor, rel):
            if x in objects:
                out.add(ParsedAction(actor, Verb.REMOVE, x))
    return frozenset(out)


def all_candidate_actions(actor: int, graph: DiscreteGraph) -> Iterable[ParsedAction]:
    """Every verb x entity combination, feasible or not."""
    ids = [e.id for e in graph.entities]
    for v in Verb:
        if v in TWO_ARG_VERBS:
            for x in ids:
                for y in ids:
                    yield ParsedAction(actor, v, x, y)
        else:
            for x in ids:
                yield ParsedAction(actor, v, x)


def brute_force_feasible(actor: int, graph: DiscreteGraph) -> frozenset:
    """Oracle: attempt effects + strict apply for every combination."""
    out = set()
    for a in all_candidate_actions(actor, graph):
        try:
            apply_delta(graph, effects(a, graph), strict=True)
        except (ActionError, GraphError):
            continue
        out.add(a)
    return frozenset(out)


def looks_like_action(text: str) -> bool:
    toks = tokenize(text)
    return bool(toks) and toks[0] in Verb._value2member_map_


@dataclass(frozen=True)
class ActionMask:
    feasible: tuple
    reasons: tuple
    actions: tuple
    feasible_set: frozenset

    def __len__(self) -> int:
        return len(self.feasible)

    def __getitem__(self, i: int) -> bool:
        return self.feasible[i]

    @classmethod
    def all_true(cls, n: int) -> "ActionMask":
        return cls((True,) * n, (None,) * n, (None,) * n, frozenset())


def mask_candidates(candidates: Sequence[str], actor: int | str, graph: DiscreteGraph,
                    strict: bool = True, kinds: Sequence[str] | None = None) -> ActionMask:
    """Feasibility of each candidate; utterances and emotes always pass.

    ``kinds`` gives each candidate's kind when known; otherwise a candidate
    whose first word is a verb is treated as an action.
    """
    if isinstance(actor, str):
        actor = graph.id_of(actor)
    feasible, reasons, actions = [], [], []
    for i, text in enumerate(candidates):
        is_action = (kinds[i] == "action") if kinds is not None else looks_like_action(text)
        if not is_action:
            feasible.append(True)
            reasons.append(None)
            actions.append(None)
            continue
        try:
            act = parse_action(actor, text, graph)
        except ActionError as exc:
            feasible.append(not strict)
            reasons.append(f"unparseable: {exc}")
            actions.append(None)
            continue
        feas = preconditions(act, graph)
        feasible.append(feas.feasible)
        reasons.append(feas.reason)
        actions.append(act)
    return ActionMask(tuple(feasible), tuple(reasons), tuple(actions), enumerate_feasible(actor, graph))
