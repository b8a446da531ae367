"""Setting records and the rule-based parser that builds the initial graph."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .graph import (DEFAULT_MAX_ENTITIES, DEFAULT_MAX_RELATIONS, OBJECT_FLAGS, SINK_NAME,
                    DiscreteGraph, EntityKind, Relation, empty_graph)

AFFORDANCE_FLAGS = tuple(sorted(OBJECT_FLAGS - {"consumed"}))
_ARTICLES = ("a ", "an ", "the ", "some ")


class SettingError(Exception):
    pass


class DuplicateName(SettingError):
    pass


class DanglingPlacement(SettingError):
    pass


class DuplicatePlacement(DanglingPlacement):
    """An object placed more than once."""


class ParseError(SettingError):
    def __init__(self, line: int, expected: str):
        super().__init__(f"line {line}: expected {expected}")
        self.line = line
        self.expected = expected


class Holder(str, enum.Enum):
    ROOM = "room"
    SELF_CARRYING = "self_carrying"
    SELF_WEARING = "self_wearing"
    SELF_WIELDING = "self_wielding"
    PARTNER_CARRYING = "partner_carrying"
    PARTNER_WEARING = "partner_wearing"
    PARTNER_WIELDING = "partner_wielding"


_HOLDER_RELATION = {
    "carrying": Relation.CARRYING,
    "wearing": Relation.WEARING,
    "wielding": Relation.WIELDING,
}


@dataclass(frozen=True)
class AgentSpec:
    name: str
    persona: str = ""


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    description: str = ""
    flags: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "flags", frozenset(self.flags))


@dataclass(frozen=True)
class Placement:
    object_name: str
    holder: Holder

    def __post_init__(self):
        object.__setattr__(self, "holder", Holder(self.holder))


@dataclass(frozen=True)
class SettingRecord:
    task_name: str
    setting_name: str
    setting_description: str
    self_agent: AgentSpec
    partner_agent: AgentSpec
    objects: tuple = ()
    placements: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "placements", tuple(self.placements))

    def validate(self) -> None:
        names = [self.setting_name, self.self_agent.name, self.partner_agent.name]
        names += [o.name for o in self.objects]
        if self.self_agent.name == self.partner_agent.name:
            raise DuplicateName(f"self and partner are both {self.self_agent.name!r}")
        seen = set()
        for name in names:
            if not name or name != name.strip().lower():
                raise SettingError(f"names must be non-empty lowercase: {name!r}")
            if name in seen:
                raise DuplicateName(name)
            seen.add(name)
        declared = {o.name for o in self.objects}
        placed = set()
        for p in self.placements:
            if p.object_name not in declared:
                raise DanglingPlacement(f"placement of undeclared object {p.object_name!r}")
            if p.object_name in placed:
                raise DuplicatePlacement(f"object {p.object_name!r} placed twice")
            placed.add(p.object_name)

    def to_dict(self) -> dict:
        return {
            "task_name": self.task_name,
            "setting_name": self.setting_name,
            "setting_description": self.setting_description,
            "self_agent": {"name": self.self_agent.name, "persona": self.self_agent.persona},
            "partner_agent": ({"name": self.partner_agent.name, "persona": self.partner_agent.persona}
                              if self.partner_agent.persona else {"name": self.partner_agent.name}),
            "objects": [{"name": o.name, "description": o.description, "flags": sorted(o.flags)}
                        for o in self.objects],
            "placements": [{"object_name": p.object_name, "holder": p.holder.value}
                           for p in self.placements],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SettingRecord":
        partner = d["partner_agent"]
        return cls(
            task_name=d.get("task_name", ""),
            setting_name=d["setting_name"],
            setting_description=d.get("setting_description", ""),
            self_agent=AgentSpec(d["self_agent"]["name"], d["self_agent"].get("persona", "")),
            partner_agent=AgentSpec(partner["name"], partner.get("persona", "")),
            objects=tuple(ObjectSpec(o["name"], o.get("description", ""), _known_flags(o.get("flags", ())))
                          for o in d.get("objects", ())),
            placements=tuple(Placement(p["object_name"], p["holder"]) for p in d.get("placements", ())),
        )


def _known_flags(flags) -> frozenset:
    if isinstance(flags, dict):
        flags = [k for k, v in flags.items() if v]
    return frozenset(f for f in flags if f in AFFORDANCE_FLAGS)


def description_node(name: str) -> str:
    return f"desc:{name}"


def persona_node(name: str) -> str:
    return f"persona:{name}"


def parse_setting(record: SettingRecord, max_entities: int = DEFAULT_MAX_ENTITIES,
                  max_relations: int = DEFAULT_MAX_RELATIONS) -> DiscreteGraph:
    """Build the initial graph G0 from a setting record."""
    record.validate()
    g = empty_graph(max_entities, max_relations)
    g, room = g.with_entity(record.setting_name, EntityKind.ROOM, text=record.setting_description)
    agents = {}
    for role, spec in (("self", record.self_agent), ("partner", record.partner_agent)):
        g, agents[role] = g.with_entity(spec.name, EntityKind.AGENT)
    edges = [(Relation.CONTAINS, room, agents["self"]), (Relation.CONTAINS, room, agents["partner"])]
    for role, spec in (("self", record.self_agent), ("partner", record.partner_agent)):
        g, pid = g.with_entity(persona_node(spec.name), EntityKind.PERSONA, text=spec.persona)
        edges.append((Relation.HAS_PERSONA, agents[role], pid))
    objects = {}
    for o in record.objects:
        g, oid = g.with_entity(o.name, EntityKind.OBJECT, o.flags, text=o.description)
        g, did = g.with_entity(description_node(o.name), EntityKind.DESCRIPTION, text=o.description)
        objects[o.name] = oid
        edges.append((Relation.HAS_DESCRIPTION, oid, did))
    g, _ = g.with_entity(SINK_NAME, EntityKind.SINK)
    for p in record.placements:
        oid = objects[p.object_name]
        if p.holder is Holder.ROOM:
            edges.append((Relation.CONTAINS, room, oid))
        else:
            role, rel = p.holder.value.split("_")
            edges.append((_HOLDER_RELATION[rel], agents[role], oid))
    g = g.with_edges((int(r), s, d) for r, s, d in edges)
    g.check_invariants()
    return g


# -- flat-text format -----------------------------------------------------

_SCALAR_KEYS = {
    "_task_name": "task_name",
    "_setting_name": "setting_name",
    "_setting_desc": "setting_description",
    "_self_name": "self_name",
    "_self_persona": "self_persona",
    "_partner_name": "partner_name",
}
_REQUIRED = ("_task_name", "_setting_name", "_setting_desc", "_self_name", "_partner_name")
_OBJECT_RE = re.compile(r"^(?P<name>[^:\[\]]+?)\s*:\s*(?P<desc>.*?)\s*(?P<tags>(\[[^\]]*\]\s*)*)$")


def _strip_article(name: str) -> str:
    low = name.strip().lower()
    for art in _ARTICLES:
        if low.startswith(art):
            return low[len(art):].strip()
    return low


def parse_object_line(body: str, line: int = 0) -> ObjectSpec:
    m = _OBJECT_RE.match(body.strip())
    if not m or not m.group("name").strip():
        raise ParseError(line, "_object <name> : <description> [flags]")
    flags = set()
    for tag in re.findall(r"\[([^\]]*)\]", m.group("tags") or ""):
        for f in re.split(r"[,\s]+", tag.strip().lower()):
            if f in AFFORDANCE_FLAGS:
                flags.add(f)
    return ObjectSpec(_strip_article(m.group("name")), m.group("desc"), frozenset(flags))


def parse_setting_text(raw: str) -> SettingRecord:
    scalars: dict[str, str] = {}
    objects: list[ObjectSpec] = []
    placements: list[Placement] = []
    for lineno, line in enumerate(raw.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, _, value = stripped.partition(" ")
        value = value.strip()
        if key in _SCALAR_KEYS:
            if key in scalars:
                raise ParseError(lineno, f"a single {key} line")
            scalars[key] = value
        elif key == "_object":
            objects.append(parse_object_line(value, lineno))
        elif key == "_placement":
            obj, _, holder = value.rpartition(" ")
            try:
                placements.append(Placement(_strip_article(obj), Holder(holder.strip().lower())))
            except ValueError:
                raise ParseError(lineno, "_placement <object> <holder> with holder in "
                                 + "|".join(h.value for h in Holder)) from None
            if not obj.strip():
                raise ParseError(lineno, "_placement <object> <holder>")
        else:
            raise ParseError(lineno, "one of " + ", ".join(list(_SCALAR_KEYS) + ["_object", "_placement"]))
    for key in _REQUIRED:
        if key not in scalars:
            raise ParseError(len(raw.splitlines()) + 1, key)
    return SettingRecord(
        task_name=scalars["_task_name"],
        setting_name=scalars["_setting_name"].lower(),
        setting_description=scalars["_setting_desc"],
        self_agent=AgentSpec(scalars["_self_name"].lower(), scalars.get("_self_persona", "")),
        partner_agent=AgentSpec(scalars["_partner_name"].lower()),
        objects=tuple(objects),
        placements=tuple(placements),
    )


def render_setting_text(record: SettingRecord) -> str:
    lines = [
        f"_task_name {record.task_name}",
        f"_setting_name {record.setting_name}",
        f"_setting_desc {record.setting_description}",
        f"_self_name {record.self_agent.name}",
        f"_self_persona {record.self_agent.persona}",
        f"_partner_name {record.partner_agent.name}",
    ]
    for o in record.objects:
        tags = f" [{', '.join(sorted(o.flags))}]" if o.flags else ""
        lines.append(f"_object {o.name} : {o.description}{tags}")
    for p in record.placements:
        lines.append(f"_placement {p.object_name} {p.holder.value}")
    return "\n".join(lines) + "\n"
