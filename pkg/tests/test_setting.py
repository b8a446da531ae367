import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmind.graph import EntityKind, Relation
from lightmind.setting import (AgentSpec, DanglingPlacement, DuplicateName, DuplicatePlacement, Holder,
                               ObjectSpec, ParseError, Placement, SettingRecord, description_node,
                               parse_object_line, parse_setting, parse_setting_text, persona_node,
                               render_setting_text)
from helpers import random_setting

FIX = Path(__file__).parent / "fixtures"


def palace_record(**kw):
    base = dict(task_name="t", setting_name="palace", setting_description="a hall",
                self_agent=AgentSpec("king", "I rule"), partner_agent=AgentSpec("servant"),
                objects=(ObjectSpec("scepter", "a gold rod"), ObjectSpec("crown", "a crown", {"wearable"})),
                placements=(Placement("scepter", Holder.SELF_CARRYING), Placement("crown", Holder.ROOM)))
    base.update(kw)
    return SettingRecord(**base)


def test_palace_graph_matches_hand_built_edges():
    g = parse_setting(palace_record())
    edges = set(g.named_edges())
    expected = {
        ("carrying", "king", "scepter"), ("contains", "palace", "crown"),
        ("contains", "palace", "king"), ("contains", "palace", "servant"),
        ("has_persona", "king", persona_node("king")), ("has_persona", "servant", persona_node("servant")),
        ("has_description", "scepter", description_node("scepter")),
        ("has_description", "crown", description_node("crown")),
    }
    assert edges == expected
    assert g.entity("palace").kind is EntityKind.ROOM
    assert g.entity(persona_node("king")).text == "I rule"


def test_zero_objects():
    g = parse_setting(palace_record(objects=(), placements=()))
    kinds = sorted(e.kind.value for e in g.entities)
    assert kinds == ["agent", "agent", "persona", "persona", "room", "sink"]


def test_duplicate_placement_rejected():
    rec = palace_record(placements=(Placement("crown", Holder.ROOM), Placement("crown", Holder.SELF_WEARING)))
    with pytest.raises(DanglingPlacement):
        parse_setting(rec)
    with pytest.raises(DuplicatePlacement):
        parse_setting(rec)


def test_dangling_placement_and_duplicate_names():
    with pytest.raises(DanglingPlacement):
        parse_setting(palace_record(placements=(Placement("sword", Holder.ROOM),)))
    with pytest.raises(DuplicateName):
        parse_setting(palace_record(partner_agent=AgentSpec("king")))
    with pytest.raises(DuplicateName):
        parse_setting(palace_record(objects=(ObjectSpec("king"),), placements=()))


def test_golden_flat_text_record():
    rec = parse_setting_text((FIX / "palace.setting").read_text())
    expected = SettingRecord.from_dict(json.loads((FIX / "palace.expected.json").read_text()))
    assert rec == expected
    assert rec.to_dict() == SettingRecord.from_dict(rec.to_dict()).to_dict()


def test_missing_setting_name_line():
    lines = [l for l in (FIX / "palace.setting").read_text().splitlines() if not l.startswith("_setting_name")]
    with pytest.raises(ParseError) as exc:
        parse_setting_text("\n".join(lines))
    assert "_setting_name" in str(exc.value)


def test_unknown_key_rejected_with_line():
    with pytest.raises(ParseError) as exc:
        parse_setting_text("_task_name t\n_weather rainy\n")
    assert exc.value.line == 2


def test_object_line_unknown_tag_gives_no_flags():
    obj = parse_object_line("a scepter : an ornate gold rod [wieldable]")
    assert obj.name == "scepter" and obj.description == "an ornate gold rod"
    assert obj.flags == frozenset()
    assert parse_object_line("mug of ale : frothy [drink, container]").flags == {"drink", "container"}


def test_bad_placement_holder():
    with pytest.raises(ParseError):
        parse_setting_text((FIX / "palace.setting").read_text() + "_placement scepter under_the_bed\n")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_node_count_and_render_round_trip(seed):
    rec = random_setting(np.random.default_rng(seed))
    g = parse_setting(rec)
    assert g.n == 1 + 2 + 2 + 2 * len(rec.objects) + 1
    assert not g.violations()
    assert parse_setting(rec) == g  # deterministic
    assert parse_setting_text(render_setting_text(rec)) == rec
    placed = sum(1 for r, s, d in g.edges if r in (Relation.CARRYING, Relation.WEARING, Relation.WIELDING)
                 or (r == Relation.CONTAINS and g.entities[d].kind is EntityKind.OBJECT))
    assert placed == len(rec.placements)
