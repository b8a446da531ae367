import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lightmind.actions import (NOT_CARRYING, ActionMask, ArityMismatch, InfeasibleAction, ParsedAction,
                               UnknownVerb, UnresolvedEntity, Verb, all_candidate_actions, brute_force_feasible,
                               effects, enumerate_feasible, mask_candidates, parse_action, preconditions)
from lightmind.graph import AtomicOp, GraphDelta, OpKind, Relation, apply_delta
from lightmind.setting import AgentSpec, Holder, ObjectSpec, Placement, SettingRecord, parse_setting
from helpers import random_graph

C, K = Relation.CONTAINS, Relation.CARRYING


def palace(extra_objects=(), extra_placements=()):
    rec = SettingRecord(
        "t", "palace", "a hall", AgentSpec("king", "I rule"), AgentSpec("servant"),
        (ObjectSpec("scepter", "a gold rod"), ObjectSpec("royal crown", "a crown", {"wearable"}),
         ObjectSpec("oak table", "a table", {"surface"}), ObjectSpec("bread", "a loaf", {"food"}),
         ObjectSpec("wine", "red wine", {"drink"})) + tuple(extra_objects),
        (Placement("scepter", Holder.SELF_CARRYING), Placement("royal crown", Holder.ROOM),
         Placement("oak table", Holder.ROOM), Placement("bread", Holder.SELF_CARRYING),
         Placement("wine", Holder.PARTNER_CARRYING)) + tuple(extra_placements))
    return parse_setting(rec)


def test_parse_give():
    g = palace()
    a = parse_action("king", "give scepter to servant", g)
    assert a == ParsedAction(g.id_of("king"), Verb.GIVE, g.id_of("scepter"), g.id_of("servant"))


def test_parse_errors():
    g = palace()
    with pytest.raises(UnknownVerb):
        parse_action("king", "dance", g)
    with pytest.raises(UnresolvedEntity) as exc:
        parse_action("king", "get unicorn", g)
    assert exc.value.span == "unicorn"
    with pytest.raises(ArityMismatch):
        parse_action("king", "give scepter", g)
    with pytest.raises(ArityMismatch):
        parse_action("king", "drop scepter on oak table", g)


def test_longest_match_multiword():
    g = palace()
    a = parse_action("servant", "put the royal crown on the oak table", g)
    assert (a.arg1, a.arg2) == (g.id_of("royal crown"), g.id_of("oak table"))


def test_longest_match_prefers_longer_name():
    g = palace(extra_objects=[ObjectSpec("crown", "a plain crown")], extra_placements=[Placement("crown", Holder.ROOM)])
    assert parse_action("king", "get royal crown", g).arg1 == g.id_of("royal crown")
    assert parse_action("king", "get crown", g).arg1 == g.id_of("crown")


def test_drop_when_not_carrying_gives_reason():
    g = palace()
    f = preconditions(parse_action("king", "drop royal crown", g), g)
    assert not f.feasible and f.reason == NOT_CARRYING
    with pytest.raises(InfeasibleAction):
        effects(parse_action("king", "drop royal crown", g), g)


def test_give_crown_not_carried_infeasible():
    g = palace()
    assert not preconditions(parse_action("king", "give royal crown to servant", g), g)


def test_hug_partner_feasible_and_no_effect():
    g = palace()
    a = parse_action("king", "hug servant", g)
    assert preconditions(a, g).feasible
    assert effects(a, g) == GraphDelta()
    assert not preconditions(parse_action("king", "hug king", g), g).feasible


def test_give_effect_ops():
    g = palace()
    k, s, x = g.id_of("king"), g.id_of("servant"), g.id_of("scepter")
    d = effects(parse_action("king", "give scepter to servant", g), g)
    assert d.ops == (AtomicOp.delete(k, x, K), AtomicOp.add(s, x, K))


def test_eat_moves_to_sink_and_blocks_get():
    g = palace()
    k, b = g.id_of("king"), g.id_of("bread")
    d = effects(parse_action("king", "eat bread", g), g)
    assert d.ops == (AtomicOp.delete(k, b, K), AtomicOp.add(g.sink, b, C))
    after = apply_delta(g, d)
    assert "consumed" in after.flags_of(b)
    assert not preconditions(ParsedAction(k, Verb.GET, b), after)
    assert all(b not in (a.arg1, a.arg2) for a in enumerate_feasible(k, after))


def test_verb_table_effects():
    g = palace()
    k = g.id_of("king")
    room = g.room
    cases = {
        "get royal crown": [AtomicOp.delete(room, g.id_of("royal crown"), C), AtomicOp.add(k, g.id_of("royal crown"), K)],
        "drop scepter": [AtomicOp.delete(k, g.id_of("scepter"), K), AtomicOp.add(room, g.id_of("scepter"), C)],
        "put scepter on oak table": [AtomicOp.delete(k, g.id_of("scepter"), K),
                                     AtomicOp.add(g.id_of("oak table"), g.id_of("scepter"), C)],
        "steal wine from servant": [AtomicOp.delete(g.id_of("servant"), g.id_of("wine"), K),
                                    AtomicOp.add(k, g.id_of("wine"), K)],
    }
    for text, ops in cases.items():
        assert list(effects(parse_action("king", text, g), g).ops) == ops, text
    worn = apply_delta(g, effects(parse_action("king", "get royal crown", g), g))
    worn = apply_delta(worn, effects(parse_action("king", "wear royal crown", worn), worn))
    assert worn.has_edge(k, worn.id_of("royal crown"), Relation.WEARING)
    back = apply_delta(worn, effects(parse_action("king", "remove royal crown", worn), worn))
    assert back.has_edge(k, back.id_of("royal crown"), K)


def test_enumerate_on_palace():
    g = palace()
    rendered = {a.render(g) for a in enumerate_feasible("king", g)}
    assert {"give scepter to servant", "drop scepter", "eat bread", "put scepter on oak table",
            "steal wine from servant", "get royal crown", "hug servant", "hit servant"} <= rendered
    assert "give royal crown to servant" not in rendered


def test_enumerate_with_nothing_around():
    rec = SettingRecord("t", "cell", "dark", AgentSpec("king"), AgentSpec("servant"))
    g = parse_setting(rec)
    assert {a.render(g) for a in enumerate_feasible("king", g)} == {"hug servant", "hit servant"}


def test_mask_one_infeasible_among_twenty():
    g = palace()
    cands = [f"utterance number {i}" for i in range(17)] + ["drop scepter", "eat bread", "drop royal crown"]
    m = mask_candidates(cands, "king", g)
    assert m.feasible.count(False) == 1 and not m.feasible[-1]
    assert m.reasons[-1] == NOT_CARRYING
    assert m.feasible_set == enumerate_feasible("king", g)


def test_mask_utterances_all_true_and_unparseable_modes():
    g = palace()
    assert all(mask_candidates(["hello there", "how are you"], "king", g).feasible)
    cands = ["get unicorn"]
    assert mask_candidates(cands, "king", g, strict=True).feasible == (False,)
    assert mask_candidates(cands, "king", g, strict=False).feasible == (True,)
    assert ActionMask.all_true(3).feasible == (True, True, True)


def test_render_parse_round_trip_for_all_feasible():
    g = palace()
    for actor in ("king", "servant"):
        for a in enumerate_feasible(actor, g):
            assert parse_action(actor, a.render(g), g) == a


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mask_soundness_property(seed):
    g, agents = random_graph(seed)
    for actor in agents:
        assert enumerate_feasible(actor, g) == brute_force_feasible(actor, g)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_effects_apply_when_feasible(seed):
    g, agents = random_graph(seed)
    for a in all_candidate_actions(agents[0], g):
        if preconditions(a, g):
            out = apply_delta(g, effects(a, g), strict=True)
            assert not out.violations()
            for op in effects(a, g):
                assert out.has_edge(op.src, op.dst, op.relation) == (op.kind is OpKind.ADD)
