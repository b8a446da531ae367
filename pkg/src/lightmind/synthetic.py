"""Synthetic LIGHT-style episodes generated by forward-simulating the engine.

Two signals are planted:

* ``carried`` -- at the self agent's action turns the gold candidate acts on an
  object the self agent is carrying; no distractor names such an object.
* ``utterance`` -- the partner names a topic early on; the self agent's gold
  utterance several turns later names the same topic, after the mention has
  left the text window.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actions import Verb, enumerate_feasible, preconditions, ParsedAction
from .belief import DenseBeliefGraph, hybrid_step
from .episodes import LIGHT_EMOTES, Episode, Turn
from .graph import DiscreteGraph, EntityKind, Relation
from .setting import AgentSpec, ObjectSpec, Placement, SettingRecord, parse_setting

ROOMS = [
    ("palace", "a grand hall of marble with tall windows and a golden throne"),
    ("tavern", "a smoky room full of wooden benches and loud travellers"),
    ("forest clearing", "a quiet patch of grass ringed by old oaks"),
    ("dungeon", "a damp cell block lit by a single torch"),
    ("kitchen", "a hot busy kitchen with pots hanging from hooks"),
    ("chapel", "a small stone chapel with stained glass"),
    ("market square", "a crowded square of stalls and shouting vendors"),
    ("stable", "a warm barn that smells of hay and horses"),
    ("library", "rows of dusty shelves stacked with scrolls"),
    ("armory", "racks of spears and polished armor line the walls"),
    ("harbor", "creaking docks where fishing boats are tied"),
    ("garden", "a walled garden of roses and herbs"),
]

AGENTS = [
    ("king", "I rule this land and expect obedience from all"),
    ("servant", "I serve the royal family and keep the halls clean"),
    ("knight", "I am sworn to protect the realm with my blade"),
    ("wizard", "I study the old arts in my tower"),
    ("merchant", "I trade spices and cloth from distant lands"),
    ("priest", "I tend to the souls of the village"),
    ("cook", "I feed the whole castle every day"),
    ("thief", "I take what I need from those who have too much"),
    ("guard", "I watch the gates through the night"),
    ("queen", "I care for my people and my court"),
    ("farmer", "I grow barley and raise goats"),
    ("bard", "I sing of heroes in every tavern I visit"),
]

OBJECTS = [
    ("scepter", "an ornate gold rod", ()),
    ("royal crown", "a heavy crown set with rubies", ("wearable",)),
    ("sword", "a long steel blade", ()),
    ("shield", "a round shield painted with a lion", ()),
    ("cloak", "a warm woollen cloak", ("wearable",)),
    ("silver ring", "a thin band of silver", ("wearable",)),
    ("bread", "a fresh loaf of bread", ("food",)),
    ("apple", "a crisp red apple", ("food",)),
    ("cheese", "a wedge of sharp cheese", ("food",)),
    ("wine", "a bottle of dark wine", ("drink",)),
    ("ale", "a frothy mug of ale", ("drink",)),
    ("potion", "a small vial of glowing liquid", ("drink",)),
    ("oak table", "a sturdy oak table", ("surface",)),
    ("wooden chest", "a chest bound with iron", ("container",)),
    ("basket", "a woven reed basket", ("container",)),
    ("candle", "a stub of beeswax candle", ()),
    ("old book", "a book with a cracked leather cover", ()),
    ("lantern", "a brass lantern", ()),
    ("iron key", "a heavy iron key", ()),
    ("helmet", "a dented iron helmet", ("wearable",)),
    ("leather boots", "a pair of worn leather boots", ("wearable",)),
    ("dagger", "a short curved dagger", ()),
    ("stew", "a bowl of thick stew", ("food",)),
    ("shelf", "a narrow wall shelf", ("surface",)),
]

UTTERANCES = [
    "good day to you friend",
    "what brings you here at this hour",
    "i have been waiting for someone like you",
    "this place has seen better days",
    "do not trust everything you hear",
    "the weather has been strange lately",
    "have you eaten today",
    "i am tired after the long road",
    "listen closely to what i say",
    "we should be careful around here",
    "you look troubled my friend",
    "there is much work left to do",
    "that is a fine idea",
    "i cannot agree with you on that",
    "tell me more about yourself",
    "the night is getting cold",
    "i hope the morning brings good news",
    "please forgive my rudeness",
    "how long have you lived here",
    "i was only passing through",
]

TOPICS = ["dragon", "harvest", "festival", "plague", "tournament", "wedding", "storm", "rebellion"]
TOPIC_OPENERS = ["have you heard any news about the {}", "people keep talking about the {}"]
TOPIC_REPLIES = ["i worry about the {} more than anything", "the {} is all i can think about"]


@dataclass
class SyntheticConfig:
    n_episodes: int = 100
    seed: int = 0
    task: str = "carried"            # carried | utterance
    n_objects: int = 5
    n_turns: int = 8
    n_candidates: int = 20
    valid_fraction: float = 0.2
    verbs: tuple = tuple(v.value for v in Verb)
    emotes: tuple = LIGHT_EMOTES
    topic_gap: int = 5               # turns between topic mention and reply


def _sample_setting(rng: np.random.Generator, cfg: SyntheticConfig, index: int) -> SettingRecord:
    room, room_desc = ROOMS[rng.integers(len(ROOMS))]
    a, b = rng.choice(len(AGENTS), size=2, replace=False)
    objs = rng.choice(len(OBJECTS), size=min(cfg.n_objects, len(OBJECTS)), replace=False)
    objects = [ObjectSpec(OBJECTS[i][0], OBJECTS[i][1], frozenset(OBJECTS[i][2])) for i in objs]
    placements = []
    for o in objects:
        u = rng.random()
        if "container" in o.flags or "surface" in o.flags or u < 0.35:
            holder = "room"
        elif u < 0.75:
            holder = "self_carrying"
        elif u < 0.85 and "wearable" in o.flags:
            holder = "self_wearing"
        else:
            holder = "partner_carrying"
        placements.append(Placement(o.name, holder))
    return SettingRecord(
        task_name=f"synthetic-{cfg.task}-{index}",
        setting_name=room,
        setting_description=room_desc,
        self_agent=AgentSpec(AGENTS[a][0], AGENTS[a][1]),
        partner_agent=AgentSpec(AGENTS[b][0], AGENTS[b][1]),
        objects=tuple(objects),
        placements=tuple(placements),
    )


def _allowed(action: ParsedAction, cfg: SyntheticConfig) -> bool:
    return action.verb.value in cfg.verbs


def _mentions(text: str, names: set[str]) -> bool:
    padded = f" {text} "
    return any(f" {n} " in padded for n in names)


def _action_distractors(rng, graph: DiscreteGraph, actor: int, partner: int, carried: set[int],
                        cfg: SyntheticConfig) -> tuple[list[str], list[str]]:
    """(infeasible, feasible) action strings that name no object the actor carries."""
    objects = [e.id for e in graph.of_kind(EntityKind.OBJECT)]
    others = [o for o in objects if o not in carried]
    carried_names = {graph.entity(c).name for c in carried}
    receptacles = [o for o in others if {"container", "surface"} & graph.flags_of(o)]
    infeasible, feasible = [], []
    templates = []
    for x in others:
        templates += [ParsedAction(actor, Verb.DROP, x), ParsedAction(actor, Verb.GIVE, x, partner),
                      ParsedAction(actor, Verb.WEAR, x), ParsedAction(actor, Verb.EAT, x),
                      ParsedAction(actor, Verb.DRINK, x), ParsedAction(actor, Verb.GET, x),
                      ParsedAction(actor, Verb.STEAL, x, partner), ParsedAction(actor, Verb.REMOVE, x)]
        for y in receptacles:
            if y != x:
                templates.append(ParsedAction(actor, Verb.PUT, x, y))
    templates += [ParsedAction(actor, Verb.HUG, partner), ParsedAction(actor, Verb.HIT, partner)]
    for act in templates:
        if not _allowed(act, cfg):
            continue
        text = act.render(graph)
        if _mentions(text, carried_names):
            continue
        (feasible if preconditions(act, graph) else infeasible).append(text)
    if not infeasible:
        # every object is carried: fall back to a verb aimed at the room
        infeasible.append(ParsedAction(actor, Verb.HUG, graph.room).render(graph))
    return infeasible, feasible


def _pick(rng, pool: list[str], k: int, exclude: set[str]) -> list[str]:
    pool = [p for p in dict.fromkeys(pool) if p not in exclude]
    if not pool or k <= 0:
        return []
    idx = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
    return [pool[i] for i in idx]


def _assemble(rng, gold: str, gold_kind: str, distractors: list[tuple[str, str]], n: int) -> Turn:
    seen = {gold}
    uniq = []
    for text, kind in distractors:
        if text not in seen:
            seen.add(text)
            uniq.append((text, kind))
    uniq = uniq[: n - 1]
    items = uniq + [(gold, gold_kind)]
    order = rng.permutation(len(items))
    items = [items[i] for i in order]
    gold_index = int(np.where(order == len(items) - 1)[0][0])
    return items, gold_index


def generate_episode(rng: np.random.Generator, cfg: SyntheticConfig, index: int) -> Episode:
    setting = _sample_setting(rng, cfg, index)
    graph = parse_setting(setting)
    self_name, partner_name = setting.self_agent.name, setting.partner_agent.name
    me, other = graph.id_of(self_name), graph.id_of(partner_name)
    dense = DenseBeliefGraph.zeros(graph.max_relations, 1)
    turns: list[Turn] = []
    topic = TOPICS[rng.integers(len(TOPICS))] if cfg.task == "utterance" else None
    reply_turn = 1 + cfg.topic_gap if topic else None
    speaker_is_self = False if topic else bool(rng.integers(2))
    for t in range(cfg.n_turns):
        if topic and t == 0:
            turn = Turn(partner_name, "utterance", TOPIC_OPENERS[rng.integers(len(TOPIC_OPENERS))].format(topic))
        elif speaker_is_self:
            turn = _self_turn(rng, cfg, graph, me, other, topic, t == reply_turn)
        else:
            turn = _partner_turn(rng, cfg, graph, other, partner_name)
        step = hybrid_step(graph, dense, turn, None, strict=True)
        graph = step.discrete
        turns.append(turn)
        speaker_is_self = not speaker_is_self if not (topic and t + 1 == reply_turn) else True
    split = "valid" if rng.random() < cfg.valid_fraction else "train"
    return Episode(f"syn-{cfg.task}-{cfg.seed}-{index}", setting, tuple(turns), split)


def _partner_turn(rng, cfg, graph, other, partner_name) -> Turn:
    u = rng.random()
    if u < 0.45:
        acts = sorted((a for a in enumerate_feasible(other, graph) if _allowed(a, cfg)
                       and a.verb not in (Verb.HIT, Verb.HUG)),
                      key=lambda a: a.render(graph))
        if acts:
            return Turn(partner_name, "action", acts[rng.integers(len(acts))].render(graph))
    if u < 0.8:
        return Turn(partner_name, "utterance", UTTERANCES[rng.integers(len(UTTERANCES))])
    return Turn(partner_name, "emote", cfg.emotes[rng.integers(len(cfg.emotes))])


def _self_turn(rng, cfg, graph: DiscreteGraph, me: int, other: int, topic, reply: bool) -> Turn:
    self_name = graph.entity(me).name
    n = cfg.n_candidates
    carried = set(graph.possessions(me, Relation.CARRYING))
    feasible = sorted((a for a in enumerate_feasible(me, graph)
                       if _allowed(a, cfg) and a.arg1 in carried), key=lambda a: a.render(graph))
    topic_cands = []
    if topic is not None:
        topic_cands = [tpl.format(tp) for tpl in TOPIC_REPLIES for tp in TOPICS if tp != topic]
    if reply:
        gold = TOPIC_REPLIES[rng.integers(len(TOPIC_REPLIES))].format(topic)
        d = [(s, "utterance") for s in _pick(rng, topic_cands, n // 2, {gold})]
        d += [(s, "utterance") for s in _pick(rng, UTTERANCES, n, {gold})]
        items, gi = _assemble(rng, gold, "utterance", d, n)
        return _turn(self_name, "utterance", items, gi)
    u = rng.random()
    if feasible and u < (0.6 if topic is None else 0.3):
        gold = feasible[rng.integers(len(feasible))].render(graph)
        infeasible, feas_other = _action_distractors(rng, graph, me, other, carried, cfg)
        picks = _pick(rng, infeasible, max(2, n // 4), {gold})
        picks += _pick(rng, feas_other, n // 5, {gold})
        d = [(s, "action") for s in picks]
        d += [(s, "utterance") for s in _pick(rng, UTTERANCES, n // 3, {gold})]
        d += [(s, "emote") for s in _pick(rng, list(cfg.emotes), n, {gold})]
        items, gi = _assemble(rng, gold, "action", d, n)
        return _turn(self_name, "action", items, gi)
    if u < 0.8:
        gold = UTTERANCES[rng.integers(len(UTTERANCES))]
        d = [(s, "utterance") for s in _pick(rng, UTTERANCES + topic_cands, n // 2, {gold})]
        d += [(s, "emote") for s in _pick(rng, list(cfg.emotes), n, {gold})]
        items, gi = _assemble(rng, gold, "utterance", d, n)
        return _turn(self_name, "utterance", items, gi)
    gold = cfg.emotes[rng.integers(len(cfg.emotes))]
    d = [(s, "emote") for s in _pick(rng, list(cfg.emotes), n // 2, {gold})]
    d += [(s, "utterance") for s in _pick(rng, UTTERANCES, n, {gold})]
    items, gi = _assemble(rng, gold, "emote", d, n)
    return _turn(self_name, "emote", items, gi)


def _turn(speaker: str, kind: str, items: list, gold_index: int) -> Turn:
    return Turn(speaker, kind, items[gold_index][0], tuple(t for t, _ in items), gold_index,
                tuple(k for _, k in items))


def generate_synthetic(config: SyntheticConfig | None = None, **overrides) -> list[Episode]:
    """Deterministic per seed; every gold action is feasible at its turn."""
    cfg = config or SyntheticConfig()
    if overrides:
        cfg = SyntheticConfig(**{**cfg.__dict__, **overrides})
    rng = np.random.default_rng(cfg.seed)
    return [generate_episode(rng, cfg, i) for i in range(cfg.n_episodes)]
