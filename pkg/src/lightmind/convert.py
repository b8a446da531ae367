"""Convert LIGHT-release style dialogue records to the episode JSONL schema.

Expected input: one JSON object per line (or a JSON list) shaped like the
public LIGHT dialogue dump::

    {"setting": {"name", "description", ...},
     "agents": [{"name", "persona"}, {"name", "persona"}],
     "character": [speaker per turn], "speech": [...], "emote": [... or null],
     "action": [... or null], "room_objects": [[...]], "all_descriptions": {obj: text},
     "carrying": [[...], [...]], "wearing": [[...], [...]], "wielding": [[...], [...]],
     "split": optional}

Per-agent possession lists give the initial placements (first entry is the
self agent). Affordance flags are absent from the release; objects default to
no flags except that worn objects are marked wearable. Candidate lists are the
gold text plus distractors sampled from other records of the same kind.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .episodes import Episode, Turn, SPLITS
from .setting import AgentSpec, Holder, ObjectSpec, Placement, SettingRecord, _strip_article


class ConvertError(ValueError):
    pass


def _per_agent(value, i: int) -> list:
    if not value:
        return []
    if isinstance(value[0], list):
        return list(value[i]) if i < len(value) else []
    return list(value) if i == 0 else []


def _read_records(path: str | Path) -> list[dict]:
    text = Path(path).read_text("utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def light_setting(rec: dict) -> SettingRecord:
    try:
        setting = rec["setting"]
        a, b = rec["agents"][:2]
    except (KeyError, ValueError, TypeError) as exc:
        raise ConvertError(f"missing setting or agents: {exc}") from None
    names = {}
    descs = rec.get("all_descriptions") or {}
    placements, objects = [], {}
    worn = set()
    sources = [(0, "carrying", "self_carrying"), (0, "wearing", "self_wearing"), (0, "wielding", "self_wielding"),
               (1, "carrying", "partner_carrying"), (1, "wearing", "partner_wearing"),
               (1, "wielding", "partner_wielding")]
    taken = {_strip_article(setting["name"]), _strip_article(a["name"]), _strip_article(b["name"])}
    for i, field, holder in sources:
        for obj in _per_agent(rec.get(field), i):
            name = _strip_article(obj)
            if name in objects or name in taken:
                continue
            objects[name] = descs.get(obj, descs.get(name, ""))
            names[obj] = name
            placements.append(Placement(name, Holder(holder)))
            if field == "wearing":
                worn.add(name)
    room_objects = rec.get("room_objects") or []
    first = room_objects[0] if room_objects and isinstance(room_objects[0], list) else room_objects
    for obj in first:
        name = _strip_article(obj)
        if name in objects or name in taken:
            continue
        objects[name] = descs.get(obj, descs.get(name, ""))
        placements.append(Placement(name, Holder.ROOM))
    return SettingRecord(
        task_name="light_dialog",
        setting_name=_strip_article(setting["name"]),
        setting_description=setting.get("description", ""),
        self_agent=AgentSpec(_strip_article(a["name"]), a.get("persona", "")),
        partner_agent=AgentSpec(_strip_article(b["name"]), b.get("persona", "")),
        objects=tuple(ObjectSpec(n, d, {"wearable"} if n in worn else ()) for n, d in objects.items()),
        placements=tuple(placements),
    )


def light_turns(rec: dict) -> list[Turn]:
    speakers = rec.get("character") or []
    out = []
    for t, who in enumerate(speakers):
        who = _strip_article(who)
        for kind, key in (("utterance", "speech"), ("emote", "emote"), ("action", "action")):
            seq = rec.get(key) or []
            text = seq[t] if t < len(seq) else None
            if text:
                out.append(Turn(who, kind, text.strip()))
    return out


def convert_light(records: Iterable[dict], n_candidates: int = 20, seed: int = 0,
                  default_split: str = "train") -> list[Episode]:
    records = list(records)
    rng = np.random.default_rng(seed)
    parsed = [(light_setting(r), light_turns(r)) for r in records]
    pools = {k: sorted({t.text for _, turns in parsed for t in turns if t.kind == k})
             for k in ("utterance", "emote", "action")}
    episodes = []
    for idx, (rec, (setting, turns)) in enumerate(zip(records, parsed)):
        with_cands = []
        for turn in turns:
            pool = [x for x in pools[turn.kind] if x != turn.text]
            n = min(n_candidates - 1, len(pool))
            picks = [pool[j] for j in rng.choice(len(pool), size=n, replace=False)] if n else []
            gold = int(rng.integers(len(picks) + 1))
            cands = picks[:gold] + [turn.text] + picks[gold:]
            with_cands.append(Turn(turn.speaker, turn.kind, turn.text, tuple(cands), gold,
                                   (turn.kind,) * len(cands)))
        split = rec.get("split", default_split)
        if split not in SPLITS:
            raise ConvertError(f"record {idx}: unknown split {split!r}")
        episodes.append(Episode(str(rec.get("id", idx)), setting, tuple(with_cands), split))
    return episodes


def convert_file(src: str | Path, n_candidates: int = 20, seed: int = 0,
                 default_split: str = "train") -> list[Episode]:
    return convert_light(_read_records(src), n_candidates, seed, default_split)
