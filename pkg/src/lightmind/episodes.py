"""Episode schema, JSONL ingestion and replay."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .actions import ActionError, mask_candidates, looks_like_action
from .belief import hybrid_step, DenseBeliefGraph
from .graph import DiscreteGraph, GraphError, snapshot
from .setting import SettingError, SettingRecord, parse_setting

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "seen_test", "unseen_test")
TURN_KINDS = ("utterance", "action", "emote")
LIGHT_EMOTES = (
    "applaud", "blush", "cry", "dance", "frown", "gasp", "grin", "groan", "growl", "laugh",
    "nod", "nudge", "ponder", "pout", "scream", "shrug", "sigh", "smile", "stare", "wave",
    "wink", "yawn",
)


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None, episode_id: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if episode_id is not None:
            where.append(f"episode {episode_id}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.episode_id = episode_id


class ReplayAborted(RuntimeError):
    def __init__(self, turn: int, reason: str):
        super().__init__(f"turn {turn}: {reason}")
        self.turn = turn
        self.reason = reason


@dataclass(frozen=True)
class Turn:
    speaker: str
    kind: str
    text: str
    candidates: tuple | None = None
    gold_index: int | None = None
    candidate_kinds: tuple | None = None

    def to_dict(self) -> dict:
        d = {"speaker": self.speaker, "kind": self.kind, "text": self.text}
        if self.candidates is not None:
            d["candidates"] = list(self.candidates)
        if self.gold_index is not None:
            d["gold_index"] = self.gold_index
        if self.candidate_kinds is not None:
            d["candidate_kinds"] = list(self.candidate_kinds)
        return d

    @property
    def gold(self) -> str | None:
        if self.candidates is None or self.gold_index is None:
            return None
        return self.candidates[self.gold_index]


@dataclass(frozen=True)
class Episode:
    id: str
    setting: SettingRecord
    turns: tuple
    split: str = "train"

    def to_dict(self) -> dict:
        return {"id": self.id, "split": self.split, "setting": self.setting.to_dict(),
                "turns": [t.to_dict() for t in self.turns]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @property
    def self_name(self) -> str:
        return self.setting.self_agent.name

    @property
    def partner_name(self) -> str:
        return self.setting.partner_agent.name


def candidate_kind(text: str, emotes: Iterable[str] = LIGHT_EMOTES) -> str:
    if looks_like_action(text):
        return "action"
    if text.strip().lower() in set(emotes):
        return "emote"
    return "utterance"


def _turn_from_dict(d: dict, names: set) -> Turn:
    if not isinstance(d, dict):
        raise SchemaError("turn must be an object")
    for key in ("speaker", "kind", "text"):
        if not isinstance(d.get(key), str):
            raise SchemaError(f"turn field {key!r} must be a string")
    if d["kind"] not in TURN_KINDS:
        raise SchemaError(f"turn kind {d['kind']!r} not in {TURN_KINDS}")
    if d["speaker"] not in names:
        raise SchemaError(f"unknown speaker {d['speaker']!r}")
    cands = d.get("candidates")
    gold = d.get("gold_index")
    kinds = d.get("candidate_kinds")
    if cands is not None:
        if not isinstance(cands, list) or not all(isinstance(c, str) for c in cands) or not cands:
            raise SchemaError("candidates must be a non-empty list of strings")
        cands = tuple(cands)
    if gold is not None:
        if not isinstance(gold, int) or isinstance(gold, bool):
            raise SchemaError("gold_index must be an integer")
        if cands is None or not (0 <= gold < len(cands)):
            raise SchemaError(f"gold_index {gold} out of range")
    if kinds is not None:
        if cands is None or len(kinds) != len(cands) or any(k not in TURN_KINDS for k in kinds):
            raise SchemaError("candidate_kinds must align with candidates")
        kinds = tuple(kinds)
    return Turn(d["speaker"], d["kind"], d["text"], cands, gold, kinds)


def episode_from_dict(d: dict, line: int | None = None) -> Episode:
    """Validate and build an episode; raises SchemaError naming the episode."""
    if not isinstance(d, dict):
        raise SchemaError("record must be a JSON object", line)
    eid = d.get("id")
    if not isinstance(eid, (str, int)):
        raise SchemaError("missing id", line)
    eid = str(eid)
    try:
        split = d.get("split", "train")
        if split not in SPLITS:
            raise SchemaError(f"split {split!r} not in {SPLITS}")
        setting = SettingRecord.from_dict(d["setting"])
        parse_setting(setting)
        names = {setting.self_agent.name, setting.partner_agent.name}
        turns = d.get("turns")
        if not isinstance(turns, list) or not turns:
            raise SchemaError("an episode needs at least one turn")
        parsed = tuple(_turn_from_dict(t, names) for t in turns)
    except SchemaError as exc:
        raise SchemaError(str(exc), line, eid) from None
    except (KeyError, TypeError, ValueError, SettingError, GraphError) as exc:
        raise SchemaError(f"{type(exc).__name__}: {exc}", line, eid) from None
    return Episode(eid, setting, parsed, split)


# -- ingestion ------------------------------------------------------------

@dataclass
class IngestReport:
    counts: dict
    errors: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> dict:
        return {"counts": dict(self.counts), "n_errors": len(self.errors),
                "errors": [str(e) for e in self.errors[:20]]}


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict | None, str | None]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line), None
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc.msg}"


def ingest(path: str | Path, keep: bool = True) -> IngestReport:
    """Validate every record; malformed ones are reported with their line number."""
    report = IngestReport({s: 0 for s in SPLITS})
    for lineno, doc, err in iter_jsonl(path):
        if err:
            report.errors.append(SchemaError(err, lineno))
            continue
        try:
            ep = episode_from_dict(doc, lineno)
        except SchemaError as exc:
            report.errors.append(exc)
            continue
        report.counts[ep.split] += 1
        if keep:
            report.episodes.append(ep)
    return report


def load_episodes(path: str | Path, split: str | None = None) -> list[Episode]:
    report = ingest(path)
    if report.errors:
        raise report.errors[0]
    return [e for e in report.episodes if split is None or e.split == split]


def write_jsonl(episodes: Iterable[Episode], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(ep.to_json() + "\n")
            n += 1
    return n


# -- replay ---------------------------------------------------------------

@dataclass
class ReplayTrace:
    episode_id: str
    snapshots: list = field(default_factory=list)     # G0 then one per applied turn
    gold_feasible: list = field(default_factory=list)  # per turn: bool for actions, None otherwise
    mask_valid: list = field(default_factory=list)     # per turn: gold candidate unmasked, None if no candidates
    events: list = field(default_factory=list)

    @property
    def completed(self) -> int:
        return len(self.snapshots) - 1

    def all_gold_feasible(self) -> bool:
        return all(f is not False for f in self.gold_feasible) and all(m is not False for m in self.mask_valid)


def replay(episode: Episode, mode: str = "strict", max_turns: int | None = None,
           emotes: Iterable[str] = LIGHT_EMOTES) -> ReplayTrace:
    """Re-run an episode through the setting parser and the hybrid step.

    Strict mode raises ``ReplayAborted`` at the first infeasible gold action;
    lenient mode logs it and force-applies the action.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError("mode must be strict or lenient")
    strict = mode == "strict"
    graph = parse_setting(episode.setting)
    dense = DenseBeliefGraph.zeros(graph.max_relations, 1)
    trace = ReplayTrace(episode.id, [snapshot(graph)])
    turns = episode.turns if max_turns is None else episode.turns[:max_turns]
    for t, turn in enumerate(turns):
        valid = None
        if turn.candidates is not None and turn.gold_index is not None:
            kinds = turn.candidate_kinds or tuple(candidate_kind(c, emotes) for c in turn.candidates)
            actor = graph.id_of(turn.speaker)
            mask = mask_candidates(turn.candidates, actor, graph, strict=True, kinds=kinds)
            valid = mask.feasible[turn.gold_index]
        trace.mask_valid.append(valid)
        try:
            step = hybrid_step(graph, dense, turn, None, strict=False)
        except (ActionError, GraphError) as exc:
            trace.gold_feasible.append(False)
            trace.events.append((t, f"unparseable action {turn.text!r}: {exc}"))
            if strict:
                raise ReplayAborted(t, str(exc)) from exc
            log.warning("episode %s turn %d: %s", episode.id, t, exc)
            trace.snapshots.append(snapshot(graph))
            continue
        if turn.kind == "action":
            trace.gold_feasible.append(step.feasible)
            if not step.feasible:
                msg = f"infeasible gold action {turn.text!r}: {step.reason}"
                trace.events.append((t, msg))
                if strict:
                    raise ReplayAborted(t, msg)
                log.warning("episode %s turn %d: %s", episode.id, t, msg)
        else:
            trace.gold_feasible.append(None)
        if valid is False:
            msg = f"gold candidate {turn.gold!r} masked"
            trace.events.append((t, msg))
            if strict:
                raise ReplayAborted(t, msg)
        graph = step.discrete
        trace.snapshots.append(snapshot(graph))
    return trace
