"""Ordinal utility re-ranking of the ranker's top three candidates.

Scorers only need to induce an ordering; rerank_top3 never looks at score
magnitudes, so any strictly increasing transform of a scorer's output leaves
the choice unchanged.
"""
from __future__ import annotations

import json
import logging
import math
import re
import socket
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .ranker import RankResult

log = logging.getLogger(__name__)

N_CANDIDATES = 3
EMPTY_CONTEXT = "nothing has happened yet"


class ScorerUnavailable(RuntimeError):
    pass


class ScorerTimeout(ScorerUnavailable):
    pass


class MalformedResponse(ScorerUnavailable):
    pass


class Non2xx(ScorerUnavailable):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status} {message}".strip())
        self.status = status


class MissingLexicon(FileNotFoundError):
    pass


@dataclass(frozen=True)
class UtilityQuery:
    context: str
    candidates: tuple

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if len(self.candidates) != N_CANDIDATES:
            raise ValueError(f"a utility query needs exactly {N_CANDIDATES} candidates")
        if not self.context or not self.context.strip():
            raise ValueError("utility context must be non-empty")

    def to_json(self) -> dict:
        return {"context": self.context, "candidates": list(self.candidates)}


class UtilityScorer(Protocol):
    def score(self, query: UtilityQuery) -> Sequence[float]: ...


class ConstantScorer:
    def __init__(self, value: float = 0.0):
        self.value = value

    def score(self, query: UtilityQuery) -> list[float]:
        return [self.value] * N_CANDIDATES


# -- context rephrasing -------------------------------------------------------

@dataclass(frozen=True)
class RephraseConfig:
    third_person: bool = True
    max_turns: int = 4
    include_persona: bool = False


_SPEAKER_FORMS = {"i": "{s}", "me": "{s}", "my": "{s}'s", "mine": "{s}'s", "myself": "{s}",
                  "i'm": "{s} is", "i'll": "{s} will", "i've": "{s} has", "i'd": "{s} would"}
_LISTENER_FORMS = {"you": "{l}", "your": "{l}'s", "yours": "{l}'s", "yourself": "{l}",
                   "you're": "{l} is", "you'll": "{l} will", "you've": "{l} have", "you'd": "{l} would"}
PRONOUNS = frozenset(_SPEAKER_FORMS) | frozenset(_LISTENER_FORMS)
_PRONOUN_RE = re.compile(r"(?<![\w'])(" + "|".join(sorted(PRONOUNS, key=len, reverse=True))
                         + r")(?![\w'])", re.IGNORECASE)


def third_person(text: str, speaker: str, listener: str) -> str:
    """Replace first/second person pronouns with 'the <speaker>' / 'the <listener>'."""
    s, l = f"the {speaker}", f"the {listener}"

    def sub(m):
        word = m.group(1).lower()
        form = _SPEAKER_FORMS.get(word) or _LISTENER_FORMS[word]
        return form.format(s=s, l=l)

    return _PRONOUN_RE.sub(sub, text)


def rephrase_context(history, self_name: str, partner_name: str,
                     config: RephraseConfig | None = None, setting=None) -> str:
    """Flatten the recent history into one utility context string.

    ``history`` is a sequence of turns (anything with speaker, kind and text).
    """
    cfg = config or RephraseConfig()
    parts = []
    if setting is not None:
        parts.append(f"The setting is the {setting.setting_name}. {setting.setting_description}.")
        if cfg.include_persona:
            for agent in (setting.self_agent, setting.partner_agent):
                parts.append(f"The {agent.name} is: {agent.persona}.")
    turns = list(history)[-cfg.max_turns:] if cfg.max_turns > 0 else []
    for turn in turns:
        listener = partner_name if turn.speaker == self_name else self_name
        if cfg.third_person:
            verb = "said" if turn.kind == "utterance" else "did"
            parts.append(f"The {turn.speaker} {verb}: {third_person(turn.text, turn.speaker, listener)}")
        else:
            parts.append(f"{turn.speaker}: {turn.text}")
    return " ".join(p.replace("..", ".") for p in parts)


# -- heuristic lexicon scorer ---------------------------------------------------

def _stem(word: str) -> str:
    for suffix in ("ing", "ed"):
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            word = word[: -len(suffix)]
            if len(word) > 2 and word[-1] == word[-2] and word[-1] not in "aeiousl":
                word = word[:-1]
            return word
    if word.endswith("s") and not word.endswith("ss") and len(word) > 3:
        return word[:-1]
    return word


def _stems(text: str) -> list[str]:
    return [_stem(w) for w in re.findall(r"[a-z]+", text.lower())]


def _count(phrase: tuple, tokens: list) -> int:
    n = len(phrase)
    return sum(1 for i in range(len(tokens) - n + 1) if tuple(tokens[i:i + n]) == phrase)


class HeuristicScorer:
    """Weighted prosocial minus antisocial lexicon hits, plus context-triggered bonuses."""

    def __init__(self, lexicon: str | Path | dict | None = None):
        if isinstance(lexicon, dict):
            data = lexicon
        else:
            try:
                if lexicon is None:
                    raw = resources.files("lightmind.data").joinpath("utility_lexicon.json").read_text("utf-8")
                else:
                    raw = Path(lexicon).read_text("utf-8")
            except (FileNotFoundError, OSError) as exc:
                raise MissingLexicon(f"cannot read lexicon: {exc}") from exc
            data = json.loads(raw)
        self.version = data.get("version")
        key = lambda p: tuple(_stems(p))
        self.weights = {}
        for phrase, w in data.get("prosocial", {}).items():
            self.weights[key(phrase)] = self.weights.get(key(phrase), 0.0) + float(w)
        for phrase, w in data.get("antisocial", {}).items():
            self.weights[key(phrase)] = self.weights.get(key(phrase), 0.0) - float(w)
        self.rules = [(frozenset(_stem(w) for w in r["when"]),
                       {key(p): float(b) for p, b in r["bonus"].items()})
                      for r in data.get("context_rules", [])]

    def score_text(self, candidate: str, context: str = "") -> float:
        tokens = _stems(candidate)
        total = sum(w * _count(p, tokens) for p, w in self.weights.items())
        ctx = set(_stems(context))
        for triggers, bonus in self.rules:
            if triggers & ctx:
                total += sum(b * _count(p, tokens) for p, b in bonus.items())
        return float(total)

    def score(self, query: UtilityQuery) -> list[float]:
        return [self.score_text(c, query.context) for c in query.candidates]


def heuristic_scorer(query: UtilityQuery, lexicon=None) -> list[float]:
    return HeuristicScorer(lexicon).score(query)


# -- remote scorer ----------------------------------------------------------------

class RemoteScorer:
    """JSON over HTTP: POST {endpoint}/score with {context, candidates}, expects {scores}."""

    def __init__(self, endpoint: str, timeout: float = 2.0, attempts: int = 3, backoff: float = 0.1):
        self.url = endpoint.rstrip("/") + ("" if endpoint.rstrip("/").endswith("/score") else "/score")
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff

    def _post(self, body: bytes) -> bytes:
        req = urllib.request.Request(self.url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            raise Non2xx(exc.code, str(exc.reason)) from None
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise ScorerTimeout(f"timed out after {self.timeout}s") from None
            raise ScorerUnavailable(f"unreachable: {exc.reason}") from None
        except (socket.timeout, TimeoutError):
            raise ScorerTimeout(f"timed out after {self.timeout}s") from None
        except (ConnectionError, OSError) as exc:
            raise ScorerUnavailable(f"connection failed: {exc}") from None

    @staticmethod
    def parse(raw: bytes) -> list[float]:
        try:
            doc = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from None
        scores = doc.get("scores") if isinstance(doc, dict) else None
        if not isinstance(scores, list) or len(scores) != N_CANDIDATES:
            raise MalformedResponse(f"expected {N_CANDIDATES} scores, got {scores!r}")
        if not all(isinstance(s, (int, float)) and not isinstance(s, bool) and math.isfinite(s)
                   for s in scores):
            raise MalformedResponse("scores must be finite numbers")
        return [float(s) for s in scores]

    def score(self, query: UtilityQuery) -> list[float]:
        body = json.dumps(query.to_json()).encode("utf-8")
        last = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                return self.parse(self._post(body))
            except MalformedResponse:
                raise
            except ScorerUnavailable as exc:
                last = exc
                log.debug("scorer attempt %d failed: %s", attempt + 1, exc)
        raise last


def make_scorer(kind: str, endpoint: str | None = None, timeout: float = 2.0,
                attempts: int = 3, lexicon=None):
    """Build a scorer from config; 'off' returns None."""
    if kind == "off":
        return None
    if kind == "heuristic":
        return HeuristicScorer(lexicon)
    if kind == "constant":
        return ConstantScorer()
    if kind == "remote":
        if not endpoint:
            raise ValueError("remote scorer needs an endpoint")
        return RemoteScorer(endpoint, timeout, attempts)
    raise ValueError(f"unknown scorer {kind!r}")


# -- re-ranking -----------------------------------------------------------------------

def rerank_top3(result: RankResult, scorer: UtilityScorer, query: UtilityQuery | str,
                candidates: Sequence[str] | None = None) -> RankResult:
    """Pick the utility argmax among the ranker's top three.

    ``query`` is either a ready UtilityQuery over the top-k texts or a context
    string, in which case ``candidates`` (the full list) supplies the texts.
    Shorter top-k lists are padded by repeating the last entry; padded slots
    are never chosen. Scorer failure returns the input untouched with
    ``reranked=False``.
    """
    topk = tuple(result.topk[:N_CANDIDATES])
    if not topk:
        return result
    if isinstance(query, UtilityQuery):
        q = query
    else:
        if candidates is None:
            raise ValueError("candidate texts are needed to build the query")
        texts = [candidates[i] for i in topk]
        texts += [texts[-1]] * (N_CANDIDATES - len(texts))
        q = UtilityQuery(query if query and query.strip() else EMPTY_CONTEXT, tuple(texts))
    try:
        scores = [float(s) for s in scorer.score(q)]
        if len(scores) != N_CANDIDATES or not all(math.isfinite(s) for s in scores):
            raise MalformedResponse(f"bad scores {scores!r}")
    except ScorerUnavailable as exc:
        log.warning("utility scorer unavailable, keeping ranker order: %s", exc)
        return replace(result, reranked=False)
    # topk is already ordered by ranker score then index, so position breaks ties
    best = max(range(len(topk)), key=lambda pos: (scores[pos], -pos))
    return replace(result, chosen=topk[best], reranked=True)


def make_reranker(scorer: UtilityScorer, config: RephraseConfig | None = None):
    """Adapter for ranker.rank_turn: builds the context from the episode prefix."""

    def rerank(res: RankResult, out, episode) -> RankResult:
        history = episode.turns[:out.index] if episode is not None else ()
        if episode is not None:
            ctx = rephrase_context(history, episode.self_name, episode.partner_name, config, episode.setting)
        else:
            ctx = out.context
        return rerank_top3(res, scorer, ctx, out.turn.candidates)

    return rerank
