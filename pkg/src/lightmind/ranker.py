"""Candidate scoring, mask-constrained top-k selection and end-to-end training."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .actions import ActionMask, mask_candidates
from .autodiff import Tensor
from .model import AgentModel, ModelConfig
from .episodes import candidate_kind
from .nn import Adam

log = logging.getLogger(__name__)

TASKS = ("utterance", "action", "emote")


class EmptyCandidateList(ValueError):
    pass


class AllMasked(ValueError):
    pass


class DivergedLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class Candidate:
    text: str
    kind: str = "utterance"


@dataclass
class RankResult:
    scores: np.ndarray        # renormalised over unmasked candidates
    mask: ActionMask
    topk: tuple
    chosen: int
    reranked: bool = False


def score_candidates(model: AgentModel, context: Tensor, candidates: Sequence[Candidate | str]) -> np.ndarray:
    if not candidates:
        raise EmptyCandidateList("no candidates to score")
    texts = [c.text if isinstance(c, Candidate) else c for c in candidates]
    with ad.no_grad():
        logits = model.score_logits(context, texts)
    return ad.softmax(logits).data.copy()


def select(scores: Sequence[float], mask: ActionMask | None = None, k: int = 3) -> RankResult:
    """Zero masked scores, renormalise, take the k best (ties to the lowest index)."""
    p = np.asarray(scores, dtype=np.float64)
    if p.size == 0:
        raise EmptyCandidateList("no candidates")
    if mask is None:
        mask = ActionMask.all_true(len(p))
    keep = np.asarray(mask.feasible, dtype=bool)
    if keep.shape != p.shape:
        raise ValueError("mask and scores differ in length")
    if not keep.any():
        raise AllMasked("every candidate is masked")
    masked = np.where(keep, p, 0.0)
    total = masked.sum()
    if total > 0:
        masked = masked / total
    else:
        masked = keep / keep.sum()
    order = sorted(np.flatnonzero(keep).tolist(), key=lambda i: (-masked[i], i))
    topk = tuple(order[:k])
    return RankResult(masked, mask, topk, topk[0])


def turn_mask(out, strict: bool = True) -> ActionMask:
    turn = out.turn
    kinds = turn.candidate_kinds or tuple(candidate_kind(c) for c in turn.candidates)
    return mask_candidates(turn.candidates, turn.speaker, out.graph, strict=strict, kinds=kinds)


def rank_turn(out, episode=None, mask_on: bool = True, k: int = 3, rerank: Callable | None = None,
              strict: bool = True) -> RankResult:
    """Softmax, optional action mask, top-k, optional utility re-rank for one scored turn."""
    probs = ad.softmax(out.logits).data
    mask = turn_mask(out, strict) if mask_on else ActionMask.all_true(len(probs))
    res = select(probs, mask, k)
    if rerank is not None:
        res = rerank(res, out, episode)
    return res


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 2e-3
    batch_episodes: int = 4
    seed: int = 0
    target_recall: float | None = None   # stop early once valid action recall reaches this
    eval_every: int = 1
    time_budget: float | None = None     # seconds


@dataclass
class TrainResult:
    model: AgentModel
    history: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final(self) -> dict:
        return self.history[-1] if self.history else {}


def episode_loss(model: AgentModel, episode) -> tuple[Tensor | None, int]:
    total, n = None, 0
    for out in model.rollout(episode):
        loss = ad.cross_entropy(out.logits, out.turn.gold_index)
        total = loss if total is None else total + loss
        n += 1
    return total, n


def recall_at_1(model: AgentModel, episodes, mask_on: bool = False, mode: str | None = None,
                k: int = 3, rerank: Callable | None = None) -> dict:
    """Recall@1 per task over the self agent's scored turns."""
    hits = {t: 0 for t in TASKS}
    counts = {t: 0 for t in TASKS}
    with ad.no_grad():
        for ep in episodes:
            for out in model.rollout(ep, mode=mode):
                res = rank_turn(out, ep, mask_on=mask_on, k=k, rerank=rerank)
                task = out.turn.kind
                counts[task] += 1
                hits[task] += int(res.chosen == out.turn.gold_index)
    return {t: {"recall_at_1": hits[t] / counts[t] if counts[t] else float("nan"), "n": counts[t]}
            for t in TASKS}


def train(train_episodes, valid_episodes, model_config: ModelConfig | None = None,
          config: TrainConfig | None = None, model: AgentModel | None = None,
          on_epoch: Callable | None = None) -> TrainResult:
    """Minimise the cross-entropy of gold candidates; evaluates valid recall@1 each epoch."""
    cfg = config or TrainConfig()
    model = model or AgentModel(model_config or ModelConfig(seed=cfg.seed))
    opt = Adam(list(model.store), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model)
    start = time.perf_counter()
    episodes = list(train_episodes)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(episodes))
        running, n_turns, pending = 0.0, 0, 0
        for pos, i in enumerate(order):
            loss, n = episode_loss(model, episodes[i])
            if loss is None:
                continue
            if not np.isfinite(loss.item()):
                raise DivergedLoss(f"epoch {epoch}: loss {loss.item()}")
            loss.backward()
            running += loss.item()
            n_turns += n
            pending += 1
            if pending >= cfg.batch_episodes or pos == len(order) - 1:
                opt.step()
                pending = 0
        entry = {"epoch": epoch, "train_loss": running / max(n_turns, 1),
                 "seconds": time.perf_counter() - start}
        if valid_episodes is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            entry["valid"] = recall_at_1(model, valid_episodes)
        result.history.append(entry)
        log.info("epoch %d loss %.4f %s", epoch, entry["train_loss"],
                 {t: round(v["recall_at_1"], 3) for t, v in entry.get("valid", {}).items()})
        if on_epoch:
            on_epoch(entry)
        if (cfg.target_recall is not None and "valid" in entry
                and entry["valid"]["action"]["recall_at_1"] >= cfg.target_recall):
            break
        if cfg.time_budget is not None and time.perf_counter() - start > cfg.time_budget:
            break
    model.store.zero_grad()
    result.seconds = time.perf_counter() - start
    return result
