"""The full agent model: encoders, belief updater and candidate scorer, plus
the per-episode rollout that both training and evaluation drive."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .belief import BeliefUpdater, DenseBeliefGraph, hybrid_step, overlay
from .encoders import BiAttention, HashedTextEncoder, RGCN, words
from .graph import DiscreteGraph, EntityKind
from .nn import Linear, MLP, ParamStore, load_checkpoint, save_checkpoint, CheckpointMismatch
from .setting import parse_setting

GRAPH_MODES = ("discrete", "continuous", "hybrid")


@dataclass
class ModelConfig:
    dim: int = 64
    layers: int = 6
    bases: int = 3
    n_relations: int = 8
    max_entities: int = 64
    n_slots: int = 32
    gru_hidden: int = 64
    n_buckets: int = 4096
    max_tokens: int = 64
    hash_seed: int = 0
    scorer_hidden: int = 64
    context_turns: int = 4
    graph_mode: str = "hybrid"
    use_graph: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TurnOutput:
    index: int
    turn: object
    logits: Tensor
    graph: DiscreteGraph
    context: str = ""


class AgentModel:
    def __init__(self, config: ModelConfig | None = None):
        self.config = cfg = config or ModelConfig()
        if cfg.graph_mode not in GRAPH_MODES:
            raise ValueError(f"graph_mode must be one of {GRAPH_MODES}")
        self.store = store = ParamStore(cfg.seed)
        d = cfg.dim
        self.text = HashedTextEncoder(store, d, cfg.n_buckets, cfg.max_tokens, cfg.hash_seed)
        self.rgcn = RGCN(store, d, cfg.n_relations, cfg.layers, cfg.bases)
        self.biatt = BiAttention(store, d)
        self.updater = BeliefUpdater(store, d, d, cfg.gru_hidden, cfg.n_relations, cfg.n_slots)
        self.ctx_dim = 5 * d
        self.ctx_proj = Linear(store, "scorer.proj", self.ctx_dim, d)
        # candidate-conditioned read over graph nodes: raw bag-of-buckets of the candidate
        # against the node names, values are the R-GCN outputs
        self.read_w = store.create("scorer.read_w", (d, d), init="eye", scale=3.0)
        self.scorer = MLP(store, "scorer.mlp", self.ctx_dim + 3 * d, cfg.scorer_hidden, 1,
                          acts=("tanh", "none"))

    # -- checkpoints --------------------------------------------------------
    def save(self, path, extra: dict | None = None) -> str:
        return save_checkpoint(path, self.store.state(), self.config.to_dict(), extra)

    @classmethod
    def load(cls, path, **overrides) -> "AgentModel":
        state, manifest = load_checkpoint(path)
        cfg = ModelConfig.from_dict({**manifest["config"], **overrides})
        model = cls(cfg)
        model.store.load_state(state)
        return model

    def check_compatible(self, manifest_config: dict) -> None:
        mine = self.config.to_dict()
        for k in ("dim", "layers", "bases", "n_relations", "n_slots", "gru_hidden", "n_buckets"):
            if manifest_config.get(k) != mine[k]:
                raise CheckpointMismatch(f"{k}: checkpoint {manifest_config.get(k)} != model {mine[k]}")

    # -- encoders -----------------------------------------------------------
    @staticmethod
    def node_texts(graph: DiscreteGraph, self_name: str) -> list[str]:
        out = []
        for e in graph.entities:
            if e.kind is EntityKind.AGENT:
                out.append(("self " if e.name == self_name else "other ") + e.name)
            elif e.kind is EntityKind.SINK:
                out.append("consumed")
            elif e.kind in (EntityKind.OBJECT, EntityKind.ROOM):
                out.append(f"{e.name} {e.text}")
            else:
                out.append(e.text or e.name)
        return out

    def node_features(self, graph: DiscreteGraph, self_name: str) -> Tensor:
        return self.text.encode_many(self.node_texts(graph, self_name))

    def encode_graph(self, features: Tensor, discrete: DiscreteGraph, dense: DenseBeliefGraph | None,
                     mode: str | None = None) -> tuple[Tensor, Tensor]:
        mode = mode or self.config.graph_mode
        if not self.config.use_graph:
            zeros = Tensor(np.zeros((1, self.config.dim)))
            return zeros, Tensor(np.zeros(self.config.dim))
        A = overlay(discrete, dense, mode)
        return self.rgcn(features[0:discrete.n], A)

    def context_vector(self, nodes: Tensor, pooled: Tensor, history: str) -> Tensor:
        enc = self.text.encode(words(history))
        return ad.concat([self.biatt(nodes, enc.tokens), pooled])

    @staticmethod
    def node_keys(graph: DiscreteGraph) -> list[str]:
        """Names of the entities a candidate can mention; other nodes get an empty key."""
        return [e.name if e.kind in (EntityKind.OBJECT, EntityKind.AGENT, EntityKind.ROOM) else ""
                for e in graph.entities]

    def graph_read(self, candidates: list[str], nodes: Tensor | None, keys: Tensor | None) -> Tensor:
        """Each candidate attends over node name keys and reads the node embeddings."""
        k = len(candidates)
        if nodes is None or keys is None or not self.config.use_graph:
            return Tensor(np.zeros((k, self.config.dim)))
        q = self.text.encode_many(candidates, raw=True)          # [k, d]
        att = ad.softmax((q @ self.read_w) @ keys.T, axis=1)      # [k, n]
        return att @ nodes                                       # [k, d]

    def score_logits(self, context: Tensor, candidates: list[str], nodes: Tensor | None = None,
                     keys: Tensor | None = None) -> Tensor:
        k = len(candidates)
        cand = self.text.encode_many(candidates)                 # [k, d]
        inter = cand * self.ctx_proj(context)                     # [k, d]
        read = self.graph_read(candidates, nodes, keys)           # [k, d]
        ctx = ad.broadcast_to(context.reshape(1, -1), (k, self.ctx_dim))
        return self.scorer(ad.concat([ctx, cand, inter, read], axis=1)).reshape(k)

    # -- rollout ------------------------------------------------------------
    def rollout(self, episode, mode: str | None = None, strict: bool = False,
                score_all: bool = False) -> Iterator[TurnOutput]:
        """Walk an episode, yielding logits for every scored turn before it is applied.

        Scored turns are the self agent's turns that carry candidates (all
        candidate-bearing turns with ``score_all``).
        """
        cfg = self.config
        mode = mode or cfg.graph_mode
        setting = episode.setting
        self_name = setting.self_agent.name
        discrete = parse_setting(setting, max_entities=cfg.max_entities, max_relations=cfg.n_relations)
        features = self.node_features(discrete, self_name) if cfg.use_graph else None
        dense = self.updater.initial_graph() if mode != "discrete" else None
        state = self.updater.initial_state()
        history: list[str] = []
        use_continuous = cfg.use_graph and mode != "discrete"

        for t, turn in enumerate(episode.turns):
            cache = {}

            def graph_enc():
                if "enc" not in cache:
                    cache["enc"] = self.encode_graph(features, discrete, dense, mode)
                return cache["enc"]

            scored = turn.candidates and turn.gold_index is not None and (
                score_all or turn.speaker == self_name)
            if scored:
                nodes, pooled = graph_enc()
                ctx_text = " ".join(history[-cfg.context_turns:]) if cfg.context_turns else ""
                ctx = self.context_vector(nodes, pooled, ctx_text)
                keys = self.text.encode_many(self.node_keys(discrete), raw=True) if cfg.use_graph else None
                logits = self.score_logits(ctx, list(turn.candidates), nodes, keys)
                yield TurnOutput(t, turn, logits, discrete, ctx_text)

            observe = None
            if use_continuous:
                def observe(_d, _g, text):
                    return (self.updater.encode_graph(graph_enc()[1]),
                            self.text.encode(words(text)).pooled)
            if mode == "continuous" and turn.kind == "action":
                # the continuous-only parser reads actions as text; discrete kept for the mask
                step = hybrid_step(discrete, dense, turn, state, None, None, strict=strict)
                discrete = step.discrete
                if observe is not None:
                    state, dense = self.updater.continuous_step(state, *observe(discrete, dense, turn.text))
            else:
                step = hybrid_step(discrete, dense if dense is not None else _NULL_DENSE, turn, state,
                                   self.updater if use_continuous else None, observe, strict=strict)
                discrete, state = step.discrete, step.state
                if dense is not None:
                    dense = step.dense
            if turn.kind in ("utterance", "emote"):
                history.append(f"{turn.speaker} {turn.text}")


class _NullDense:
    """Stand-in dense graph for discrete-only rollouts."""

    shape = (0, 0, 0)

    def clamp(self, delta):
        return self


_NULL_DENSE = _NullDense()
