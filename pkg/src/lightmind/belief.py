"""Continuous belief-graph updater and the hybrid discrete/continuous step."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .actions import effects, forced_effects, parse_action, preconditions
from .autodiff import Tensor
from .encoders import DimensionMismatch
from .graph import DiscreteGraph, GraphDelta, OpKind, apply_delta
from .nn import GRUCell, MLP, ParamStore


@dataclass
class DenseBeliefGraph:
    """Real-valued adjacency ``[R, N, N]`` with every entry in [-1, 1]."""

    adjacency: Tensor

    @classmethod
    def zeros(cls, n_relations: int, n_slots: int) -> "DenseBeliefGraph":
        return cls(Tensor(np.zeros((n_relations, n_slots, n_slots))))

    @property
    def shape(self) -> tuple:
        return self.adjacency.shape

    def values(self) -> np.ndarray:
        return self.adjacency.data

    def in_range(self) -> bool:
        v = self.adjacency.data
        return bool(np.all(np.isfinite(v)) and np.all(np.abs(v) <= 1.0))

    def clamp(self, delta: GraphDelta) -> "DenseBeliefGraph":
        """Pin the triples a discrete delta touched to +1 (ADD) or -1 (DEL)."""
        R, N, _ = self.shape
        keep = np.ones((R, N, N))
        value = np.zeros((R, N, N))
        for op in delta:
            r = int(op.relation)
            if r < R and op.src < N and op.dst < N:
                keep[r, op.src, op.dst] = 0.0
                value[r, op.src, op.dst] = 1.0 if op.kind is OpKind.ADD else -1.0
        return DenseBeliefGraph(self.adjacency * keep + value)


@dataclass
class UpdaterState:
    hidden: Tensor

    @classmethod
    def initial(cls, size: int = 64) -> "UpdaterState":
        return cls(Tensor(np.zeros(size)))


class BeliefUpdater:
    """``dg = f_delta(h_graph, h_obs); h = GRU(dg, h); G = tanh(f_d(h))``.

    ``f_e`` maps a pooled graph vector to ``h_graph``.  The decoder output is
    reshaped to ``[R, N, N]`` over the first ``N`` entity slots.
    """

    def __init__(self, store: ParamStore, graph_dim: int = 64, obs_dim: int = 64, hidden: int = 64,
                 n_relations: int = 8, n_slots: int = 32, name: str = "belief"):
        self.graph_dim, self.obs_dim, self.hidden = graph_dim, obs_dim, hidden
        self.n_relations, self.n_slots = n_relations, n_slots
        self.f_e = MLP(store, f"{name}.f_e", graph_dim, hidden, hidden, acts=("tanh", "relu"))
        self.f_delta = MLP(store, f"{name}.f_delta", hidden + obs_dim, hidden, hidden, acts=("tanh", "relu"))
        self.gru = GRUCell(store, f"{name}.gru", hidden, hidden)
        self.f_d = MLP(store, f"{name}.f_d", hidden, hidden, n_relations * n_slots * n_slots,
                       acts=("relu", "tanh"), out_scale=0.05)

    def initial_state(self) -> UpdaterState:
        return UpdaterState.initial(self.hidden)

    def initial_graph(self) -> DenseBeliefGraph:
        return DenseBeliefGraph.zeros(self.n_relations, self.n_slots)

    def encode_graph(self, pooled: Tensor) -> Tensor:
        return self.f_e(pooled)

    def continuous_step(self, state: UpdaterState, h_graph: Tensor,
                        h_obs: Tensor) -> tuple[UpdaterState, DenseBeliefGraph]:
        h_graph, h_obs = ad.as_tensor(h_graph), ad.as_tensor(h_obs)
        if h_graph.shape != (self.hidden,) or h_obs.shape != (self.obs_dim,):
            raise DimensionMismatch(f"h_graph {h_graph.shape}, h_obs {h_obs.shape}; expected "
                                    f"({self.hidden},), ({self.obs_dim},)")
        if state.hidden.shape != (self.hidden,):
            raise DimensionMismatch(f"hidden {state.hidden.shape}, expected ({self.hidden},)")
        dg = self.f_delta(ad.concat([h_graph, h_obs]))
        h = self.gru(dg, state.hidden)
        G = self.f_d(h).reshape(self.n_relations, self.n_slots, self.n_slots)
        return UpdaterState(h), DenseBeliefGraph(G)


# observe(discrete, dense, text) -> (h_graph, h_obs), supplied by the full model
Observer = Callable[[DiscreteGraph, DenseBeliefGraph, str], tuple]


@dataclass
class StepResult:
    discrete: DiscreteGraph
    dense: DenseBeliefGraph
    state: UpdaterState
    delta: GraphDelta
    feasible: bool | None = None
    reason: str | None = None


def hybrid_step(discrete: DiscreteGraph, dense: DenseBeliefGraph, turn, state: UpdaterState | None,
                updater: BeliefUpdater | None = None, observe: Observer | None = None,
                strict: bool = True) -> StepResult:
    """Advance both graphs by one turn.

    Actions update the discrete graph and pin the touched dense triples;
    utterances run the continuous updater (when one is supplied); emotes
    change nothing.  In lenient mode an infeasible action is force-applied
    and reported through ``feasible``/``reason``.
    """
    kind = getattr(turn, "kind", None)
    if kind == "action":
        actor = discrete.id_of(turn.speaker)
        act = parse_action(actor, turn.text, discrete)
        feas = preconditions(act, discrete)
        if feas.feasible:
            delta = effects(act, discrete)
        elif strict:
            delta = effects(act, discrete)  # raises InfeasibleAction
        else:
            delta = forced_effects(act, discrete)
        new_discrete = apply_delta(discrete, delta, strict=True)
        return StepResult(new_discrete, dense.clamp(delta), state, delta, feas.feasible, feas.reason)
    if kind == "utterance" and updater is not None and observe is not None:
        h_graph, h_obs = observe(discrete, dense, turn.text)
        state, dense = updater.continuous_step(state, h_graph, h_obs)
        return StepResult(discrete, dense, state, GraphDelta())
    if kind not in ("action", "utterance", "emote"):
        raise ValueError(f"unknown turn kind {kind!r}")
    return StepResult(discrete, dense, state, GraphDelta())


def overlay(discrete: DiscreteGraph, dense: DenseBeliefGraph | None, mode: str = "hybrid") -> Tensor:
    """Adjacency the graph encoder sees for ``mode`` in {discrete, continuous, hybrid}."""
    n = discrete.n
    R = discrete.max_relations
    D = discrete.adjacency(n, R).astype(np.float64)
    if mode == "discrete" or dense is None:
        return Tensor(D)
    Rd, N, _ = dense.shape
    if Rd != R:
        raise DimensionMismatch(f"dense relations {Rd} != {R}")
    m = min(n, N)
    sub = dense.adjacency[:, :m, :m]
    if m < n:
        pad_c = Tensor(np.zeros((R, m, n - m)))
        pad_r = Tensor(np.zeros((R, n - m, n)))
        sub = ad.concat([ad.concat([sub, pad_c], axis=2), pad_r], axis=1)
    if mode == "continuous":
        return sub
    if mode == "hybrid":
        return sub * (1.0 - D) + D
    raise ValueError(f"unknown graph mode {mode!r}")
