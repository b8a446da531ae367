"""Recall@1 evaluation across mask / utility / graph-mode flag combinations."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import AgentModel
from .ranker import TASKS, recall_at_1
from .utility import RephraseConfig, make_reranker


@dataclass(frozen=True)
class EvalFlags:
    mask_on: bool = True
    utility_on: bool = False
    graph: str = "hybrid"

    def label(self) -> str:
        return f"graph={self.graph} mask={'on' if self.mask_on else 'off'} utility={'on' if self.utility_on else 'off'}"


def flag_grid(masks: Sequence[bool] = (False, True), utilities: Sequence[bool] = (False,),
              graphs: Sequence[str] = ("hybrid",)) -> list[EvalFlags]:
    return [EvalFlags(m, u, g) for g, m, u in itertools.product(graphs, masks, utilities)]


def evaluate(model: AgentModel, episodes, flags: EvalFlags = EvalFlags(), split: str = "valid",
             scorer=None, rephrase: RephraseConfig | None = None, k: int = 3) -> list[dict]:
    """One metrics row per task; a pure function of its inputs."""
    if flags.utility_on and scorer is None:
        raise ValueError("utility_on needs a scorer")
    rerank = make_reranker(scorer, rephrase) if flags.utility_on else None
    rec = recall_at_1(model, episodes, mask_on=flags.mask_on, mode=flags.graph, k=k, rerank=rerank)
    return [{"split": split, "task": t, "recall_at_1": rec[t]["recall_at_1"], "n": rec[t]["n"],
             "graph": flags.graph, "mask": flags.mask_on, "utility": flags.utility_on}
            for t in TASKS]


def evaluate_grid(model: AgentModel, episodes, grid: Iterable[EvalFlags], split: str = "valid",
                  scorer=None, rephrase: RephraseConfig | None = None, k: int = 3) -> list[dict]:
    episodes = list(episodes)
    rows = []
    for flags in grid:
        rows.extend(evaluate(model, episodes, flags, split, scorer, rephrase, k))
    return rows


def lookup(rows: list[dict], task: str, **flags) -> float:
    for r in rows:
        if r["task"] == task and all(r[key] == v for key, v in flags.items()):
            return r["recall_at_1"]
    raise KeyError(f"no row for {task} {flags}")


def format_table(rows: list[dict]) -> str:
    """Plain-text table: one line per flag combination, one column per task."""
    combos = []
    for r in rows:
        key = (r["split"], r["graph"], r["mask"], r["utility"])
        if key not in combos:
            combos.append(key)
    head = f"{'split':<12}{'graph':<12}{'mask':<6}{'utility':<9}" + "".join(f"{t:>12}" for t in TASKS)
    lines = [head, "-" * len(head)]
    for split, graph, mask, util in combos:
        cells = []
        for t in TASKS:
            match = [r for r in rows if (r["split"], r["graph"], r["mask"], r["utility"], r["task"])
                     == (split, graph, mask, util, t)]
            if not match or match[0]["n"] == 0:
                cells.append(f"{'-':>12}")
            else:
                cells.append(f"{match[0]['recall_at_1']:.3f} ({match[0]['n']})".rjust(12))
        lines.append(f"{split:<12}{graph:<12}{'on' if mask else 'off':<6}{'on' if util else 'off':<9}"
                     + "".join(cells))
    return "\n".join(lines)


def write_metrics(rows: Iterable[dict], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
            n += 1
    return n
