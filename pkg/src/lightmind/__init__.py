"""Mental-state graph dialogue agent.

A typed relational graph tracks what an agent believes about itself, its
partner and the room; template actions update it exactly, utterances update
a dense copy through a learned recurrent step, and a ranker picks responses
from candidate lists under a feasibility mask, optionally re-ranked by an
ordinal utility scorer.
"""
from .graph import (AtomicOp, DiscreteGraph, GraphDelta, Relation, apply_delta, empty_graph,
                    invert_delta, restore, snapshot)
from .setting import SettingRecord, parse_setting, parse_setting_text
from .actions import ActionMask, enumerate_feasible, mask_candidates, parse_action, preconditions, effects

__all__ = [
    "AtomicOp", "DiscreteGraph", "GraphDelta", "Relation", "apply_delta", "empty_graph", "invert_delta",
    "restore", "snapshot", "SettingRecord", "parse_setting", "parse_setting_text", "ActionMask",
    "enumerate_feasible", "mask_candidates", "parse_action", "preconditions", "effects",
]
__version__ = "0.1.0"
