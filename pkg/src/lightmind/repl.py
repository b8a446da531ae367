"""Terminal play: a human drives one agent through typed commands."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, TextIO

from .actions import ActionError, enumerate_feasible, effects, parse_action, preconditions
from .episodes import LIGHT_EMOTES, Turn
from .graph import DiscreteGraph, GraphDelta, OpKind, apply_delta, invert_delta
from .setting import SettingRecord, parse_setting

HELP = """commands:
  say <text>       speak
  do <action>      act, e.g. 'do get scepter' or 'do give crown to servant'
  emote <name>     one of the emote vocabulary
  graph            show the current graph
  mask             list feasible actions
  undo             revert the last action
  quit             leave"""


@dataclass
class Session:
    setting: SettingRecord
    emotes: tuple = LIGHT_EMOTES
    graph: DiscreteGraph = field(init=False)
    transcript: list = field(default_factory=list)
    undo_stack: list = field(default_factory=list)   # (transcript length, delta)

    def __post_init__(self):
        self.graph = parse_setting(self.setting)

    @property
    def player(self) -> str:
        return self.setting.self_agent.name

    @property
    def partner(self) -> str:
        return self.setting.partner_agent.name

    def feasible(self, agent: str | None = None) -> list[str]:
        actor = self.graph.id_of(agent or self.player)
        return sorted(a.render(self.graph) for a in enumerate_feasible(actor, self.graph))

    def act(self, text: str, agent: str | None = None) -> tuple[bool, str, GraphDelta]:
        """Validate and apply an action; returns (ok, message, delta)."""
        agent = agent or self.player
        try:
            action = parse_action(self.graph.id_of(agent), text, self.graph)
        except ActionError as exc:
            return False, f"cannot parse action: {exc}", GraphDelta()
        feas = preconditions(action, self.graph)
        if not feas:
            return False, f"rejected: {feas.reason}", GraphDelta()
        delta = effects(action, self.graph)
        before = self.graph
        self.graph = apply_delta(self.graph, delta)
        self.undo_stack.append((len(self.transcript), delta))
        self.transcript.append(Turn(agent, "action", text))
        return True, diff_lines(before, delta), delta

    def say(self, text: str, agent: str | None = None) -> None:
        self.transcript.append(Turn(agent or self.player, "utterance", text))

    def emote(self, name: str, agent: str | None = None) -> tuple[bool, str]:
        name = name.strip().lower()
        if name not in self.emotes:
            return False, f"unknown emote {name!r}"
        self.transcript.append(Turn(agent or self.player, "emote", name))
        return True, ""

    def undo(self) -> tuple[bool, str]:
        if not self.undo_stack:
            return False, "nothing to undo"
        length, delta = self.undo_stack.pop()
        inverse = invert_delta(delta)
        before = self.graph
        self.graph = apply_delta(self.graph, inverse)
        del self.transcript[length:]
        return True, diff_lines(before, inverse)

    def graph_lines(self) -> list[str]:
        return [f"{rel}({src}, {dst})" for rel, src, dst in self.graph.named_edges()]


def diff_lines(graph: DiscreteGraph, delta: GraphDelta) -> str:
    out = []
    for op in delta:
        sign = "+" if op.kind is OpKind.ADD else "-"
        out.append(f"  {sign} {op.relation.label}({graph.entity(op.src).name}, {graph.entity(op.dst).name})")
    return "\n".join(out)


Responder = Callable[[Session], "Turn | None"]


def run(session: Session, stdin: TextIO | None = None, stdout: TextIO | None = None,
        responder: Responder | None = None, prompt: str = "> ") -> Session:
    """Read commands until quit or EOF; the partner replies via ``responder`` if given."""
    # looked up per call so redirected streams are honoured
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout

    def say(msg: str = ""):
        print(msg, file=stdout)

    s = session.setting
    say(f"You are the {session.player} in the {s.setting_name}. {s.setting_description}")
    say(f"The {session.partner} is here. Type 'help' for commands.")
    while True:
        stdout.write(prompt)
        stdout.flush()
        line = stdin.readline()
        if not line:
            break
        cmd, _, arg = line.strip().partition(" ")
        cmd, arg = cmd.lower(), arg.strip()
        acted = False
        if cmd in ("quit", "exit"):
            break
        elif cmd == "help" or not cmd:
            say(HELP)
        elif cmd == "say" and arg:
            session.say(arg)
            acted = True
        elif cmd == "do" and arg:
            ok, msg, _ = session.act(arg)
            say(msg)
            acted = ok
        elif cmd == "emote" and arg:
            ok, msg = session.emote(arg)
            if msg:
                say(msg)
            acted = ok
        elif cmd == "graph":
            for edge in session.graph_lines():
                say(edge)
        elif cmd == "mask":
            for a in session.feasible():
                say(a)
        elif cmd == "undo":
            ok, msg = session.undo()
            say(msg)
        else:
            say(f"unknown command {line.strip()!r}; type 'help'")
        if acted and responder is not None:
            reply = responder(session)
            if reply is not None:
                _apply_reply(session, reply, say)
    return session


def _apply_reply(session: Session, turn: Turn, say) -> None:
    who = session.partner
    if turn.kind == "action":
        ok, msg, _ = session.act(turn.text, agent=who)
        if ok:
            say(f"The {who} does: {turn.text}\n{msg}")
    elif turn.kind == "emote":
        if session.emote(turn.text, agent=who)[0]:
            say(f"The {who} {turn.text}s.")
    else:
        session.say(turn.text, agent=who)
        say(f"The {who} says: {turn.text}")


def model_responder(model, utterances, emotes=LIGHT_EMOTES[:6]) -> Responder:
    """Partner picks the best-scored candidate among its feasible actions, some emotes and utterances."""
    from .episodes import Episode
    from .ranker import rank_turn

    def respond(session: Session):
        partner = session.partner
        actions = session.feasible(partner)[:10]
        cands = tuple(actions) + tuple(emotes) + tuple(utterances)
        kinds = ("action",) * len(actions) + ("emote",) * len(emotes) + ("utterance",) * len(utterances)
        if not cands:
            return None
        pending = Turn(partner, "utterance", "", cands, 0, kinds)
        ep = Episode("play", session.setting, tuple(session.transcript) + (pending,))
        out = list(model.rollout(ep, score_all=True))[-1]
        res = rank_turn(out, ep, mask_on=True)
        return Turn(partner, kinds[res.chosen], cands[res.chosen])

    return respond
