"""Random graph and delta builders shared by the property tests."""
from __future__ import annotations

import numpy as np

from lightmind.actions import enumerate_feasible, effects
from lightmind.graph import AtomicOp, GraphDelta, Relation, apply_delta
from lightmind.setting import AFFORDANCE_FLAGS, AgentSpec, Holder, ObjectSpec, Placement, SettingRecord, parse_setting

NAMES = ["scepter", "royal crown", "sword", "cloak", "bread", "wine", "chest", "oak table", "apple",
         "lantern", "silver ring", "rope", "shield", "goblet", "basket", "mug of ale"]
AGENTS = ["king", "servant", "knight", "wizard", "thief"]
FLAG_LIST = sorted(AFFORDANCE_FLAGS)


def random_setting(rng: np.random.Generator, max_objects: int = 6) -> SettingRecord:
    a, b = rng.choice(len(AGENTS), 2, replace=False)
    k = int(rng.integers(0, max_objects + 1))
    names = [NAMES[i] for i in rng.choice(len(NAMES), k, replace=False)]
    objects, placements = [], []
    for name in names:
        flags = [f for f in FLAG_LIST if rng.random() < 0.3]
        objects.append(ObjectSpec(name, f"a {name}", frozenset(flags)))
        if rng.random() < 0.9:
            placements.append(Placement(name, list(Holder)[rng.integers(len(Holder))]))
    return SettingRecord("t", "hall", "a hall", AgentSpec(AGENTS[a], "p"), AgentSpec(AGENTS[b]),
                         tuple(objects), tuple(placements))


def random_graph(seed: int, steps: int = 4):
    """A parsed setting advanced by a few random feasible actions of either agent."""
    rng = np.random.default_rng(seed)
    g = parse_setting(random_setting(rng))
    agents = [e.id for e in g.entities if e.kind.value == "agent"]
    for _ in range(int(rng.integers(0, steps + 1))):
        actor = agents[rng.integers(2)]
        options = sorted(enumerate_feasible(actor, g), key=lambda a: (a.verb.value, a.arg1, a.arg2 or -1))
        if not options:
            break
        g = apply_delta(g, effects(options[rng.integers(len(options))], g))
    return g, agents


def random_applicable_delta(g, rng: np.random.Generator, max_ops: int = 6) -> GraphDelta:
    """Random DEL/ADD pairs that keep every invariant: move an object to a new legal holder,
    plus toggles of description/persona edges."""
    ops = []
    cur = g
    for _ in range(int(rng.integers(0, max_ops + 1))):
        objs = [e.id for e in cur.entities if e.kind.value == "object" and not cur.is_consumed(e.id)]
        agents = [e.id for e in cur.entities if e.kind.value == "agent"]
        if not objs:
            break
        o = objs[rng.integers(len(objs))]
        held = cur.holder(o)
        choices = [(Relation.CONTAINS, cur.room)] + [(r, a) for a in agents for r in
                                                    (Relation.CARRYING, Relation.WEARING, Relation.WIELDING)]
        rel, new = choices[rng.integers(len(choices))]
        step = []
        if held is not None:
            if held == (rel, new):
                continue
            step.append(AtomicOp.delete(held[1], o, held[0]))
        step.append(AtomicOp.add(new, o, rel))
        cur = apply_delta(cur, step)
        ops.extend(step)
    return GraphDelta(ops)


class MockScorerServer:
    """Local HTTP utility scorer; ``mode`` picks the reply: ok, malformed, slow, error, flaky."""

    def __init__(self, mode="ok", delay=0.5):
        import http.server
        import json
        import threading

        self.mode, self.delay, self.hits = mode, delay, 0
        outer = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                import time
                outer.hits += 1
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                mode = outer.mode
                if mode == "flaky":
                    mode = "error" if outer.hits < 3 else "ok"
                if mode == "slow":
                    time.sleep(outer.delay)
                if mode == "error":
                    self.send_response(503)
                    self.end_headers()
                    return
                if mode == "malformed":
                    payload = b'{"scores": [1.0, "high"]}'
                else:
                    # prefer the longest candidate; deterministic and easy to predict
                    payload = json.dumps({"scores": [float(len(c)) for c in body["candidates"]]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                try:
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # the client gave up (timeout path)

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.server.block_on_close = False
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


# acceptance criterion outcomes, printed by the terminal-summary hook in conftest
RESULTS: dict = {}


class criterion:
    """Context manager recording one acceptance criterion as PASS or FAIL with a detail string."""

    def __init__(self, number: int, title: str):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc_type is None else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        RESULTS[self.number] = f"criterion {self.number:>2} {status}: {self.title} | {detail}"
        print(RESULTS[self.number])
        return False
