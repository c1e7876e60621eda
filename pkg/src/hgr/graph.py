"""Three-level semantic role graphs: one event node, action nodes, entity nodes.

Spans are half-open token intervals ``[start, end)``.
"""

from __future__ import annotations

import difflib
import json
import logging
import re
from dataclasses import dataclass, field

import jsonschema

log = logging.getLogger(__name__)

ROLES = (
    "Event", "Action", "ARG0", "ARG1", "ARG2", "ARG3", "ARG4",
    "ARGM-LOC", "ARGM-MNR", "ARGM-TMP", "ARGM-DIR", "ARGM-ADV", "OTHERS",
)
ROLE_INDEX = {r: i for i, r in enumerate(ROLES)}
NUM_ROLES = len(ROLES)
LEVELS = ("event", "action", "entity")


class GraphError(ValueError):
    """Invalid graph, frame or document. ``path`` locates the problem (JSON path or frame)."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def normalize_role(role):
    if role in ROLE_INDEX:
        return role
    log.warning("unknown semantic role %r mapped to OTHERS", role)
    return "OTHERS"


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(sentence):
    """Lowercase; split on whitespace and punctuation; drop punctuation."""
    return _TOKEN_RE.findall(sentence.lower())


@dataclass(frozen=True)
class Node:
    id: int
    level: str
    span: tuple[int, int]
    role: str


@dataclass(frozen=True)
class Edge:
    child: int
    parent: int
    role: str


@dataclass
class SrlFrame:
    """One predicate: the verb's token index and its ``((start, end), role)`` arguments."""

    verb: int
    args: list = field(default_factory=list)


@dataclass
class SemanticRoleGraph:
    tokens: list[str]
    nodes: list[Node]
    edges: list[Edge]

    @property
    def event(self):
        return next(n for n in self.nodes if n.level == "event")

    @property
    def actions(self):
        return [n for n in self.nodes if n.level == "action"]

    @property
    def entities(self):
        return [n for n in self.nodes if n.level == "entity"]

    def parent_of(self, node_id):
        for e in self.edges:
            if e.child == node_id:
                return e.parent
        return None

    def neighbors(self):
        """Undirected adjacency by node id, self excluded."""
        nb = {n.id: set() for n in self.nodes}
        for e in self.edges:
            nb[e.child].add(e.parent)
            nb[e.parent].add(e.child)
        return {k: sorted(v) for k, v in nb.items()}

    def text(self, node):
        return " ".join(self.tokens[node.span[0]:node.span[1]])

    def validate(self):
        """Raise GraphError on the first violated structural invariant."""
        N = len(self.tokens)
        if N == 0:
            raise GraphError("no tokens", "$.tokens")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids", "$.nodes")
        by_id = {n.id: n for n in self.nodes}
        events = [n for n in self.nodes if n.level == "event"]
        if len(events) != 1:
            raise GraphError(f"expected exactly one event node, found {len(events)}", "$.nodes")
        ev = events[0]
        if ev.role != "Event" or tuple(ev.span) != (0, N):
            raise GraphError("event node must have role Event and span all tokens", f"$.nodes[{ids.index(ev.id)}]")
        for k, n in enumerate(self.nodes):
            if n.level not in LEVELS:
                raise GraphError(f"unknown level {n.level!r}", f"$.nodes[{k}].level")
            if n.role not in ROLE_INDEX:
                raise GraphError(f"unknown role {n.role!r}", f"$.nodes[{k}].role")
            s, e = n.span
            if not 0 <= s < e <= N:
                raise GraphError(f"span {list(n.span)} empty or outside [0, {N}]", f"$.nodes[{k}].span")
        out = {}
        for k, e in enumerate(self.edges):
            if e.child not in by_id or e.parent not in by_id:
                raise GraphError("edge references a missing node", f"$.edges[{k}]")
            if e.child in out:
                raise GraphError(f"node {e.child} has more than one parent edge", f"$.edges[{k}]")
            out[e.child] = e
        for k, n in enumerate(self.nodes):
            if n.level == "event":
                if n.id in out:
                    raise GraphError("event node cannot have a parent", f"$.nodes[{k}]")
                continue
            e = out.get(n.id)
            if e is None:
                raise GraphError(f"{n.level} node {n.id} has no parent edge", f"$.nodes[{k}]")
            parent = by_id[e.parent]
            if n.level == "action" and (parent.level != "event" or e.role != "Action" or n.role != "Action"):
                raise GraphError("action nodes attach to the event node with role Action", f"$.nodes[{k}]")
            if n.level == "entity" and (parent.level != "action" or e.role != n.role or e.role in ("Event", "Action")):
                raise GraphError("entity nodes attach to one action node with their semantic role", f"$.nodes[{k}]")
        return self

    def node_roles(self):
        return [n.role for n in self.nodes]


def build_graph(tokens, frames):
    """Assemble the event/action/entity graph from SRL frames.

    Node order: event, actions by verb position, entities by (action, span
    start). An argument filling roles for several verbs becomes one entity
    node per role. With no frames a single action node spanning the whole
    sentence is emitted.
    """
    tokens = list(tokens)
    N = len(tokens)
    if N == 0:
        raise GraphError("empty token list")
    for fi, fr in enumerate(frames):
        if not 0 <= fr.verb < N:
            raise GraphError(f"verb index {fr.verb} outside [0, {N})", f"frame[{fi}]")
        spans = []
        for ai, (span, _role) in enumerate(fr.args):
            s, e = span
            if not 0 <= s < e <= N:
                raise GraphError(f"argument span {list(span)} empty or outside [0, {N}]", f"frame[{fi}].args[{ai}]")
            spans.append((s, e))
        spans.sort()
        for (s1, e1), (s2, _e2) in zip(spans, spans[1:]):
            if s2 < e1:
                raise GraphError("overlapping argument spans", f"frame[{fi}]")

    nodes = [Node(0, "event", (0, N), "Event")]
    edges = []
    if not frames:
        nodes.append(Node(1, "action", (0, N), "Action"))
        edges.append(Edge(1, 0, "Action"))
        return SemanticRoleGraph(tokens, nodes, edges)

    ordered = sorted(frames, key=lambda f: f.verb)
    action_ids = []
    for fr in ordered:
        nid = len(nodes)
        nodes.append(Node(nid, "action", (fr.verb, fr.verb + 1), "Action"))
        edges.append(Edge(nid, 0, "Action"))
        action_ids.append(nid)
    for aid, fr in zip(action_ids, ordered):
        for (s, e), role in sorted(fr.args, key=lambda a: (a[0][0], a[0][1])):
            role = normalize_role(role)
            nid = len(nodes)
            nodes.append(Node(nid, "entity", (int(s), int(e)), role))
            edges.append(Edge(nid, aid, role))
    return SemanticRoleGraph(tokens, nodes, edges)


# -- JSON -----------------------------------------------------------------------

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["tokens", "nodes", "edges"],
    "properties": {
        "tokens": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "level", "span", "role"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "level": {"enum": list(LEVELS)},
                    "span": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                    "role": {"type": "string"},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["child", "parent", "role"],
                "properties": {
                    "child": {"type": "integer"},
                    "parent": {"type": "integer"},
                    "role": {"type": "string"},
                },
            },
        },
    },
}


def graph_to_dict(g):
    return {
        "tokens": list(g.tokens),
        "nodes": [{"id": n.id, "level": n.level, "span": list(n.span), "role": n.role} for n in g.nodes],
        "edges": [{"child": e.child, "parent": e.parent, "role": e.role} for e in g.edges],
    }


def graph_from_dict(doc):
    try:
        jsonschema.validate(doc, GRAPH_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise GraphError(exc.message, exc.json_path) from None
    nodes = [Node(n["id"], n["level"], tuple(n["span"]), normalize_role(n["role"])) for n in doc["nodes"]]
    edges = [Edge(e["child"], e["parent"], normalize_role(e["role"])) for e in doc["edges"]]
    return SemanticRoleGraph(list(doc["tokens"]), nodes, edges).validate()


def serialize_graph(g):
    return json.dumps(graph_to_dict(g), separators=(",", ":"))


def parse_graph(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed JSON: {exc}", "$") from None
    return graph_from_dict(doc)


# -- rule-based parsing of the synthetic grammar ------------------------------------

class ParseError(GraphError):
    pass


def _chunk(tokens, grammar):
    """Greedy longest-match of grammar phrases; yields (category, payload, start, end)."""
    table = grammar.phrase_table()
    longest = max(len(k) for k in table)
    out, i = [], 0
    while i < len(tokens):
        for n in range(min(longest, len(tokens) - i), 0, -1):
            hit = table.get(tuple(tokens[i:i + n]))
            if hit is not None:
                out.append((hit[0], hit[1], i, i + n))
                i += n
                break
        else:
            out.append(("?", tokens[i], i, i + 1))
            i += 1
    return out


_MODIFIERS = (("DIR", "ARGM-DIR"), ("MNR", "ARGM-MNR"), ("LOC", "ARGM-LOC"))


def _nearest_template(cats, grammar):
    seq = " ".join(cats)
    best = max(grammar.TEMPLATES, key=lambda t: difflib.SequenceMatcher(None, seq, t).ratio())
    return best


def rule_parse(sentence, grammar):
    """Parse a sentence of the synthetic grammar into ``(tokens, frames)``.

    Clause shape: ``NP [AUX] VERB [NP] [DIR] [MNR] [LOC]``, further clauses
    ``and [then] VERB [NP] [DIR] [MNR] [LOC]`` sharing the first NP as agent.
    A verbless ``NP MOD+`` fragment parses to zero frames.
    """
    tokens = tokenize(sentence)
    chunks = _chunk(tokens, grammar)
    cats = [c[0] for c in chunks]

    def fail(why):
        raise ParseError(f"{why}; sentence {sentence!r} has shape '{' '.join(cats)}', "
                         f"nearest template '{_nearest_template(cats, grammar)}'")

    if not chunks:
        fail("empty sentence")
    if "?" in cats:
        bad = [c[1] for c in chunks if c[0] == "?"]
        fail(f"unknown words {bad}")
    pos = 0

    def peek(*want):
        return pos < len(chunks) and chunks[pos][0] in want

    if not peek("NP"):
        fail("sentence must start with a noun phrase")
    agent = chunks[pos][2:]
    pos += 1
    frames = []
    first = True
    while pos < len(chunks):
        tmp = None
        if not first:
            if not peek("AND"):
                fail("expected 'and' between clauses")
            pos += 1
            if peek("THEN"):
                tmp = chunks[pos][2:]
                pos += 1
        elif peek("AUX"):
            pos += 1
            if not peek("VERB"):
                fail("expected a verb after the auxiliary")
        if not peek("VERB"):
            if first and frames == [] and all(c in ("DIR", "MNR", "LOC") for c in cats[pos:]) and pos < len(chunks):
                return tokens, []
            fail("expected a verb")
        verb = chunks[pos][2]
        pos += 1
        args = [(agent, "ARG0")]
        if tmp is not None:
            args.append((tmp, "ARGM-TMP"))
        if peek("NP"):
            args.append((chunks[pos][2:], "ARG1"))
            pos += 1
        for cat, role in _MODIFIERS:
            if peek(cat):
                args.append((chunks[pos][2:], role))
                pos += 1
        frames.append(SrlFrame(verb, sorted(args)))
        first = False
    if not frames:
        fail("no clause found")
    return tokens, frames
