"""Bracketed intent/slot parse trees and their action-sequence form.

A tree is an intent node (label prefixed ``IN:``) whose children are slot
nodes (``SL:``).  A slot either anchors a contiguous span of query tokens or
wraps nested intent nodes.  Trees round-trip through two encodings:

* canonical bracket text, e.g. ``(IN:GET_DIRECTIONS (SL:DESTINATION "work" ) )``
* a flat action sequence of OPEN / COPY / CLOSE steps produced by depth-first
  traversal, which is what the decoder emits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

INTENT_PREFIX = "IN:"
SLOT_PREFIX = "SL:"


class TreeError(Exception):
    pass


class EmptyInput(TreeError):
    pass


class UnbalancedBrackets(TreeError):
    pass


class UnknownSpan(TreeError):
    """A quoted span does not occur in the query at or after the cursor."""


class MalformedSequence(TreeError):
    """An action sequence does not describe a well-formed tree."""


@dataclass(frozen=True)
class ParseTree:
    """One node of an intent/slot tree.

    ``span`` holds the token indices a slot leaf covers (contiguous,
    increasing) and ``words`` the corresponding query tokens; both are empty
    for intent nodes and for slots that wrap nested intents.
    """

    label: str
    span: tuple[int, ...] = ()
    words: tuple[str, ...] = ()
    children: tuple["ParseTree", ...] = field(default=())

    def __post_init__(self):
        if len(self.span) != len(self.words):
            raise ValueError("span and words must align")
        if self.span and any(b - a != 1 for a, b in zip(self.span, self.span[1:])):
            raise ValueError("slot span must be contiguous")
        if self.span and self.children:
            raise ValueError("a slot carries either a span or nested intents")

    @property
    def kind(self) -> str:
        return "intent" if self.label.startswith(INTENT_PREFIX) else "slot"

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)


def intent(label: str, *children: ParseTree) -> ParseTree:
    return ParseTree(label=label, children=tuple(children))


def slot(label: str, span_start: int, words: tuple[str, ...] | list[str]) -> ParseTree:
    words = tuple(words)
    return ParseTree(
        label=label,
        span=tuple(range(span_start, span_start + len(words))),
        words=words,
    )


def nested_slot(label: str, *children: ParseTree) -> ParseTree:
    return ParseTree(label=label, children=tuple(children))


# --- actions ---------------------------------------------------------------


@dataclass(frozen=True)
class Open:
    label: str


@dataclass(frozen=True)
class Close:
    pass


@dataclass(frozen=True)
class Copy:
    index: int


Action = Open | Close | Copy
ActionSequence = tuple[Action, ...]

CLOSE = Close()


# --- bracket text ----------------------------------------------------------

_TOKEN_RE = re.compile(r'\(\s*([^\s()"]+)|(\))|"([^"]*)"|(\S)')


def _lex(text: str):
    """Yield ('open', label) / ('close', None) / ('quote', words) items."""
    pos = 0
    while True:
        m = _TOKEN_RE.search(text, pos)
        if m is None:
            return
        pos = m.end()
        if m.group(1) is not None:
            yield ("open", m.group(1))
        elif m.group(2) is not None:
            yield ("close", None)
        elif m.group(3) is not None:
            yield ("quote", tuple(m.group(3).split()))
        else:
            raise UnbalancedBrackets(f"stray character {m.group(4)!r} in bracket text")


def _find_span(words: tuple[str, ...], query_tokens: list[str] | tuple[str, ...], cursor: int) -> int:
    n = len(words)
    for start in range(cursor, len(query_tokens) - n + 1):
        if tuple(query_tokens[start : start + n]) == words:
            return start
    raise UnknownSpan(f"span {' '.join(words)!r} not found in query after token {cursor}")


def parse_bracketed(text: str, query_tokens: list[str] | tuple[str, ...]) -> ParseTree:
    """Parse canonical bracket text into a tree over ``query_tokens``.

    Quoted spans are resolved to token indices by leftmost contiguous match,
    scanning forward from the end of the previous span so that indices are
    strictly increasing in depth-first order.
    """
    if not text.strip():
        raise EmptyInput("empty bracket text")
    items = list(_lex(text))
    if not items:
        raise EmptyInput("no brackets found")

    stack: list[tuple[str, list[ParseTree], list[tuple[int, tuple[str, ...]]]]] = []
    root: ParseTree | None = None
    cursor = 0
    for op, value in items:
        if root is not None:
            raise UnbalancedBrackets("content after the root bracket closed")
        if op == "open":
            if not stack and not value.startswith(INTENT_PREFIX):
                raise UnbalancedBrackets(f"root must be an intent, got {value!r}")
            if stack:
                parent_label = stack[-1][0]
                if parent_label.startswith(INTENT_PREFIX) and not value.startswith(SLOT_PREFIX):
                    raise UnbalancedBrackets(f"intent child must be a slot, got {value!r}")
                if parent_label.startswith(SLOT_PREFIX) and not value.startswith(INTENT_PREFIX):
                    raise UnbalancedBrackets(f"slot child must be an intent, got {value!r}")
            stack.append((value, [], []))
        elif op == "quote":
            if not stack or not stack[-1][0].startswith(SLOT_PREFIX):
                raise UnbalancedBrackets("quoted span outside a slot")
            if not value:
                raise UnknownSpan("empty quoted span")
            start = _find_span(value, query_tokens, cursor)
            cursor = start + len(value)
            stack[-1][2].append((start, value))
        else:  # close
            if not stack:
                raise UnbalancedBrackets("close bracket with no open bracket")
            label, kids, spans = stack.pop()
            if spans and kids:
                raise UnbalancedBrackets(f"slot {label!r} mixes a span with nested intents")
            if len(spans) > 1:
                raise UnbalancedBrackets(f"slot {label!r} has more than one quoted span")
            if label.startswith(SLOT_PREFIX) and not spans and not kids:
                raise UnbalancedBrackets(f"slot {label!r} is empty")
            if spans:
                node = slot(label, spans[0][0], spans[0][1])
            else:
                node = ParseTree(label=label, children=tuple(kids))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
    if root is None:
        raise UnbalancedBrackets("unclosed bracket")
    return root


def serialize(tree: ParseTree) -> str:
    """Render canonical bracket text (single spaces, a space before every ')')."""
    parts: list[str] = []

    def emit(node: ParseTree):
        parts.append("(" + node.label)
        if node.words:
            parts.append('"' + " ".join(node.words) + '"')
        for child in node.children:
            emit(child)
        parts.append(")")

    emit(tree)
    return " ".join(parts)


# --- action sequences ------------------------------------------------------


def linearize(tree: ParseTree) -> ActionSequence:
    """Flatten by depth-first traversal: OPEN, copies/children, CLOSE."""
    actions: list[Action] = []

    def emit(node: ParseTree):
        actions.append(Open(node.label))
        for idx in node.span:
            actions.append(Copy(idx))
        for child in node.children:
            emit(child)
        actions.append(CLOSE)

    emit(tree)
    return tuple(actions)


def delinearize(actions: ActionSequence, query_tokens: list[str] | tuple[str, ...]) -> ParseTree:
    """Rebuild the unique tree whose linearization is ``actions``.

    Raises MalformedSequence for anything a valid tree cannot produce:
    unbalanced brackets, a copy outside any slot or out of query bounds,
    non-contiguous spans, or token indices that do not increase depth-first.
    """
    if not actions:
        raise MalformedSequence("empty action sequence")
    if not isinstance(actions[0], Open):
        raise MalformedSequence("copy or close before the first open")
    stack: list[tuple[str, list[ParseTree], list[int]]] = []
    root: ParseTree | None = None
    last_index = -1
    for act in actions:
        if root is not None:
            raise MalformedSequence("actions continue after the root closed")
        if isinstance(act, Open):
            if not stack and not act.label.startswith(INTENT_PREFIX):
                raise MalformedSequence(f"root must open an intent, got {act.label!r}")
            if stack:
                parent = stack[-1][0]
                if parent.startswith(INTENT_PREFIX) and not act.label.startswith(SLOT_PREFIX):
                    raise MalformedSequence("intents may only contain slots")
                if parent.startswith(SLOT_PREFIX) and not act.label.startswith(INTENT_PREFIX):
                    raise MalformedSequence("slots may only contain intents")
            stack.append((act.label, [], []))
        elif isinstance(act, Copy):
            if not stack:
                raise MalformedSequence("copy before first open")
            if not stack[-1][0].startswith(SLOT_PREFIX):
                raise MalformedSequence("copy directly under an intent")
            if not 0 <= act.index < len(query_tokens):
                raise MalformedSequence(f"copy index {act.index} outside the query")
            span = stack[-1][2]
            if span and act.index != span[-1] + 1:
                raise MalformedSequence("slot span must be contiguous")
            if act.index <= last_index:
                raise MalformedSequence("token indices must increase depth-first")
            span.append(act.index)
            last_index = act.index
        else:  # Close
            if not stack:
                raise MalformedSequence("close with no open bracket")
            label, kids, span = stack.pop()
            if span and kids:
                raise MalformedSequence("slot mixes copied tokens with nested intents")
            if label.startswith(SLOT_PREFIX) and not span and not kids:
                raise MalformedSequence("empty slot")
            if span:
                node = slot(label, span[0], tuple(query_tokens[i] for i in span))
            else:
                node = ParseTree(label=label, children=tuple(kids))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
    if root is None:
        raise MalformedSequence("unbalanced action sequence")
    return root


def truncate_balanced(actions: ActionSequence) -> ActionSequence | None:
    """Prefix of ``actions`` up to the first CLOSE that balances the root.

    Returns None when the sequence never balances (or starts badly); used to
    salvage model decodes that run past the end of the tree.
    """
    if not actions or not isinstance(actions[0], Open):
        return None
    depth = 0
    for i, act in enumerate(actions):
        if isinstance(act, Open):
            depth += 1
        elif isinstance(act, Close):
            depth -= 1
            if depth == 0:
                return tuple(actions[: i + 1])
            if depth < 0:
                return None
    return None


def exact_match(a: ParseTree, b: ParseTree) -> bool:
    """Whole-tree equality: labels, structure, child order, span words.

    Span *positions* are ignored so that copying a repeated word from a
    different occurrence still renders (and therefore scores) identically;
    this keeps exact_match equivalent to canonical-string equality.
    """
    if a.label != b.label or a.words != b.words or len(a.children) != len(b.children):
        return False
    return all(exact_match(x, y) for x, y in zip(a.children, b.children))


def top_intent(tree: ParseTree) -> str:
    return tree.label
