"""Single-line reward expressions over ``state`` and ``agent_feats[i]``.

Grammar, loosest binding first::

    or_expr   := and_expr ('or' and_expr)*
    and_expr  := not_expr ('and' not_expr)*
    not_expr  := 'not' not_expr | sum
    sum       := product (('+' | '-') product)*
    product   := unary ('*' unary)*
    unary     := '-' unary | atom
    atom      := NUMBER | 'state' | 'agent_feats' '[' INT ']' | '(' or_expr ')'

``and``/``or`` return one of their operands and ``not`` yields 1 or 0, the
same as the scripting language the generator writes in.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np


class DslError(ValueError):
    pass


class DslSyntaxError(DslError):
    def __init__(self, message: str, position: int, source: str = ""):
        super().__init__(f"{message} at position {position}")
        self.position = position
        self.source = source


class FeatureIndexError(DslError):
    pass


class DisallowedNameError(DslSyntaxError):
    pass


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class State:
    pass


@dataclass(frozen=True)
class Feat:
    index: int


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Not:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * and or
    left: "Node"
    right: "Node"


Node = Union[Num, State, Feat, Neg, Not, BinOp]

_PREC = {"or": 1, "and": 2, "not": 3, "+": 4, "-": 4, "*": 5, "neg": 6, "atom": 7}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Not):
        return _PREC["not"]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|//|[-+*/()\[\]%<>=!,.]))"
)
_KEYWORDS = {"and", "or", "not", "state", "agent_feats"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> List[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            col = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise DslSyntaxError(f"unexpected character {src[col]!r}", col, src)
        kind = m.lastgroup
        text = m.group(kind)
        start = m.start(kind)
        toks.append(_Tok(kind, text, start))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, n_features: Optional[int]):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.n_features = n_features

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        raise DslSyntaxError(msg, tok.pos, self.src)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind == "num":
            self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return self.take()

    def is_word(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "name" and t.text == word

    def parse(self) -> Node:
        node = self.or_expr()
        t = self.peek()
        if t.kind != "end":
            self.error(f"unexpected {t.text!r}")
        return node

    def or_expr(self) -> Node:
        node = self.and_expr()
        while self.is_word("or"):
            self.take()
            node = BinOp("or", node, self.and_expr())
        return node

    def and_expr(self) -> Node:
        node = self.not_expr()
        while self.is_word("and"):
            self.take()
            node = BinOp("and", node, self.not_expr())
        return node

    def not_expr(self) -> Node:
        if self.is_word("not"):
            self.take()
            return Not(self.not_expr())
        return self.sum()

    def sum(self) -> Node:
        node = self.product()
        while self.peek().text in ("+", "-") and self.peek().kind == "op":
            op = self.take().text
            node = BinOp(op, node, self.product())
        return node

    def product(self) -> Node:
        node = self.unary()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text == "*":
                self.take()
                node = BinOp("*", node, self.unary())
            elif t.kind == "op" and t.text in ("/", "//", "**", "%"):
                self.error(f"operator {t.text!r} is not allowed")
            else:
                return node

    def unary(self) -> Node:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return Neg(self.unary())
        if t.kind == "op" and t.text == "+":
            self.error("unary '+' is not allowed")
        return self.atom()

    def atom(self) -> Node:
        t = self.take()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "op" and t.text == "(":
            node = self.or_expr()
            self.expect(")")
            return node
        if t.kind == "name":
            if t.text == "state":
                return State()
            if t.text == "agent_feats":
                self.expect("[")
                it = self.take()
                if it.kind != "num" or not it.text.isdigit():
                    self.error("feature index must be a non-negative integer literal", it)
                idx = int(it.text)
                self.expect("]")
                if self.n_features is not None and idx >= self.n_features:
                    raise FeatureIndexError(
                        f"agent_feats[{idx}] out of range for {self.n_features} features (position {it.pos})"
                    )
                return Feat(idx)
            if t.text == "return":
                raise DisallowedNameError("'return' is not allowed; write a bare expression", t.pos, self.src)
            if t.text in _KEYWORDS:
                self.error(f"unexpected keyword {t.text!r}", t)
            if self.peek().text == "(":
                raise DisallowedNameError(f"function call {t.text!r}(...) is not allowed", t.pos, self.src)
            raise DisallowedNameError(f"unknown identifier {t.text!r}", t.pos, self.src)
        if t.kind == "end":
            self.error("unexpected end of input", t)
        self.error(f"unexpected {t.text!r}", t)


# -- public API ----------------------------------------------------------------


@dataclass(frozen=True)
class RewardExpression:
    source: str
    ast: Node

    @property
    def feature_indices(self) -> frozenset:
        return frozenset(n.index for n in walk(self.ast) if isinstance(n, Feat))

    def render(self) -> str:
        return render(self.ast)

    def __str__(self) -> str:
        return self.source


def parse(source: str, n_features: Optional[int] = None) -> RewardExpression:
    """Parse ``source``; with ``n_features`` every feature index is bounds-checked."""
    if source is None or not source.strip():
        raise DslSyntaxError("empty expression", 0, source or "")
    ast = _Parser(source, n_features).parse()
    return RewardExpression(source.strip(), ast)


def walk(node: Node) -> Iterator[Node]:
    yield node
    if isinstance(node, (Neg, Not)):
        yield from walk(node.operand)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def render(node: Node) -> str:
    """Canonical source text; parses back to the same tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, State):
        return "state"
    if isinstance(node, Feat):
        return f"agent_feats[{node.index}]"
    if isinstance(node, Neg):
        inner = render(node.operand)
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Not):
        inner = render(node.operand)
        if _prec(node.operand) < _PREC["not"]:
            inner = f"({inner})"
        return f"not {inner}"
    p = _PREC[node.op]
    left, right = render(node.left), render(node.right)
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def _eval(node: Node, state: float, feats) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, State):
        return state
    if isinstance(node, Feat):
        return float(feats[node.index])
    if isinstance(node, Neg):
        return -_eval(node.operand, state, feats)
    if isinstance(node, Not):
        return 0.0 if _eval(node.operand, state, feats) != 0 else 1.0
    op = node.op
    if op == "and":
        x = _eval(node.left, state, feats)
        return _eval(node.right, state, feats) if x != 0 else x
    if op == "or":
        x = _eval(node.left, state, feats)
        return x if x != 0 else _eval(node.right, state, feats)
    x = _eval(node.left, state, feats)
    y = _eval(node.right, state, feats)
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    return x * y


def evaluate(expr: RewardExpression, state: float, feats: Sequence[float]) -> float:
    return float(_eval(expr.ast, float(state), feats))


def _veval(node: Node, state: np.ndarray, feats: np.ndarray) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(state.shape, node.value)
    if isinstance(node, State):
        return state
    if isinstance(node, Feat):
        return feats[..., node.index]
    if isinstance(node, Neg):
        return -_veval(node.operand, state, feats)
    if isinstance(node, Not):
        return (_veval(node.operand, state, feats) == 0).astype(float)
    x = _veval(node.left, state, feats)
    y = _veval(node.right, state, feats)
    if node.op == "and":
        return np.where(x != 0, y, x)
    if node.op == "or":
        return np.where(x != 0, x, y)
    if node.op == "+":
        return x + y
    if node.op == "-":
        return x - y
    return x * y


def to_reward_table(expr: RewardExpression, instance, n_states: int = 2):
    """Tabulate ``r_i(s)`` for every arm of ``instance``."""
    from .rmab import RewardTable

    F = instance.feature_matrix()
    if expr.feature_indices and max(expr.feature_indices) >= F.shape[1]:
        raise FeatureIndexError("expression uses feature indices beyond the instance feature vector")
    N = F.shape[0]
    states = np.tile(np.arange(n_states, dtype=float), (N, 1))
    vals = _veval(expr.ast, states, F[:, None, :].repeat(n_states, axis=1))
    return RewardTable(np.broadcast_to(vals, (N, n_states)).astype(float))


def is_monotone(expr: RewardExpression, instance) -> bool:
    """True when ``r_i(1) >= r_i(0)`` for every arm."""
    v = to_reward_table(expr, instance).values
    return bool(np.all(v[:, 1] >= v[:, 0]))


# -- candidate pool files ---------------------------------------------------------


@dataclass
class PoolRecord:
    id: int
    source: str
    round: int
    proposal_index: int
    monotone_flag: bool

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "source": self.source, "round": self.round,
             "proposal_index": self.proposal_index, "monotone_flag": self.monotone_flag},
            sort_keys=True,
        )


def write_pool(records: Sequence[PoolRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_pool(path) -> List[PoolRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                d = json.loads(line)
                out.append(PoolRecord(int(d["id"]), d["source"], int(d["round"]),
                                      int(d["proposal_index"]), bool(d["monotone_flag"])))
    return out
