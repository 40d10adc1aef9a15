"""Expression trees evaluated over record bindings.

Records are plain dicts mapping an alias to a bound value. Graph elements are
bound as :class:`VertexRef`, :class:`EdgeRef` or :class:`PathValue`. Property
values prefetched by a scan are cached under ``"alias.prop"`` keys, which never
collide with aliases because identifiers cannot contain dots.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Mapping

from .errors import EvaluationError
from .graph import DataGraph, variant_of


@dataclass(frozen=True, order=True)
class VertexRef:
    id: int

    def __repr__(self) -> str:
        return f"v{self.id}"


@dataclass(frozen=True, order=True)
class EdgeRef:
    id: int

    def __repr__(self) -> str:
        return f"e{self.id}"


@dataclass(frozen=True, order=True)
class PathValue:
    vertices: tuple[int, ...]
    edges: tuple[int, ...]


class Expr:
    """Base expression node."""

    def evaluate(self, record: Mapping[str, Any], graph: DataGraph) -> Any:
        raise NotImplementedError

    def children(self) -> tuple[Expr, ...]:
        return ()

    def walk(self) -> Iterator[Expr]:
        yield self
        for child in self.children():
            yield from child.walk()

    def tags(self) -> set[str]:
        """Aliases this expression reads."""
        out = set()
        for node in self.walk():
            if isinstance(node, (TagRef, PropAccess)):
                out.add(node.tag)
        return out

    def properties(self) -> set[tuple[str, str]]:
        return {(n.tag, n.prop) for n in self.walk() if isinstance(n, PropAccess)}

    def rename(self, mapping: Mapping[str, str]) -> Expr:
        raise NotImplementedError

    def to_json(self) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class Literal(Expr):
    value: Any

    def evaluate(self, record, graph):
        return self.value

    def rename(self, mapping):
        return self

    def to_json(self):
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        return {"lit": value}

    def __str__(self) -> str:
        if isinstance(self.value, str):
            return repr(self.value)
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        if isinstance(self.value, tuple):
            return "[" + ", ".join(str(Literal(v)) for v in self.value) + "]"
        return str(self.value)


@dataclass(frozen=True)
class TagRef(Expr):
    tag: str

    def evaluate(self, record, graph):
        try:
            return record[self.tag]
        except KeyError:
            raise EvaluationError(f"unknown tag {self.tag!r}") from None

    def rename(self, mapping):
        return TagRef(mapping.get(self.tag, self.tag))

    def to_json(self):
        return {"tag": self.tag}

    def __str__(self) -> str:
        return self.tag


@dataclass(frozen=True)
class PropAccess(Expr):
    tag: str
    prop: str

    def evaluate(self, record, graph):
        cached = record.get(f"{self.tag}.{self.prop}", _MISSING)
        if cached is not _MISSING:
            return cached
        try:
            target = record[self.tag]
        except KeyError:
            raise EvaluationError(f"unknown tag {self.tag!r}") from None
        return property_of(target, self.prop, graph)

    def rename(self, mapping):
        return PropAccess(mapping.get(self.tag, self.tag), self.prop)

    def to_json(self):
        return {"prop": [self.tag, self.prop]}

    def __str__(self) -> str:
        return f"{self.tag}.{self.prop}"


_MISSING = object()


def property_of(target: Any, prop: str, graph: DataGraph) -> Any:
    if target is None:
        return None
    if isinstance(target, VertexRef):
        props = graph.vertices[target.id].props
    elif isinstance(target, EdgeRef):
        props = graph.edges[target.id].props
    else:
        raise EvaluationError(f"cannot read property {prop!r} of {target!r}")
    try:
        return props[prop]
    except KeyError:
        raise EvaluationError(f"{target!r} has no property {prop!r}") from None


def _strict_pair(a: Any, b: Any, op: str) -> None:
    va, vb = variant_of(a), variant_of(b)
    if va != vb:
        raise EvaluationError(f"cannot apply {op} to {va} and {vb}")


def comparable(value: Any) -> Any:
    """Graph refs compare by id; property values compare as themselves."""
    if isinstance(value, (VertexRef, EdgeRef)):
        return value.id
    return value


_COMPARATORS: dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq,
    "<>": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, record, graph):
        a = self.left.evaluate(record, graph)
        b = self.right.evaluate(record, graph)
        if a is None or b is None:
            return None
        if isinstance(a, (VertexRef, EdgeRef, PathValue)) or isinstance(b, (VertexRef, EdgeRef, PathValue)):
            if type(a) is not type(b):
                raise EvaluationError(f"cannot compare {a!r} with {b!r}")
            return _COMPARATORS[self.op](a, b)
        _strict_pair(a, b, self.op)
        return _COMPARATORS[self.op](a, b)

    def children(self):
        return (self.left, self.right)

    def rename(self, mapping):
        return Compare(self.op, self.left.rename(mapping), self.right.rename(mapping))

    def to_json(self):
        return {"cmp": self.op, "args": [self.left.to_json(), self.right.to_json()]}

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class BoolOp(Expr):
    """AND / OR over two or more operands, NOT over one. Three-valued with nulls."""

    op: str
    args: tuple[Expr, ...]

    def evaluate(self, record, graph):
        if self.op == "NOT":
            value = self.args[0].evaluate(record, graph)
            if value is None:
                return None
            _require_bool(value)
            return not value
        values = []
        for arg in self.args:
            value = arg.evaluate(record, graph)
            if value is not None:
                _require_bool(value)
            values.append(value)
        if self.op == "AND":
            if any(v is False for v in values):
                return False
            return None if any(v is None for v in values) else True
        if any(v is True for v in values):
            return True
        return None if any(v is None for v in values) else False

    def children(self):
        return self.args

    def rename(self, mapping):
        return BoolOp(self.op, tuple(a.rename(mapping) for a in self.args))

    def to_json(self):
        return {"bool": self.op, "args": [a.to_json() for a in self.args]}

    def __str__(self) -> str:
        if self.op == "NOT":
            return f"(NOT {self.args[0]})"
        return "(" + f" {self.op} ".join(str(a) for a in self.args) + ")"


def _require_bool(value: Any) -> None:
    if not isinstance(value, bool):
        raise EvaluationError(f"expected boolean, got {value!r}")


@dataclass(frozen=True)
class InList(Expr):
    item: Expr
    options: Expr

    def evaluate(self, record, graph):
        value = self.item.evaluate(record, graph)
        options = self.options.evaluate(record, graph)
        if value is None or options is None:
            return None
        if not isinstance(options, tuple):
            raise EvaluationError(f"IN expects a list, got {options!r}")
        for option in options:
            _strict_pair(value, option, "IN")
        return value in options

    def children(self):
        return (self.item, self.options)

    def rename(self, mapping):
        return InList(self.item.rename(mapping), self.options.rename(mapping))

    def to_json(self):
        return {"in": [self.item.to_json(), self.options.to_json()]}

    def __str__(self) -> str:
        return f"({self.item} IN {self.options})"


def _div(a, b):
    if b == 0:
        raise EvaluationError("division by zero")
    if isinstance(a, int):
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    return a / b


_ARITH: dict[str, Callable[[Any, Any], Any]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": _div,
}


@dataclass(frozen=True)
class Arith(Expr):
    op: str
    left: Expr
    right: Expr

    def evaluate(self, record, graph):
        a = self.left.evaluate(record, graph)
        b = self.right.evaluate(record, graph)
        if a is None or b is None:
            return None
        _strict_pair(a, b, self.op)
        kind = variant_of(a)
        if kind not in ("int", "float") and not (kind == "string" and self.op == "+"):
            raise EvaluationError(f"cannot apply {self.op} to {kind}")
        return _ARITH[self.op](a, b)

    def children(self):
        return (self.left, self.right)

    def rename(self, mapping):
        return Arith(self.op, self.left.rename(mapping), self.right.rename(mapping))

    def to_json(self):
        return {"arith": self.op, "args": [self.left.to_json(), self.right.to_json()]}

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


def expr_from_json(data: Any) -> Expr:
    if "lit" in data:
        value = data["lit"]
        return Literal(tuple(value) if isinstance(value, list) else value)
    if "tag" in data:
        return TagRef(data["tag"])
    if "prop" in data:
        return PropAccess(*data["prop"])
    if "cmp" in data:
        left, right = data["args"]
        return Compare(data["cmp"], expr_from_json(left), expr_from_json(right))
    if "bool" in data:
        return BoolOp(data["bool"], tuple(expr_from_json(a) for a in data["args"]))
    if "in" in data:
        item, options = data["in"]
        return InList(expr_from_json(item), expr_from_json(options))
    if "arith" in data:
        left, right = data["args"]
        return Arith(data["arith"], expr_from_json(left), expr_from_json(right))
    raise ValueError(f"not an expression: {data!r}")


def conjuncts(expr: Expr | None) -> list[Expr]:
    """Flatten nested ANDs."""
    if expr is None:
        return []
    if isinstance(expr, BoolOp) and expr.op == "AND":
        out = []
        for arg in expr.args:
            out.extend(conjuncts(arg))
        return out
    return [expr]


def conjoin(parts: list[Expr]) -> Expr | None:
    parts = [p for p in parts if p is not None]
    flat: list[Expr] = []
    for part in parts:
        flat.extend(conjuncts(part))
    if not flat:
        return None
    if len(flat) == 1:
        return flat[0]
    return BoolOp("AND", tuple(flat))


def eq(tag: str, prop: str, value: Any) -> Expr:
    return Compare("=", PropAccess(tag, prop), Literal(value))


def holds(expr: Expr | None, record: Mapping[str, Any], graph: DataGraph) -> bool:
    """Predicate check with SQL-style null handling (null filters out)."""
    if expr is None:
        return True
    value = expr.evaluate(record, graph)
    if value is None:
        return False
    _require_bool(value)
    return value
