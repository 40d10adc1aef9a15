"""Parser for a small Cypher-flavored query language, lowered to GIR.

Grammar::

    query       := matchClause+ ("WHERE" expr)? "RETURN" retItem ("," retItem)*
                   ("ORDER" "BY" ordItem ("," ordItem)*)? ("LIMIT" INT)?
    matchClause := "OPTIONAL"? "MATCH" path ("," path)*
    path        := node (edge node)*
    node        := "(" IDENT? (":" IDENT ("|" IDENT)*)? mapProps? ")"
    edge        := "-[" body "]->" | "<-[" body "]-" | "-[" body "]-"
    body        := IDENT? (":" IDENT ("|" IDENT)*)? mapProps? ("*" INT)?
    retItem     := expr ("AS" IDENT)? | aggFn "(" "DISTINCT"? expr ")" ("AS" IDENT)?

Keywords are case-insensitive, identifiers are not. Anonymous elements get
hidden aliases starting with an underscore.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .errors import PlanError, QuerySyntaxError
from .expr import Arith, BoolOp, Compare, Expr, InList, Literal, PropAccess, TagRef, conjoin, eq
from .gir import HOMOMORPHISM, SEMANTICS, AggCall, GirBuilder, GirPlan, PlanHandle, is_hidden
from .graph import TypeConstraint

KEYWORDS = {
    "MATCH", "OPTIONAL", "WHERE", "RETURN", "ORDER", "BY", "LIMIT", "AS", "AND", "OR", "NOT",
    "IN", "DISTINCT", "ASC", "DESC", "TRUE", "FALSE", "NULL",
}
AGG_NAMES = {"COUNT", "SUM", "AVG", "MIN", "MAX", "FIRST"}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<float>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<string>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><>|<=|>=|[()\[\]{}:|,.*\-<>=+/;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # int float string ident kw op eof
    value: Any
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        raw = m.group()
        col = pos - line_start + 1
        if kind == "ws":
            pass
        elif kind == "int":
            tokens.append(Token("int", int(raw), line, col))
        elif kind == "float":
            tokens.append(Token("float", float(raw), line, col))
        elif kind == "string":
            body = raw[1:-1]
            body = re.sub(r"\\(.)", lambda x: {"n": "\n", "t": "\t"}.get(x.group(1), x.group(1)), body)
            tokens.append(Token("string", body, line, col))
        elif kind == "ident":
            if raw.upper() in KEYWORDS:
                tokens.append(Token("kw", raw.upper(), line, col))
            else:
                tokens.append(Token("ident", raw, line, col))
        else:
            tokens.append(Token("op", raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            line_start = pos + raw.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", None, line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class NodePat:
    alias: str | None
    labels: tuple[str, ...] = ()
    props: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class EdgePat:
    alias: str | None
    direction: str  # OUT, IN, BOTH relative to the preceding node
    labels: tuple[str, ...] = ()
    props: tuple[tuple[str, Any], ...] = ()
    length: int | None = None


@dataclass(frozen=True)
class PathPat:
    nodes: tuple[NodePat, ...]
    edges: tuple[EdgePat, ...]


@dataclass(frozen=True)
class MatchClause:
    paths: tuple[PathPat, ...]
    optional: bool = False


@dataclass(frozen=True)
class ReturnItem:
    expr: Expr
    alias: str | None = None
    agg: str | None = None  # COUNT, SUM, ...; COUNT with distinct becomes COUNT_DISTINCT
    distinct: bool = False


@dataclass(frozen=True)
class QueryAst:
    matches: tuple[MatchClause, ...]
    where: Expr | None
    returns: tuple[ReturnItem, ...]
    order_by: tuple[tuple[Expr, bool], ...] = ()
    limit: int | None = None
    positions: dict = field(default_factory=dict, compare=False, hash=False)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self.positions: dict[str, tuple[int, int]] = {}

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        return QuerySyntaxError(message, tok.line, tok.col)

    def at(self, kind: str, value: Any = None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def accept(self, kind: str, value: Any = None) -> Token | None:
        if self.at(kind, value):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, value: Any = None, what: str | None = None) -> Token:
        t = self.accept(kind, value)
        if t is None:
            found = self.tok.value if self.tok.kind != "eof" else "end of input"
            raise self.error(f"expected {what or value or kind}, found {found!r}")
        return t

    def ident(self) -> str:
        t = self.expect("ident", what="identifier")
        self.positions.setdefault(t.value, (t.line, t.col))
        return t.value

    # -- query ------------------------------------------------------------
    def query(self) -> QueryAst:
        matches = []
        while self.at("kw", "MATCH") or self.at("kw", "OPTIONAL"):
            matches.append(self.match_clause())
        if not matches:
            raise self.error("expected MATCH")
        where = None
        if self.accept("kw", "WHERE"):
            where = self.expr()
        self.expect("kw", "RETURN")
        returns = [self.ret_item()]
        while self.accept("op", ","):
            returns.append(self.ret_item())
        order_by = []
        if self.accept("kw", "ORDER"):
            self.expect("kw", "BY")
            order_by.append(self.ord_item())
            while self.accept("op", ","):
                order_by.append(self.ord_item())
        limit = None
        if self.accept("kw", "LIMIT"):
            limit = self.expect("int", what="integer").value
        self.accept("op", ";")
        if not self.at("eof"):
            raise self.error(f"unexpected {self.tok.value!r}")
        return QueryAst(tuple(matches), where, tuple(returns), tuple(order_by), limit, self.positions)

    def match_clause(self) -> MatchClause:
        optional = bool(self.accept("kw", "OPTIONAL"))
        self.expect("kw", "MATCH")
        paths = [self.path()]
        while self.accept("op", ","):
            paths.append(self.path())
        return MatchClause(tuple(paths), optional)

    def path(self) -> PathPat:
        nodes = [self.node()]
        edges = []
        while self.at("op", "-") or self.at("op", "<"):
            edges.append(self.edge())
            nodes.append(self.node())
        return PathPat(tuple(nodes), tuple(edges))

    def labels(self) -> tuple[str, ...]:
        if not self.accept("op", ":"):
            return ()
        out = [self.expect("ident", what="type name").value]
        while self.accept("op", "|"):
            out.append(self.expect("ident", what="type name").value)
        return tuple(out)

    def map_props(self) -> tuple[tuple[str, Any], ...]:
        if not self.accept("op", "{"):
            return ()
        items = []
        if not self.at("op", "}"):
            while True:
                key = self.expect("ident", what="property name").value
                self.expect("op", ":")
                items.append((key, self.literal_value()))
                if not self.accept("op", ","):
                    break
        self.expect("op", "}")
        return tuple(items)

    def node(self) -> NodePat:
        self.expect("op", "(")
        alias = self.ident() if self.at("ident") else None
        labels = self.labels()
        props = self.map_props()
        self.expect("op", ")")
        return NodePat(alias, labels, props)

    def edge(self) -> EdgePat:
        incoming = bool(self.accept("op", "<"))
        self.expect("op", "-")
        self.expect("op", "[")
        alias = self.ident() if self.at("ident") else None
        labels = self.labels()
        props = self.map_props()
        length = None
        star = self.accept("op", "*")
        if star:
            t = self.expect("int", what="path length")
            if t.value < 1:
                raise self.error("path length must be at least 1", t)
            length = t.value
            if props:
                raise self.error("property maps are not allowed on paths", star)
        self.expect("op", "]")
        self.expect("op", "-")
        outgoing = bool(self.accept("op", ">"))
        if incoming and outgoing:
            raise self.error("an edge cannot point both ways")
        direction = "IN" if incoming else ("OUT" if outgoing else "BOTH")
        return EdgePat(alias, direction, labels, props, length)

    def ret_item(self) -> ReturnItem:
        if self.at("ident") and self.tok.value.upper() in AGG_NAMES and self.peek().kind == "op" and self.peek().value == "(":
            func = self.tok.value.upper()
            self.i += 2
            distinct = bool(self.accept("kw", "DISTINCT"))
            e = self.expr()
            self.expect("op", ")")
            alias = self.ident() if self.accept("kw", "AS") else None
            return ReturnItem(e, alias, func, distinct)
        e = self.expr()
        alias = self.ident() if self.accept("kw", "AS") else None
        return ReturnItem(e, alias)

    def ord_item(self) -> tuple[Expr, bool]:
        e = self.expr()
        if self.accept("kw", "DESC"):
            return e, False
        self.accept("kw", "ASC")
        return e, True

    # -- expressions ------------------------------------------------------
    def expr(self) -> Expr:
        left = self.and_expr()
        args = [left]
        while self.accept("kw", "OR"):
            args.append(self.and_expr())
        return args[0] if len(args) == 1 else BoolOp("OR", tuple(args))

    def and_expr(self) -> Expr:
        args = [self.not_expr()]
        while self.accept("kw", "AND"):
            args.append(self.not_expr())
        return args[0] if len(args) == 1 else BoolOp("AND", tuple(args))

    def not_expr(self) -> Expr:
        if self.accept("kw", "NOT"):
            return BoolOp("NOT", (self.not_expr(),))
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        if self.tok.kind == "op" and self.tok.value in ("=", "<>", "<", "<=", ">", ">="):
            op = self.tok.value
            self.i += 1
            return Compare(op, left, self.additive())
        if self.accept("kw", "IN"):
            return InList(left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind == "op" and self.tok.value in ("+", "-"):
            op = self.tok.value
            self.i += 1
            left = Arith(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.value in ("*", "/"):
            op = self.tok.value
            self.i += 1
            left = Arith(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at("op", "-"):
            t = self.tok
            self.i += 1
            inner = self.unary()
            if isinstance(inner, Literal) and isinstance(inner.value, (int, float)) and not isinstance(inner.value, bool):
                return Literal(-inner.value)
            raise self.error("unary minus applies to numeric literals only", t)
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind in ("int", "float", "string") or (t.kind == "kw" and t.value in ("TRUE", "FALSE", "NULL")) or self.at("op", "["):
            return Literal(self.literal_value())
        if self.accept("op", "("):
            e = self.expr()
            self.expect("op", ")")
            return e
        if t.kind == "ident":
            name = self.ident()
            if self.accept("op", "."):
                return PropAccess(name, self.expect("ident", what="property name").value)
            return TagRef(name)
        raise self.error(f"unexpected {t.value if t.kind != 'eof' else 'end of input'!r} in expression")

    def literal_value(self) -> Any:
        t = self.tok
        if self.accept("op", "-"):
            n = self.tok
            if n.kind not in ("int", "float"):
                raise self.error("expected a number after '-'", n)
            self.i += 1
            return -n.value
        if t.kind in ("int", "float", "string"):
            self.i += 1
            return t.value
        if t.kind == "kw" and t.value in ("TRUE", "FALSE"):
            self.i += 1
            return t.value == "TRUE"
        if t.kind == "kw" and t.value == "NULL":
            self.i += 1
            return None
        if self.accept("op", "["):
            items = []
            if not self.at("op", "]"):
                items.append(self.literal_value())
                while self.accept("op", ","):
                    items.append(self.literal_value())
            self.expect("op", "]")
            return tuple(items)
        raise self.error(f"expected a literal, found {t.value!r}")


def parse_ast(text: str) -> QueryAst:
    return _Parser(text).query()


# ---------------------------------------------------------------------------
# lowering


def _constraint(labels: tuple[str, ...]) -> TypeConstraint:
    if not labels:
        return TypeConstraint.all()
    if len(labels) == 1:
        return TypeConstraint.basic(labels[0])
    return TypeConstraint.union(labels)


def _props_predicate(alias: str, props) -> Expr | None:
    return conjoin([eq(alias, k, v) for k, v in props])


def _default_alias(item: ReturnItem, index: int) -> str:
    e = item.expr
    if item.agg is not None:
        func = item.agg.lower() + ("_distinct" if item.distinct else "")
        if isinstance(e, TagRef):
            return f"{func}_{e.tag}"
        if isinstance(e, PropAccess):
            return f"{func}_{e.tag}_{e.prop}"
        return f"{func}_{index}"
    if isinstance(e, TagRef):
        return e.tag
    if isinstance(e, PropAccess):
        return f"{e.tag}_{e.prop}"
    return f"col{index}"


class _Lowerer:
    def __init__(self, ast: QueryAst, semantics: str):
        self.ast = ast
        self.b = GirBuilder(semantics)
        self.counter = 0
        self.kinds: dict[str, str] = {}

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"_{prefix}{self.counter}"

    def error(self, message: str, name: str | None = None) -> QuerySyntaxError:
        line, col = self.ast.positions.get(name, (1, 1)) if name else (1, 1)
        return QuerySyntaxError(message, line, col)

    def declare(self, alias: str, kind: str) -> None:
        prior = self.kinds.get(alias)
        if prior is not None and prior != kind:
            raise self.error(f"alias {alias!r} used as both {prior} and {kind}", alias)
        self.kinds[alias] = kind

    def name_elements(self, clause: MatchClause) -> list[tuple[list[str], list[tuple[str, EdgePat]]]]:
        """Assign aliases to every element of each path."""
        named = []
        for path in clause.paths:
            vs = []
            for n in path.nodes:
                alias = n.alias or self.fresh("n")
                self.declare(alias, "vertex")
                vs.append(alias)
            es = []
            for e in path.edges:
                kind = "path" if e.length is not None else "edge"
                alias = e.alias or self.fresh("p" if kind == "path" else "e")
                if e.alias is not None and e.alias in self.kinds:
                    raise self.error(f"{kind} alias {alias!r} is bound more than once", alias)
                self.declare(alias, kind)
                es.append((alias, e))
            named.append((vs, es))
        return named

    def clause(self, clause: MatchClause) -> tuple[PlanHandle, set[str]]:
        named = self.name_elements(clause)
        # split paths into connected groups; each group is one pattern
        groups: list[list[int]] = []
        for i, (vs, _) in enumerate(named):
            touching = [g for g in groups if any(set(vs) & set(named[j][0]) for j in g)]
            merged = [i]
            for g in touching:
                merged.extend(g)
                groups.remove(g)
            groups.append(sorted(merged))
        handles = []
        for g in groups:
            pb = self.b.pattern_start()
            for idx in g:
                vs, es = named[idx]
                path = clause.paths[idx]
                node = path.nodes[0]
                pb.get_v(None, vs[0], _constraint(node.labels), predicate=_props_predicate(vs[0], node.props))
                for k, (ealias, e) in enumerate(es):
                    nxt = path.nodes[k + 1]
                    opt = {"OUT": "DST", "IN": "SRC", "BOTH": "OTHER"}[e.direction]
                    if e.length is None:
                        pb.expand_e(vs[k], ealias, _constraint(e.labels), e.direction, _props_predicate(ealias, e.props))
                    else:
                        pb.expand_path(vs[k], ealias, e.length, _constraint(e.labels), e.direction)
                    pb.get_v(ealias, vs[k + 1], _constraint(nxt.labels), opt, _props_predicate(vs[k + 1], nxt.props))
            handles.append((pb.pattern_end(), {a for idx in g for a in named[idx][0]} | {a for idx in g for a, _ in named[idx][1]}))
        handle, aliases = handles[0]
        for h, al in handles[1:]:
            handle = self.b.join(handle, h, [], "INNER")
            aliases |= al
        return handle, aliases

    def lower(self) -> GirPlan:
        ast = self.ast
        if ast.matches[0].optional:
            raise self.error("the first MATCH clause cannot be OPTIONAL")
        acc, bound = self.clause(ast.matches[0])
        for m in ast.matches[1:]:
            h, aliases = self.clause(m)
            keys = sorted(a for a in aliases & bound if not is_hidden(a))
            acc = self.b.join(acc, h, keys, "LEFT_OUTER" if m.optional else "INNER")
            bound |= aliases
        visible = {a for a in bound if not is_hidden(a)}
        if ast.where is not None:
            self.check_tags(ast.where, visible)
            acc = acc.select(ast.where)
        items = []
        for i, item in enumerate(ast.returns):
            self.check_tags(item.expr, visible)
            items.append((item, item.alias or _default_alias(item, i)))
        seen = set()
        for _, alias in items:
            if alias in seen:
                raise self.error(f"duplicate return alias {alias!r}", alias)
            seen.add(alias)
        has_agg = any(item.agg for item, _ in items)
        out_aliases = {alias for _, alias in items}
        order_keys = []
        pre_order = False
        for e, asc in ast.order_by:
            match = next((alias for item, alias in items if item.agg is None and item.expr == e), None)
            if match is None:
                match = next((alias for item, alias in items if item.agg is not None and isinstance(e, TagRef) and e.tag == alias), None)
            if match is not None:
                order_keys.append((TagRef(match), asc))
            elif e.tags() <= out_aliases:
                order_keys.append((e, asc))
            elif not has_agg and e.tags() <= visible:
                pre_order = True
                order_keys.append((e, asc))
            else:
                bad = sorted(e.tags() - out_aliases)
                raise self.error(f"ORDER BY refers to unknown alias {bad[0]!r}", bad[0])
        try:
            if pre_order:
                # keys need pattern aliases: sort before projecting (projection keeps order)
                acc = acc.order(self.pre_order_keys(order_keys, items))
            if has_agg:
                keys = [(item.expr, alias) for item, alias in items if item.agg is None]
                aggs = []
                for item, alias in items:
                    if item.agg is None:
                        continue
                    func = item.agg
                    if item.distinct:
                        if func != "COUNT":
                            raise self.error(f"DISTINCT is only supported with COUNT, not {func}")
                        func = "COUNT_DISTINCT"
                    aggs.append(AggCall(func, item.expr, alias))
                acc = acc.group(keys, aggs)
            else:
                acc = acc.project([(item.expr, alias) for item, alias in items])
            if order_keys and not pre_order:
                acc = acc.order(order_keys)
            if ast.limit is not None:
                acc = acc.limit(ast.limit)
            return acc.build()
        except PlanError as exc:
            raise QuerySyntaxError(str(exc), 1, 1) from exc

    def pre_order_keys(self, keys, items):
        out = []
        for e, asc in keys:
            if isinstance(e, TagRef):
                source = next((item.expr for item, alias in items if alias == e.tag), None)
                if source is not None:
                    e = source
            out.append((e, asc))
        return out

    def check_tags(self, e: Expr, visible: set[str]) -> None:
        for tag in sorted(e.tags()):
            if tag not in visible:
                raise self.error(f"unknown alias {tag!r}", tag)


def parse(text: str, semantics: str = HOMOMORPHISM) -> GirPlan:
    """Parse a query and lower it to a GIR plan."""
    if semantics not in SEMANTICS:
        raise ValueError(f"unknown semantics {semantics!r}")
    return _Lowerer(parse_ast(text), semantics).lower()


# ---------------------------------------------------------------------------
# printing


def _format_value(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return "'" + v.replace("\\", "\\\\").replace("'", "\\'") + "'"
    if isinstance(v, tuple):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    return repr(v)


def format_expr(e: Expr) -> str:
    if isinstance(e, Literal):
        return _format_value(e.value)
    if isinstance(e, TagRef):
        return e.tag
    if isinstance(e, PropAccess):
        return f"{e.tag}.{e.prop}"
    if isinstance(e, Compare):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, Arith):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, InList):
        return f"({format_expr(e.item)} IN {format_expr(e.options)})"
    if isinstance(e, BoolOp):
        if e.op == "NOT":
            return f"(NOT {format_expr(e.args[0])})"
        return "(" + f" {e.op} ".join(format_expr(a) for a in e.args) + ")"
    raise TypeError(f"cannot format {e!r}")


def _format_body(alias, labels, props) -> str:
    out = alias or ""
    if labels:
        out += ":" + "|".join(labels)
    if props:
        out += " {" + ", ".join(f"{k}: {_format_value(v)}" for k, v in props) + "}"
    return out


def format_query(ast: QueryAst) -> str:
    """Render an AST back to query text (debugging aid; round-trips through parse)."""
    lines = []
    for m in ast.matches:
        paths = []
        for p in m.paths:
            text = "(" + _format_body(p.nodes[0].alias, p.nodes[0].labels, p.nodes[0].props) + ")"
            for e, n in zip(p.edges, p.nodes[1:]):
                body = _format_body(e.alias, e.labels, e.props)
                if e.length is not None:
                    body += f"*{e.length}"
                if e.direction == "OUT":
                    text += f"-[{body}]->"
                elif e.direction == "IN":
                    text += f"<-[{body}]-"
                else:
                    text += f"-[{body}]-"
                text += "(" + _format_body(n.alias, n.labels, n.props) + ")"
            paths.append(text)
        lines.append(("OPTIONAL " if m.optional else "") + "MATCH " + ", ".join(paths))
    if ast.where is not None:
        lines.append("WHERE " + format_expr(ast.where))
    items = []
    for r in ast.returns:
        if r.agg:
            text = f"{r.agg.lower()}({'DISTINCT ' if r.distinct else ''}{format_expr(r.expr)})"
        else:
            text = format_expr(r.expr)
        if r.alias:
            text += f" AS {r.alias}"
        items.append(text)
    lines.append("RETURN " + ", ".join(items))
    if ast.order_by:
        lines.append("ORDER BY " + ", ".join(format_expr(e) + ("" if asc else " DESC") for e, asc in ast.order_by))
    if ast.limit is not None:
        lines.append(f"LIMIT {ast.limit}")
    return "\n".join(lines)
