"""Mini-language for restriction predicates and launch-geometry arithmetic.

Grammar (C-style precedence, loosest first)::

    or_expr   := and_expr ("||" and_expr)*
    and_expr  := cmp_expr ("&&" cmp_expr)*
    cmp_expr  := add_expr (("=="|"!="|"<="|">="|"<"|">") add_expr)*
    add_expr  := mul_expr (("+"|"-") mul_expr)*
    mul_expr  := unary (("*"|"/"|"%") unary)*
    unary     := ("!"|"-") unary | primary
    primary   := INT | "true" | "false" | STRING | IDENT
               | FUNC "(" or_expr ("," or_expr)* ")" | "(" or_expr ")"

Values are 64-bit signed integers, booleans, and strings; there is no float
arithmetic. Integer division truncates toward zero and ``%`` follows
truncated division (C semantics). Overflow past 64 bits is a hard error.
``&&`` and ``||`` short-circuit, so guards like ``b == 0 || a / b > 2``
are safe. Strings support only ``==`` and ``!=`` against another string.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Union

Value = Union[int, bool, str]
Env = Mapping[str, Value]

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1

FUNCTIONS = {"ceil_div": 2, "min": 2, "max": 2}


class ParseError(Exception):
    """Syntax error; ``offset`` is the byte position in the source text."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(Exception):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[IntLit, BoolLit, StrLit, Ident, Unary, Binary, Call]


# ---------------------------------------------------------------------------
# Tokenizer

_TWO_CHAR_OPS = ("==", "!=", "<=", ">=", "&&", "||")
_ONE_CHAR_OPS = "+-*/%<>!(),"


@dataclass(frozen=True)
class _Token:
    kind: str  # "int" | "ident" | "str" | "op" | "eof"
    text: str
    offset: int


def _tokenize(text: str) -> Iterator[_Token]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            yield _Token("int", text[start:i], start)
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            yield _Token("ident", text[start:i], start)
            continue
        if c == '"':
            start = i
            i += 1
            out = []
            while True:
                if i >= n:
                    raise ParseError("unterminated string literal", start)
                ch = text[i]
                if ch == "\\":
                    if i + 1 >= n:
                        raise ParseError("unterminated string escape", i)
                    esc = text[i + 1]
                    if esc not in ('"', "\\"):
                        raise ParseError(f"unsupported escape '\\{esc}'", i)
                    out.append(esc)
                    i += 2
                elif ch == '"':
                    i += 1
                    break
                else:
                    out.append(ch)
                    i += 1
            yield _Token("str", "".join(out), start)
            continue
        if text[i : i + 2] in _TWO_CHAR_OPS:
            yield _Token("op", text[i : i + 2], i)
            i += 2
            continue
        if c in _ONE_CHAR_OPS:
            yield _Token("op", c, i)
            i += 1
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    yield _Token("eof", "", n)


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, text: str) -> None:
        self._tokens = list(_tokenize(text))
        self._pos = 0

    @property
    def _cur(self) -> _Token:
        return self._tokens[self._pos]

    def _advance(self) -> _Token:
        tok = self._cur
        self._pos += 1
        return tok

    def _expect_op(self, op: str) -> None:
        tok = self._cur
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected '{op}'", tok.offset)
        self._advance()

    def parse(self) -> Expr:
        node = self._or_expr()
        tok = self._cur
        if tok.kind != "eof":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.offset)
        return node

    def _or_expr(self) -> Expr:
        node = self._and_expr()
        while self._cur.kind == "op" and self._cur.text == "||":
            self._advance()
            node = Binary("||", node, self._and_expr())
        return node

    def _and_expr(self) -> Expr:
        node = self._cmp_expr()
        while self._cur.kind == "op" and self._cur.text == "&&":
            self._advance()
            node = Binary("&&", node, self._cmp_expr())
        return node

    def _cmp_expr(self) -> Expr:
        node = self._add_expr()
        while self._cur.kind == "op" and self._cur.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self._advance().text
            node = Binary(op, node, self._add_expr())
        return node

    def _add_expr(self) -> Expr:
        node = self._mul_expr()
        while self._cur.kind == "op" and self._cur.text in ("+", "-"):
            op = self._advance().text
            node = Binary(op, node, self._mul_expr())
        return node

    def _mul_expr(self) -> Expr:
        node = self._unary()
        while self._cur.kind == "op" and self._cur.text in ("*", "/", "%"):
            op = self._advance().text
            node = Binary(op, node, self._unary())
        return node

    def _unary(self) -> Expr:
        tok = self._cur
        if tok.kind == "op" and tok.text in ("-", "!"):
            self._advance()
            return Unary(tok.text, self._unary())
        return self._primary()

    def _primary(self) -> Expr:
        tok = self._cur
        if tok.kind == "int":
            self._advance()
            value = int(tok.text)
            if value > I64_MAX:
                raise ParseError("integer literal out of 64-bit range", tok.offset)
            return IntLit(value)
        if tok.kind == "str":
            self._advance()
            return StrLit(tok.text)
        if tok.kind == "ident":
            self._advance()
            if tok.text == "true":
                return BoolLit(True)
            if tok.text == "false":
                return BoolLit(False)
            if self._cur.kind == "op" and self._cur.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function '{tok.text}'", tok.offset)
                self._advance()
                args = [self._or_expr()]
                while self._cur.kind == "op" and self._cur.text == ",":
                    self._advance()
                    args.append(self._or_expr())
                self._expect_op(")")
                if len(args) != FUNCTIONS[tok.text]:
                    raise ParseError(
                        f"'{tok.text}' takes {FUNCTIONS[tok.text]} arguments, got {len(args)}",
                        tok.offset,
                    )
                return Call(tok.text, tuple(args))
            return Ident(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self._or_expr()
            self._expect_op(")")
            return node
        if tok.kind == "eof":
            raise ParseError("unexpected end of input", tok.offset)
        raise ParseError(f"unexpected token {tok.text!r}", tok.offset)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing

_PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 3,
    "<=": 3,
    ">": 3,
    ">=": 3,
    "+": 4,
    "-": 4,
    "*": 5,
    "/": 5,
    "%": 5,
}
_UNARY_PRECEDENCE = 6


def to_text(expr: Expr) -> str:
    """Render an expression; ``parse(to_text(e))`` is structurally ``e``."""
    return _print(expr, 0)


def _print(expr: Expr, parent_prec: int) -> str:
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, BoolLit):
        return "true" if expr.value else "false"
    if isinstance(expr, StrLit):
        body = expr.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{body}"'
    if isinstance(expr, Ident):
        return expr.name
    if isinstance(expr, Call):
        args = ", ".join(_print(a, 0) for a in expr.args)
        return f"{expr.name}({args})"
    if isinstance(expr, Unary):
        inner = _print(expr.operand, _UNARY_PRECEDENCE)
        # "- -x" must not print as "--x"; keep a space between unary minuses.
        sep = " " if expr.op == "-" and inner.startswith("-") else ""
        text = f"{expr.op}{sep}{inner}"
        return f"({text})" if parent_prec > _UNARY_PRECEDENCE else text
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        left = _print(expr.left, prec)
        right = _print(expr.right, prec + 1)
        text = f"{left} {expr.op} {right}"
        return f"({text})" if prec < parent_prec else text
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# Evaluation


def _is_int(v: Value) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_i64(value: int, what: str) -> int:
    if not I64_MIN <= value <= I64_MAX:
        raise EvalError(f"64-bit overflow in {what}")
    return value


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _require_int(v: Value, op: str) -> int:
    if not _is_int(v):
        raise EvalError(f"'{op}' requires integer operands, got {type(v).__name__}")
    return v


def _require_bool(v: Value, op: str) -> bool:
    if not isinstance(v, bool):
        raise EvalError(f"'{op}' requires boolean operands, got {type(v).__name__}")
    return v


def evaluate(expr: Expr, env: Env) -> Value:
    """Evaluate ``expr`` under ``env``. Pure; unbound identifiers are errors."""
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, BoolLit):
        return expr.value
    if isinstance(expr, StrLit):
        return expr.value
    if isinstance(expr, Ident):
        try:
            return env[expr.name]
        except KeyError:
            raise EvalError(f"unbound identifier '{expr.name}'") from None
    if isinstance(expr, Unary):
        if expr.op == "!":
            return not _require_bool(evaluate(expr.operand, env), "!")
        value = _require_int(evaluate(expr.operand, env), "unary -")
        return _check_i64(-value, "negation")
    if isinstance(expr, Call):
        args = [evaluate(a, env) for a in expr.args]
        return _call(expr.name, args)
    if isinstance(expr, Binary):
        return _binary(expr, env)
    raise TypeError(f"not an expression node: {expr!r}")


def _call(name: str, args: list[Value]) -> Value:
    a, b = (_require_int(v, name) for v in args)
    if name == "ceil_div":
        if a < 0 or b <= 0:
            raise EvalError(f"ceil_div requires a >= 0 and b > 0, got ({a}, {b})")
        return _check_i64((a + b - 1) // b, "ceil_div")
    if name == "min":
        return min(a, b)
    if name == "max":
        return max(a, b)
    raise EvalError(f"unknown function '{name}'")


def _binary(expr: Binary, env: Env) -> Value:
    op = expr.op
    if op in ("&&", "||"):
        left = _require_bool(evaluate(expr.left, env), op)
        if op == "&&" and not left:
            return False
        if op == "||" and left:
            return True
        return _require_bool(evaluate(expr.right, env), op)

    left = evaluate(expr.left, env)
    right = evaluate(expr.right, env)

    if op in ("==", "!="):
        if _is_int(left) and _is_int(right):
            pass
        elif isinstance(left, str) and isinstance(right, str):
            pass
        else:
            raise EvalError(
                f"'{op}' requires two integers or two strings, got "
                f"{type(left).__name__} and {type(right).__name__}"
            )
        return (left == right) if op == "==" else (left != right)

    a = _require_int(left, op)
    b = _require_int(right, op)
    if op == "+":
        return _check_i64(a + b, "addition")
    if op == "-":
        return _check_i64(a - b, "subtraction")
    if op == "*":
        return _check_i64(a * b, "multiplication")
    if op == "/":
        if b == 0:
            raise EvalError("division by zero")
        return _check_i64(_trunc_div(a, b), "division")
    if op == "%":
        if b == 0:
            raise EvalError("modulo by zero")
        return a - _trunc_div(a, b) * b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise EvalError(f"unknown operator '{op}'")


def evaluate_bool(expr: Expr, env: Env) -> bool:
    value = evaluate(expr, env)
    if not isinstance(value, bool):
        raise EvalError(f"expression is not boolean-typed (got {type(value).__name__})")
    return value


def evaluate_int(expr: Expr, env: Env) -> int:
    value = evaluate(expr, env)
    if not _is_int(value):
        raise EvalError(f"expression is not integer-typed (got {type(value).__name__})")
    return value


def identifiers(expr: Expr) -> set[str]:
    """All identifier names appearing in the tree."""
    out: set[str] = set()
    _collect(expr, out)
    return out


def _collect(expr: Expr, out: set[str]) -> None:
    if isinstance(expr, Ident):
        out.add(expr.name)
    elif isinstance(expr, Unary):
        _collect(expr.operand, out)
    elif isinstance(expr, Binary):
        _collect(expr.left, out)
        _collect(expr.right, out)
    elif isinstance(expr, Call):
        for a in expr.args:
            _collect(a, out)
