"""Parser and evaluator tests, including print/parse round-trip properties."""

import itertools

import pytest
from hypothesis import given, strategies as st

from kltune.expr import (
    Binary,
    BoolLit,
    Call,
    EvalError,
    Ident,
    IntLit,
    ParseError,
    StrLit,
    Unary,
    evaluate,
    evaluate_bool,
    identifiers,
    parse,
    to_text,
)


class TestParsing:
    def test_precedence_mul_over_add(self):
        assert parse("1 + 2 * 3") == Binary("+", IntLit(1), Binary("*", IntLit(2), IntLit(3)))

    def test_block_product_restriction(self):
        # hand-parsed against the grammar: * is left-associative, <= binds looser
        want = Binary(
            "<=",
            Binary("*", Binary("*", Ident("block_x"), Ident("block_y")), Ident("block_z")),
            IntLit(1024),
        )
        assert parse("block_x * block_y * block_z <= 1024") == want

    def test_unbalanced_paren_reports_offset(self):
        text = "ceil_div(problem_x, block_x"
        with pytest.raises(ParseError) as exc:
            parse(text)
        # error surfaces at end-of-input, i.e. where the ')' was expected
        assert exc.value.offset == len(text)

    def test_parentheses_group(self):
        assert parse("(1 + 2) * 3") == Binary("*", Binary("+", IntLit(1), IntLit(2)), IntLit(3))

    def test_comparisons_bind_looser_than_arithmetic(self):
        assert parse("a + 1 < b - 2") == Binary(
            "<", Binary("+", Ident("a"), IntLit(1)), Binary("-", Ident("b"), IntLit(2))
        )

    def test_logic_precedence(self):
        # && over ||, comparisons over both
        got = parse("a < 1 || b < 2 && c < 3")
        assert got == Binary(
            "||",
            Binary("<", Ident("a"), IntLit(1)),
            Binary("&&", Binary("<", Ident("b"), IntLit(2)), Binary("<", Ident("c"), IntLit(3))),
        )

    def test_unary_chain(self):
        assert parse("!!x") == Unary("!", Unary("!", Ident("x")))
        assert parse("- - 3") == Unary("-", Unary("-", IntLit(3)))

    def test_calls(self):
        assert parse("ceil_div(n, 32)") == Call("ceil_div", (Ident("n"), IntLit(32)))
        assert parse("min(a, max(b, c))") == Call(
            "min", (Ident("a"), Call("max", (Ident("b"), Ident("c"))))
        )

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown function"):
            parse("floor_div(a, b)")

    def test_wrong_arity(self):
        with pytest.raises(ParseError, match="takes 2 arguments"):
            parse("min(a, b, c)")

    def test_string_literals(self):
        assert parse('"XYZ"') == StrLit("XYZ")
        assert parse('"a\\"b\\\\c"') == StrLit('a"b\\c')
        with pytest.raises(ParseError, match="unterminated"):
            parse('"abc')

    def test_bool_keywords(self):
        assert parse("true") == BoolLit(True)
        assert parse("false && x") == Binary("&&", BoolLit(False), Ident("x"))

    def test_trailing_garbage(self):
        with pytest.raises(ParseError):
            parse("1 + 2 )")

    def test_bad_character(self):
        with pytest.raises(ParseError) as exc:
            parse("a ^ b")
        assert exc.value.offset == 2

    def test_huge_literal_rejected(self):
        parse(str(2**63 - 1))
        with pytest.raises(ParseError, match="64-bit"):
            parse(str(2**63))


class TestEvaluation:
    def test_ceil_div(self):
        assert evaluate(parse("ceil_div(1000, 512)"), {}) == 2
        assert evaluate(parse("ceil_div(1024, 512)"), {}) == 2
        assert evaluate(parse("ceil_div(0, 512)"), {}) == 0

    def test_ceil_div_domain(self):
        with pytest.raises(EvalError, match="ceil_div"):
            evaluate(parse("ceil_div(-1, 4)"), {})
        with pytest.raises(EvalError, match="ceil_div"):
            evaluate(parse("ceil_div(4, 0)"), {})
        with pytest.raises(EvalError, match="ceil_div"):
            evaluate(parse("ceil_div(4, -2)"), {})

    def test_env_lookup(self):
        assert evaluate(parse("block_x * tile_x"), {"block_x": 256, "tile_x": 2}) == 512

    def test_unbound_identifier(self):
        with pytest.raises(EvalError, match="unbound identifier 'tile_x'"):
            evaluate(parse("tile_x"), {})

    def test_string_or_int_mix(self):
        env = {"unravel": "ZYX", "tile_z": 4}
        assert evaluate(parse('unravel == "XYZ" || tile_z > 1'), env) is True

    def test_string_comparison_truth_table(self):
        # oracle: enumerate all (unravel, tile_z) combinations independently
        e = parse('unravel == "XYZ" || tile_z > 1')
        for unravel, tile_z in itertools.product(("XYZ", "ZYX", "YXZ"), (1, 2, 4)):
            want = (unravel == "XYZ") or (tile_z > 1)
            assert evaluate(e, {"unravel": unravel, "tile_z": tile_z}) is want

    @pytest.mark.parametrize(
        "a,b,q,r",
        [
            (7, 2, 3, 1),
            (-7, 2, -3, -1),
            (7, -2, -3, 1),
            (-7, -2, 3, -1),
            (1, 1024, 0, 1),
        ],
    )
    def test_truncated_division(self, a, b, q, r):
        env = {"a": a, "b": b}
        assert evaluate(parse("a / b"), env) == q
        assert evaluate(parse("a % b"), env) == r

    def test_division_by_zero(self):
        with pytest.raises(EvalError, match="division by zero"):
            evaluate(parse("1 / 0"), {})
        with pytest.raises(EvalError, match="modulo by zero"):
            evaluate(parse("1 % 0"), {})

    def test_overflow_checked(self):
        big = 2**62
        with pytest.raises(EvalError, match="overflow"):
            evaluate(parse("a * 4"), {"a": big})
        with pytest.raises(EvalError, match="overflow"):
            evaluate(parse("a + a"), {"a": 2**63 - 1})
        with pytest.raises(EvalError, match="overflow"):
            evaluate(parse("-a"), {"a": -(2**63)})
        with pytest.raises(EvalError, match="overflow"):
            evaluate(parse("a / b"), {"a": -(2**63), "b": -1})

    def test_type_errors(self):
        with pytest.raises(EvalError):
            evaluate(parse("1 + true"), {})
        with pytest.raises(EvalError):
            evaluate(parse('"a" < "b"'), {})
        with pytest.raises(EvalError):
            evaluate(parse('1 == "1"'), {})
        with pytest.raises(EvalError):
            evaluate(parse("true == false"), {})
        with pytest.raises(EvalError):
            evaluate(parse("1 && true"), {})
        with pytest.raises(EvalError):
            evaluate(parse("!5"), {})

    def test_short_circuit_guards(self):
        # the whole point of short-circuiting: division guards never trap
        env = {"b": 0, "a": 10}
        assert evaluate(parse("b == 0 || a / b > 1"), env) is True
        assert evaluate(parse("b != 0 && a / b > 1"), env) is False

    def test_min_max(self):
        assert evaluate(parse("min(3, -2)"), {}) == -2
        assert evaluate(parse("max(3, -2)"), {}) == 3

    def test_evaluate_bool_rejects_int(self):
        with pytest.raises(EvalError, match="not boolean-typed"):
            evaluate_bool(parse("1 + 1"), {})

    def test_identifiers_collection(self):
        e = parse("ceil_div(problem_x, block_x * tile_x) > min(a, 2)")
        assert identifiers(e) == {"problem_x", "block_x", "tile_x", "a"}

    def test_purity(self):
        e = parse("a * 3 + b % 5")
        env = {"a": 11, "b": 7}
        assert evaluate(e, env) == evaluate(e, env) == 35


# ---------------------------------------------------------------------------
# Round-trip property: print -> parse is the identity on structure


_names = st.sampled_from(["a", "b", "block_x", "tile_y", "unravel", "_v1", "n0"])


def _exprs():
    leaves = st.one_of(
        st.integers(min_value=0, max_value=2**63 - 1).map(IntLit),
        st.booleans().map(BoolLit),
        st.text(alphabet=st.characters(codec="ascii", exclude_categories=("Cc",)), max_size=8).map(StrLit),
        _names.map(Ident),
    )

    def extend(children):
        ops = st.sampled_from(["+", "-", "*", "/", "%", "==", "!=", "<", "<=", ">", ">=", "&&", "||"])
        return st.one_of(
            st.tuples(ops, children, children).map(lambda t: Binary(*t)),
            st.tuples(st.sampled_from(["-", "!"]), children).map(lambda t: Unary(*t)),
            st.tuples(st.sampled_from(["ceil_div", "min", "max"]), children, children).map(
                lambda t: Call(t[0], (t[1], t[2]))
            ),
        )

    return st.recursive(leaves, extend, max_leaves=25)


@given(_exprs())
def test_print_parse_round_trip(tree):
    assert parse(to_text(tree)) == tree
