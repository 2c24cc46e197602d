"""
Concrete syntax for logical forms.

Grammar (whitespace insignificant, ``!`` binds tighter than ``&``, ``&`` tighter than ``|``)::

    expr   := term ('|' term)*
    term   := factor ('&' factor)*
    factor := '!' factor | '(' expr ')' | IDENT
    IDENT  := [A-Za-z][A-Za-z0-9_]*
"""
from typing import Iterable

import pyparsing as pp

from src.entity.errors import EmptyFormula, FormulaSyntaxError
from src.entity.models import And, Atom, Formula, Not, Or

# every str.isspace() character; U+3000 is the highest one
_WHITESPACE = "".join(ch for ch in map(chr, range(0x3001)) if ch.isspace())


def _join(kind: type, children: list[Formula]) -> Formula:
    if len(children) == 1:
        return children[0]
    flat = []
    for child in children:
        flat.extend(child.children if isinstance(child, kind) else (child,))
    return kind(tuple(flat))


def _build_grammar() -> pp.ParserElement:
    # '-' stops backtracking once an operator or '(' is consumed, so errors point at the missing operand
    def token(element: pp.ParserElement) -> pp.ParserElement:
        return element.set_whitespace_chars(_WHITESPACE)

    ident = token(pp.Regex(r"[A-Za-z][A-Za-z0-9_]*")).set_name("identifier")
    ident.set_parse_action(lambda t: Atom(t[0]))
    bang, amp, bar, lpar, rpar = (token(pp.Suppress(op)) for op in "!&|()")
    expr = pp.Forward()
    factor = pp.Forward()
    factor <<= (bang - factor).set_parse_action(lambda t: Not(t[0])) | (lpar - expr - rpar) | ident
    term = (factor + pp.ZeroOrMore(amp - factor)).set_parse_action(lambda t: _join(And, list(t)))
    expr <<= (term + pp.ZeroOrMore(bar - term)).set_parse_action(lambda t: _join(Or, list(t)))
    return (expr + token(pp.StringEnd())).parse_with_tabs()


_GRAMMAR = _build_grammar()


def _syntax_error(text: str, error: pp.ParseBaseException) -> FormulaSyntaxError:
    index = error.loc
    if index >= len(text):
        message = "unexpected end of input"
    elif text[index] == ")":
        message = "unbalanced ')'"
    else:
        message = f"unexpected {text[index]!r}"
    return FormulaSyntaxError(message, len(text[:index].encode("utf-8")))


def parse_formula(text: str) -> Formula:
    """
    Parse a logical-form string into its AST.

    Same-operator chains are flattened into n-ary ``And``/``Or`` nodes, so
    ``A & (B & C)`` and ``A & B & C`` give the same tree.

    :param text: The DSL string.
    :type text: str
    :return: The parsed formula.
    :rtype: Formula
    :raises EmptyFormula: If the text is blank.
    :raises FormulaSyntaxError: On malformed input; carries the byte offset.
    """
    if not text or not text.strip():
        raise EmptyFormula("logical form is empty")
    try:
        return _GRAMMAR.parse_string(text)[0]
    except pp.ParseBaseException as e:
        raise _syntax_error(text, e) from None


def atoms_of(formula: Formula) -> tuple[str, ...]:
    """
    Deduplicated predicate identifiers of a formula in first-occurrence order.

    :param formula: The formula.
    :type formula: Formula
    :return: Ordered atom identifiers.
    :rtype: tuple[str, ...]
    """
    return formula.atoms()


def flatten(formula: Formula) -> Formula:
    """Merge nested same-operator ``And``/``Or`` chains."""
    if isinstance(formula, Not):
        return Not(flatten(formula.child))
    if isinstance(formula, (And, Or)):
        return _join(type(formula), [flatten(child) for child in formula.children])
    return formula


def to_nnf(formula: Formula) -> Formula:
    """
    Push negations down to atoms (De Morgan) and drop double negations.

    :param formula: The formula.
    :type formula: Formula
    :return: A logically equivalent formula in negation normal form.
    :rtype: Formula
    """
    return _nnf(formula, negate=False)


def _nnf(formula: Formula, negate: bool) -> Formula:
    if isinstance(formula, Atom):
        return Not(formula) if negate else formula
    if isinstance(formula, Not):
        return _nnf(formula.child, not negate)
    kind = type(formula)
    if negate:
        kind = Or if kind is And else And
    return _join(kind, [_nnf(child, negate) for child in formula.children])


def format_formula(formula: Formula) -> str:
    """
    Print a formula in the DSL, adding only the parentheses precedence requires.

    :param formula: The formula.
    :type formula: Formula
    :return: The DSL text, e.g. ``"A & (B | C)"``.
    :rtype: str
    """
    if isinstance(formula, Atom):
        return formula.id
    if isinstance(formula, Not):
        inner = format_formula(formula.child)
        return f"!{inner}" if isinstance(formula.child, (Atom, Not)) else f"!({inner})"
    if isinstance(formula, And):
        return " & ".join(_wrap(child, (And, Or)) for child in formula.children)
    return " | ".join(_wrap(child, (Or,)) for child in formula.children)


def _wrap(child: Formula, needs_parens: Iterable[type]) -> str:
    text = format_formula(child)
    return f"({text})" if isinstance(child, tuple(needs_parens)) else text

