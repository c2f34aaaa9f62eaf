"""Expression grammar for polynomials in model files.

Accepted syntax: identifiers (generators), integer literals, rational
literals ``p/q``, the imaginary unit ``i``, the formal ``hbar``, operators
``+ - * ^`` and parentheses.  Whitespace is insignificant.  Raising an odd
generator to a power above one is rejected at parse time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .algebra import GradedPolynomial, Signature
from .scalars import Scalar


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass
class _Token:
    kind: str  # NAME | INT | OP | END
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(r"\s*(?:(?P<INT>\d+)|(?P<NAME>[A-Za-z_][A-Za-z0-9_]*)"
                       r"|(?P<OP>[-+*^()/]))")


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            nl = text.count("\n", 0, pos)
            col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            raise ParseError(f"unexpected character {rest[0]!r}", nl + 1, col)
        line += text.count("\n", pos, m.start(1) if m.lastindex else m.end())
        start = m.start(m.lastgroup)
        line = text.count("\n", 0, start) + 1
        line_start = text.rfind("\n", 0, start) + 1
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), line, start - line_start + 1))
        pos = m.end()
    end_line = text.count("\n") + 1
    tokens.append(_Token("END", "", end_line, len(text) - (text.rfind("\n") + 1) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, signature: Signature):
        self.tokens = _tokenize(text)
        self.signature = signature
        self.k = 0

    def peek(self) -> _Token:
        return self.tokens[self.k]

    def advance(self) -> _Token:
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.column)

    def parse(self) -> GradedPolynomial:
        value = self.expr()
        if self.peek().kind != "END":
            self.error(f"unexpected token {self.peek().text!r}")
        return value

    def expr(self) -> GradedPolynomial:
        tok = self.peek()
        negate = False
        while tok.kind == "OP" and tok.text in "+-":
            self.advance()
            if tok.text == "-":
                negate = not negate
            tok = self.peek()
        value = self.term()
        if negate:
            value = -value
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.advance().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> GradedPolynomial:
        value = self.power()
        while True:
            tok = self.peek()
            if tok.kind == "OP" and tok.text == "*":
                self.advance()
                value = value * self.power()
            elif tok.kind == "OP" and tok.text == "/":
                # denominators are integer literals only: p/q and poly/q
                self.advance()
                den = self.rational_den()
                value = value * Scalar.from_rational(Fraction(1, den))
            else:
                return value

    def rational_den(self) -> int:
        tok = self.peek()
        if tok.kind != "INT":
            self.error("expected an integer denominator")
        self.advance()
        den = int(tok.text)
        if den == 0:
            self.error("zero denominator", tok)
        return den

    def power(self) -> GradedPolynomial:
        tok = self.peek()
        neg = False
        while tok.kind == "OP" and tok.text in "+-":
            self.advance()
            if tok.text == "-":
                neg = not neg
            tok = self.peek()
        base, base_gen = self.atom()
        value = base
        if self.peek().kind == "OP" and self.peek().text == "^":
            self.advance()
            etok = self.peek()
            if etok.kind != "INT":
                self.error("expected an integer exponent after '^'")
            self.advance()
            exponent = int(etok.text)
            if base_gen is not None and exponent > 1:
                gen = self.signature.generator(base_gen)
                if gen.parity == 1:
                    self.error(f"odd generator {base_gen!r} raised to power {exponent}",
                               etok)
            value = base ** exponent
        return -value if neg else value

    def atom(self) -> tuple[GradedPolynomial, str | None]:
        """Returns (polynomial, generator-name-if-bare-generator)."""
        tok = self.advance()
        sig = self.signature
        if tok.kind == "INT":
            return GradedPolynomial.constant(sig, int(tok.text)), None
        if tok.kind == "NAME":
            if tok.text == "i":
                return GradedPolynomial.constant(sig, Scalar.i()), None
            if tok.text == "hbar":
                return GradedPolynomial.constant(sig, Scalar.hbar()), None
            if tok.text not in sig.index:
                self.error(f"unknown identifier {tok.text!r}", tok)
            return GradedPolynomial.var(sig, tok.text), tok.text
        if tok.kind == "OP" and tok.text == "(":
            value = self.expr()
            closing = self.advance()
            if closing.kind != "OP" or closing.text != ")":
                self.error("expected ')'", closing)
            return value, None
        self.error(f"unexpected token {tok.text!r}" if tok.text else "unexpected end of input",
                   tok)


def parse_polynomial(text: str, signature: Signature) -> GradedPolynomial:
    """Parse an expression string into a polynomial over the signature."""
    return _Parser(text, signature).parse()
