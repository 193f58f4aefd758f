"""Two-mode prompt template language: parsing and rendering.

Literal mode is plain text with ``{name}`` / ``{name[0]}`` placeholders and
``{{`` / ``}}`` brace escapes. Expression mode is a closed string-expression
language (no host-language evaluation):

    expr        := term ('+' term)*
    term        := primary postfix*
    primary     := STRING | IDENT | '(' expr ')' | '[' expr 'for' IDENT 'in' expr ']'
    postfix     := '[' index-or-slice ']' | '.' METHOD '(' args? ')'
    index-or-slice := INT | INT? ':' INT?          (INT may be negative)
    METHOD      := format | split | join

Values are strings and lists of strings. ``+`` concatenates strings,
``format`` fills positional ``{}`` placeholders, ``split``/``join`` behave
like their usual string methods, indexing and slicing support negative
positions, slices clamp while single indices raise. Recognized string
escapes are ``\\n \\t \\\\ \\' \\"``; an unrecognized escape keeps its
backslash.

Both parse and render errors carry the offending source span.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .errors import TemplateParseError, TemplateRenderError

LITERAL = "literal"
EXPRESSION = "expression"
MODES = (LITERAL, EXPRESSION)

METHODS = ("format", "split", "join")
KEYWORDS = ("for", "in")

Span = tuple[int, int]
Value = Union[str, list]


@dataclass(frozen=True)
class TemplateSpec:
    mode: str
    source: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise TemplateParseError(f"unknown template mode {self.mode!r}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "source": self.source}

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateSpec":
        return cls(mode=d["mode"], source=d["source"])


@dataclass
class ExecutionContext:
    """Variable bindings a template renders against.

    ``response[k]`` / ``wiki_id_title[k]`` hold the output and formatted
    hit list of completed action ``k``; both lists always have equal
    length (the number of completed actions).
    """

    question: str
    response: list[str] = field(default_factory=list)
    wiki_id_title: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.response) != len(self.wiki_id_title):
            raise ValueError("response and wiki_id_title must have equal length")

    @property
    def completed(self) -> int:
        return len(self.response)

    def variables(self) -> dict[str, Value]:
        return {
            "question": self.question,
            "response": list(self.response),
            "wiki_id_title": list(self.wiki_id_title),
        }


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Node:
    span: Span


@dataclass(frozen=True)
class Str(Node):
    value: str


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Concat(Node):
    parts: tuple


@dataclass(frozen=True)
class Index(Node):
    target: Node
    index: int


@dataclass(frozen=True)
class Slice(Node):
    target: Node
    start: int | None
    stop: int | None


@dataclass(frozen=True)
class Call(Node):
    target: Node
    method: str
    args: tuple


@dataclass(frozen=True)
class Comprehension(Node):
    element: Node
    var: str
    source: Node


@dataclass(frozen=True)
class Text(Node):
    value: str


@dataclass(frozen=True)
class Placeholder(Node):
    name: str
    index: int | None


@dataclass(frozen=True)
class TemplateAst:
    mode: str
    source: str
    root: Node | None            # expression mode
    parts: tuple = ()            # literal mode


# ---------------------------------------------------------------------------
# Expression lexer

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    span: Span


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch in "'\"":
            tok, i = _lex_string(source, i)
            tokens.append(tok)
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            j = i + 1
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(_Token("INT", source[i:j], (i, j)))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            kind = word.upper() if word in KEYWORDS else "IDENT"
            tokens.append(_Token(kind, word, (i, j)))
            i = j
            continue
        simple = {"+": "PLUS", "[": "LBRACKET", "]": "RBRACKET", "(": "LPAREN",
                  ")": "RPAREN", ".": "DOT", ":": "COLON", ",": "COMMA"}
        if ch in simple:
            tokens.append(_Token(simple[ch], ch, (i, i + 1)))
            i += 1
            continue
        raise TemplateParseError(f"unexpected character {ch!r}", span=(i, i + 1),
                                 source=source)
    tokens.append(_Token("EOF", "", (n, n)))
    return tokens


def _lex_string(source: str, start: int) -> tuple[_Token, int]:
    quote = source[start]
    n = len(source)
    triple = source.startswith(quote * 3, start)
    delim = quote * 3 if triple else quote
    i = start + len(delim)
    out: list[str] = []
    while i < n:
        if source.startswith(delim, i):
            return _Token("STRING", "".join(out), (start, i + len(delim))), i + len(delim)
        ch = source[i]
        if ch == "\\":
            if i + 1 >= n:
                break
            esc = source[i + 1]
            out.append(_ESCAPES.get(esc, "\\" + esc))
            i += 2
            continue
        if not triple and ch == "\n":
            raise TemplateParseError("newline in single-quoted string",
                                     span=(start, i), source=source)
        out.append(ch)
        i += 1
    raise TemplateParseError("unterminated string literal", span=(start, n),
                             source=source)


# ---------------------------------------------------------------------------
# Expression parser

class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _lex(source)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            self.fail(f"expected {what}, found {tok.value!r}" if tok.kind != "EOF"
                      else f"expected {what}, found end of template", tok)
        return self.next()

    def fail(self, message: str, tok: _Token):
        raise TemplateParseError(message, span=tok.span, source=self.source)

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "EOF":
            self.fail(f"unexpected token {tok.value!r} after expression", tok)
        return node

    def expr(self) -> Node:
        parts = [self.term()]
        while self.peek().kind == "PLUS":
            self.next()
            parts.append(self.term())
        if len(parts) == 1:
            return parts[0]
        return Concat(span=(parts[0].span[0], parts[-1].span[1]), parts=tuple(parts))

    def term(self) -> Node:
        node = self.primary()
        while True:
            tok = self.peek()
            if tok.kind == "LBRACKET":
                node = self.index_or_slice(node)
            elif tok.kind == "DOT":
                node = self.method_call(node)
            else:
                return node

    def primary(self) -> Node:
        tok = self.peek()
        if tok.kind == "STRING":
            self.next()
            return Str(span=tok.span, value=tok.value)
        if tok.kind == "IDENT":
            self.next()
            return Var(span=tok.span, name=tok.value)
        if tok.kind == "LPAREN":
            self.next()
            node = self.expr()
            self.expect("RPAREN", "')'")
            return node
        if tok.kind == "LBRACKET":
            return self.comprehension()
        self.fail(f"expected an expression, found {tok.value!r}"
                  if tok.kind != "EOF" else "expected an expression, found end of template",
                  tok)

    def comprehension(self) -> Node:
        open_tok = self.expect("LBRACKET", "'['")
        element = self.expr()
        self.expect("FOR", "'for'")
        var = self.expect("IDENT", "a loop variable name")
        self.expect("IN", "'in'")
        source = self.expr()
        close = self.expect("RBRACKET", "']'")
        return Comprehension(span=(open_tok.span[0], close.span[1]),
                             element=element, var=var.value, source=source)

    def index_or_slice(self, target: Node) -> Node:
        self.expect("LBRACKET", "'['")
        start: int | None = None
        tok = self.peek()
        if tok.kind == "INT":
            self.next()
            start = int(tok.value)
            if self.peek().kind == "RBRACKET":
                close = self.next()
                return Index(span=(target.span[0], close.span[1]),
                             target=target, index=start)
        elif tok.kind != "COLON":
            self.fail(f"expected an index or slice, found {tok.value!r}", tok)
        self.expect("COLON", "':'")
        stop: int | None = None
        if self.peek().kind == "INT":
            stop = int(self.next().value)
        close = self.expect("RBRACKET", "']'")
        return Slice(span=(target.span[0], close.span[1]),
                     target=target, start=start, stop=stop)

    def method_call(self, target: Node) -> Node:
        self.expect("DOT", "'.'")
        name = self.expect("IDENT", "a method name")
        if name.value not in METHODS:
            self.fail(f"unknown method {name.value!r} (supported: format, split, join)",
                      name)
        self.expect("LPAREN", "'('")
        args: list[Node] = []
        if self.peek().kind != "RPAREN":
            args.append(self.expr())
            while self.peek().kind == "COMMA":
                self.next()
                args.append(self.expr())
        close = self.expect("RPAREN", "')'")
        if name.value == "join" and len(args) != 1:
            self.fail("join takes exactly one argument", name)
        if name.value == "split" and len(args) > 1:
            self.fail("split takes at most one argument", name)
        return Call(span=(target.span[0], close.span[1]),
                    target=target, method=name.value, args=tuple(args))


# ---------------------------------------------------------------------------
# Literal-mode parser

def _parse_literal(source: str) -> tuple:
    parts: list[Node] = []
    buf: list[str] = []
    buf_start = 0
    i, n = 0, len(source)

    def flush(end: int):
        if buf:
            parts.append(Text(span=(buf_start, end), value="".join(buf)))
            buf.clear()

    while i < n:
        ch = source[i]
        if ch == "{":
            if source.startswith("{{", i):
                if not buf:
                    buf_start = i
                buf.append("{")
                i += 2
                continue
            flush(i)
            node, i = _parse_placeholder(source, i)
            parts.append(node)
            buf_start = i
            continue
        if ch == "}":
            if source.startswith("}}", i):
                if not buf:
                    buf_start = i
                buf.append("}")
                i += 2
                continue
            raise TemplateParseError("single '}' outside a placeholder (use '}}')",
                                     span=(i, i + 1), source=source)
        if not buf:
            buf_start = i
        buf.append(ch)
        i += 1
    flush(n)
    return tuple(parts)


def _parse_placeholder(source: str, start: int) -> tuple[Node, int]:
    i = start + 1
    n = len(source)
    j = i
    while j < n and (source[j].isalnum() or source[j] == "_"):
        j += 1
    name = source[i:j]
    if not name or name[0].isdigit():
        raise TemplateParseError("expected a variable name after '{'",
                                 span=(start, min(j + 1, n)), source=source)
    index: int | None = None
    if j < n and source[j] == "[":
        k = j + 1
        if k < n and source[k] == "-":
            k += 1
        while k < n and source[k].isdigit():
            k += 1
        digits = source[j + 1:k]
        if not digits or digits == "-" or k >= n or source[k] != "]":
            raise TemplateParseError("expected an integer index inside '[...]'",
                                     span=(j, min(k + 1, n)), source=source)
        index = int(digits)
        j = k + 1
    if j >= n or source[j] != "}":
        raise TemplateParseError("unclosed placeholder (expected '}')",
                                 span=(start, min(j + 1, n)), source=source)
    return Placeholder(span=(start, j + 1), name=name, index=index), j + 1


# ---------------------------------------------------------------------------
# Public API

def parse_template(spec: TemplateSpec) -> TemplateAst:
    """Parse a template under its mode; raises TemplateParseError with a span."""
    if spec.mode == LITERAL:
        return TemplateAst(mode=LITERAL, source=spec.source, root=None,
                           parts=_parse_literal(spec.source))
    root = _Parser(spec.source).parse()
    return TemplateAst(mode=EXPRESSION, source=spec.source, root=root)


def render_template(ast: TemplateAst, ctx: ExecutionContext) -> str:
    """Render a parsed template against a context; pure and deterministic."""
    env = ctx.variables()
    if ast.mode == LITERAL:
        return _render_literal(ast, env)
    value = _eval(ast.root, env, ast.source)
    if not isinstance(value, str):
        raise TemplateRenderError("template must produce a string, got a list",
                                  span=ast.root.span, source=ast.source)
    return value


def validate_template(spec: TemplateSpec) -> TemplateAst:
    """Parse-time validation used when saving templates inside chains."""
    return parse_template(spec)


def referenced_indices(ast: TemplateAst) -> dict[str, list[int]]:
    """Literal integer indices used on each context list variable.

    Chain validation uses this to reject templates that read the output of
    an action that has not run yet.
    """
    refs: dict[str, list[int]] = {"response": [], "wiki_id_title": []}

    def walk(node: Node):
        if isinstance(node, Index) and isinstance(node.target, Var) \
                and node.target.name in refs:
            refs[node.target.name].append(node.index)
        if isinstance(node, Placeholder) and node.name in refs and node.index is not None:
            refs[node.name].append(node.index)
        for child in _children(node):
            walk(child)

    if ast.mode == LITERAL:
        for part in ast.parts:
            walk(part)
    else:
        walk(ast.root)
    return refs


def _children(node: Node):
    if isinstance(node, Concat):
        return node.parts
    if isinstance(node, (Index, Slice)):
        return (node.target,)
    if isinstance(node, Call):
        return (node.target, *node.args)
    if isinstance(node, Comprehension):
        return (node.element, node.source)
    return ()


# ---------------------------------------------------------------------------
# Evaluation

def _render_literal(ast: TemplateAst, env: dict[str, Value]) -> str:
    out: list[str] = []
    for part in ast.parts:
        if isinstance(part, Text):
            out.append(part.value)
            continue
        value = _lookup(part.name, env, part.span, ast.source)
        if part.index is None:
            if not isinstance(value, str):
                raise TemplateRenderError(
                    f"{part.name!r} is a list; index it like {{{part.name}[0]}}",
                    span=part.span, source=ast.source)
            out.append(value)
        else:
            if isinstance(value, str):
                raise TemplateRenderError(f"{part.name!r} is not indexable here",
                                          span=part.span, source=ast.source)
            out.append(_index_value(value, part.index, part.span, ast.source))
    return "".join(out)


def _lookup(name: str, env: dict[str, Value], span: Span, source: str) -> Value:
    if name not in env:
        raise TemplateRenderError(f"unbound variable {name!r}", span=span, source=source)
    return env[name]


def _index_value(value, index: int, span: Span, source: str):
    try:
        return value[index]
    except IndexError:
        raise TemplateRenderError(
            f"index {index} out of range (length {len(value)})",
            span=span, source=source) from None


def _eval(node: Node, env: dict[str, Value], source: str) -> Value:
    if isinstance(node, Str):
        return node.value
    if isinstance(node, Var):
        return _lookup(node.name, env, node.span, source)
    if isinstance(node, Concat):
        out: list[str] = []
        for part in node.parts:
            value = _eval(part, env, source)
            if not isinstance(value, str):
                raise TemplateRenderError("'+' can only concatenate strings",
                                          span=part.span, source=source)
            out.append(value)
        return "".join(out)
    if isinstance(node, Index):
        target = _eval(node.target, env, source)
        return _index_value(target, node.index, node.span, source)
    if isinstance(node, Slice):
        target = _eval(node.target, env, source)
        return target[node.start:node.stop]
    if isinstance(node, Call):
        return _eval_call(node, env, source)
    if isinstance(node, Comprehension):
        items = _eval(node.source, env, source)
        inner = dict(env)
        out = []
        for item in items:
            inner[node.var] = item
            out.append(_eval(node.element, inner, source))
        return out
    raise TemplateRenderError("unsupported construct", span=node.span, source=source)


def _eval_call(node: Call, env: dict[str, Value], source: str) -> Value:
    target = _eval(node.target, env, source)
    args = [_eval(a, env, source) for a in node.args]
    if node.method == "format":
        if not isinstance(target, str):
            raise TemplateRenderError("format receiver is not a string",
                                      span=node.target.span, source=source)
        for arg_node, arg in zip(node.args, args):
            if not isinstance(arg, str):
                raise TemplateRenderError("format argument is not a string",
                                          span=arg_node.span, source=source)
        return _format(target, args, node.span, source)
    if node.method == "split":
        if not isinstance(target, str):
            raise TemplateRenderError("split receiver is not a string",
                                      span=node.target.span, source=source)
        if not args:
            return target.split()
        sep = args[0]
        if not isinstance(sep, str):
            raise TemplateRenderError("split separator is not a string",
                                      span=node.args[0].span, source=source)
        if sep == "":
            raise TemplateRenderError("empty split separator",
                                      span=node.args[0].span, source=source)
        return target.split(sep)
    if node.method == "join":
        if not isinstance(target, str):
            raise TemplateRenderError("join receiver is not a string",
                                      span=node.target.span, source=source)
        items = args[0]
        if isinstance(items, str):
            raise TemplateRenderError("join argument is not a list",
                                      span=node.args[0].span, source=source)
        for item in items:
            if not isinstance(item, str):
                raise TemplateRenderError("join element is not a string",
                                          span=node.args[0].span, source=source)
        return target.join(items)
    raise TemplateRenderError(f"unknown method {node.method!r}",
                              span=node.span, source=source)


def _format(receiver: str, args: list[str], span: Span, source: str) -> str:
    out: list[str] = []
    i, n = 0, len(receiver)
    next_arg = 0
    while i < n:
        ch = receiver[i]
        if ch == "{":
            if receiver.startswith("{{", i):
                out.append("{")
                i += 2
                continue
            if receiver.startswith("{}", i):
                if next_arg >= len(args):
                    raise TemplateRenderError("not enough arguments for format placeholders",
                                              span=span, source=source)
                out.append(args[next_arg])
                next_arg += 1
                i += 2
                continue
            raise TemplateRenderError("only empty '{}' format placeholders are supported",
                                      span=span, source=source)
        if ch == "}":
            if receiver.startswith("}}", i):
                out.append("}")
                i += 2
                continue
            raise TemplateRenderError("single '}' in format string",
                                      span=span, source=source)
        out.append(ch)
        i += 1
    return "".join(out)
