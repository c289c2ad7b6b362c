"""Recursive-descent parser producing :class:`~miniswift.lang.ast.Program`.

The accepted grammar is written out in ``docs/grammar.ebnf``.
"""

from ..errors import ParseError
from . import ast as A
from .lexer import EOF, FLOAT, IDENT, INT, KEYWORD, PUNCT, STRING, tokenize

_BUILTIN_AT = {"filename"}
_RELOPS = ("==", "!=", "<", ">", "<=", ">=")


class Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0

    # token helpers

    @property
    def tok(self):
        return self.toks[self.pos]

    def peek(self, k=1):
        j = min(self.pos + k, len(self.toks) - 1)
        return self.toks[j]

    def at(self, kind, text=None, tok=None):
        t = tok or self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_punct(self, text, tok=None):
        return self.at(PUNCT, text, tok)

    def at_kw(self, text, tok=None):
        return self.at(KEYWORD, text, tok)

    def error(self, msg, expected=()):
        t = self.tok
        got = "end of input" if t.kind == EOF else repr(t.text)
        raise ParseError(f"{msg}, got {got}", t.line, t.col, expected)

    def expect_punct(self, text):
        if not self.at_punct(text):
            self.error("unexpected token", [repr(text)])
        t = self.tok
        self.pos += 1
        return t

    def expect_kw(self, text):
        if not self.at_kw(text):
            self.error("unexpected token", [repr(text)])
        t = self.tok
        self.pos += 1
        return t

    def expect_ident(self):
        if self.tok.kind != IDENT:
            self.error("unexpected token", ["identifier"])
        t = self.tok
        self.pos += 1
        return t

    def accept_punct(self, text):
        if self.at_punct(text):
            self.pos += 1
            return True
        return False

    # program

    def parse_program(self):
        prog = A.Program()
        while self.tok.kind != EOF:
            t = self.tok
            if self.at_kw("import"):
                self.pos += 1
                if self.tok.kind != STRING:
                    self.error("unexpected token", ["string literal"])
                prog.imports.append(self.tok.text)
                self.pos += 1
                self.expect_punct(";")
            elif self.at_kw("type"):
                prog.types.append(self.parse_typedecl())
            elif self.at_punct("("):
                prog.procs.append(self.parse_procdecl())
            else:
                prog.stmts.append(self.parse_stmt())
            assert self.tok is not t, "parser made no progress"
        return prog

    def parse_typeref(self):
        name = self.expect_ident()
        arr = False
        if self.at_punct("[") and self.at_punct("]", self.peek()):
            self.pos += 2
            arr = True
        return A.TypeRef(name.text, arr), name

    def _array_suffix(self, tref):
        if self.at_punct("["):
            self.pos += 1
            self.expect_punct("]")
            if tref.is_array:
                raise ParseError("nested array declarators are not supported", self.tok.line, self.tok.col)
            return A.TypeRef(tref.name, True)
        return tref

    def parse_typedecl(self):
        kw = self.expect_kw("type")
        name = self.expect_ident()
        self.expect_punct("{")
        fields = []
        while not self.at_punct("}"):
            tref, _ = self.parse_typeref()
            fname = self.expect_ident()
            tref = self._array_suffix(tref)
            self.expect_punct(";")
            fields.append(A.FieldDecl(fname.text, tref))
        self.expect_punct("}")
        kind = "struct" if fields else "opaque-file"
        return A.TypeDecl(name.text, kind, fields, kw.line, kw.col)

    def parse_params(self):
        params = []
        self.expect_punct("(")
        if not self.at_punct(")"):
            while True:
                tref, first = self.parse_typeref()
                pname = self.expect_ident()
                tref = self._array_suffix(tref)
                params.append(A.Param(pname.text, tref, first.line, first.col))
                if not self.accept_punct(","):
                    break
        self.expect_punct(")")
        return params

    def parse_procdecl(self):
        start = self.tok
        outputs = self.parse_params()
        name = self.expect_ident()
        inputs = self.parse_params()
        self.expect_punct("{")
        if self.at_kw("app"):
            body = self.parse_app()
        else:
            body = self.parse_block_body()
        self.expect_punct("}")
        return A.ProcDecl(name.text, outputs, inputs, body, start.line, start.col)

    def parse_app(self):
        kw = self.expect_kw("app")
        self.expect_punct("{")
        if self.tok.kind in (IDENT, STRING):
            exe = self.tok.text
            self.pos += 1
        else:
            self.error("unexpected token", ["executable name"])
        args = []
        while not self.at_punct(";"):
            t = self.tok
            if t.kind == STRING:
                args.append(A.StrArg(t.text, t.line, t.col))
                self.pos += 1
            elif t.kind in (INT, FLOAT):
                args.append(A.StrArg(t.text, t.line, t.col))
                self.pos += 1
            elif self.at_punct("-") and self.peek().kind in (INT, FLOAT):
                args.append(A.StrArg("-" + self.peek().text, t.line, t.col))
                self.pos += 2
            elif self.at_punct("@"):
                self._expect_builtin_at()
                self.expect_punct("(")
                path = self.parse_path()
                self.expect_punct(")")
                args.append(A.FilenameArg(path, t.line, t.col))
            elif t.kind == IDENT:
                args.append(A.RefArg(self.parse_path(), t.line, t.col))
            else:
                self.error("unexpected token in app line",
                           ["string", "number", "@filename", "parameter", "';'"])
        self.expect_punct(";")
        self.expect_punct("}")
        return A.AppLine(exe, args, kw.line, kw.col)

    def _expect_builtin_at(self):
        at = self.expect_punct("@")
        name = self.tok
        if name.kind != IDENT or name.text not in _BUILTIN_AT:
            raise ParseError(f"unknown mapping function @{name.text}", at.line, at.col,
                             ["@filename"])
        self.pos += 1
        return name

    def parse_path(self):
        t = self.expect_ident()
        node = A.Name(t.text, t.line, t.col)
        while True:
            if self.at_punct("."):
                self.pos += 1
                m = self.expect_ident()
                node = A.Member(node, m.text, m.line, m.col)
            elif self.at_punct("["):
                b = self.tok
                self.pos += 1
                idx = self.parse_expr()
                self.expect_punct("]")
                node = A.Index(node, idx, b.line, b.col)
            else:
                return node

    def parse_block_body(self):
        stmts = []
        while not self.at_punct("}"):
            if self.tok.kind == EOF:
                self.error("unexpected end of block", ["'}'"])
            stmts.append(self.parse_stmt())
        return stmts

    def parse_block(self):
        self.expect_punct("{")
        body = self.parse_block_body()
        self.expect_punct("}")
        return body

    # statements

    def parse_stmt(self):
        t = self.tok
        if self.at_kw("foreach"):
            return self.parse_foreach()
        if self.at_kw("if"):
            return self.parse_if()
        if t.kind == IDENT:
            nxt = self.peek()
            if nxt.kind == IDENT:
                return self.parse_vardecl()
            if self.at_punct("[", nxt) and self.at_punct("]", self.peek(2)) and self.peek(3).kind == IDENT:
                return self.parse_vardecl()
            if self.at_punct("(", nxt):
                call = self.parse_postfix()
                if not isinstance(call, A.Call):
                    self.error("expected a call statement")
                if self.at_punct("="):
                    self.error("cannot assign to a call result")
                self.expect_punct(";")
                return A.CallStmt(call, t.line, t.col)
            target = self.parse_path()
            self.expect_punct("=")
            value = self.parse_expr()
            self.expect_punct(";")
            return A.Assign(target, value, t.line, t.col)
        self.error("expected a statement", ["declaration", "assignment", "foreach", "if", "call"])

    def parse_vardecl(self):
        tref, first = self.parse_typeref()
        name = self.expect_ident()
        tref = self._array_suffix(tref)
        mapping = None
        init = None
        if self.at_punct("<"):
            mapping = self.parse_mapping()
        if self.accept_punct("="):
            init = self.parse_expr()
        self.expect_punct(";")
        return A.VarDecl(name.text, tref, mapping, init, first.line, first.col)

    def parse_mapping(self):
        lt = self.expect_punct("<")
        name = self.expect_ident()
        params = []
        while self.at_punct(";") or self.at_punct(","):
            self.pos += 1
            key = self.expect_ident()
            self.expect_punct("=")
            params.append((key.text, self.parse_mapper_value()))
        if not self.at_punct(">"):
            self.error("unterminated mapping", ["';'", "','", "'>'"])
        self.pos += 1
        return A.MapperBinding(name.text, params, lt.line, lt.col)

    def parse_mapper_value(self):
        t = self.tok
        neg = False
        if self.at_punct("-") and self.peek().kind in (INT, FLOAT):
            neg = True
            self.pos += 1
            t = self.tok
        if t.kind == STRING:
            self.pos += 1
            return A.Literal(t.text, "string", t.line, t.col)
        if t.kind == INT:
            self.pos += 1
            return A.Literal(-int(t.text) if neg else int(t.text), "int", t.line, t.col)
        if t.kind == FLOAT:
            self.pos += 1
            return A.Literal(-float(t.text) if neg else float(t.text), "float", t.line, t.col)
        if self.at_kw("true") or self.at_kw("false"):
            self.pos += 1
            return A.Literal(t.text == "true", "boolean", t.line, t.col)
        if t.kind == IDENT:
            self.pos += 1
            return A.Name(t.text, t.line, t.col)
        self.error("bad mapper parameter value", ["string", "number", "true", "false", "variable"])

    def parse_foreach(self):
        kw = self.expect_kw("foreach")
        elem_type = None
        if self.tok.kind == IDENT and (self.peek().kind == IDENT or
                                       (self.at_punct("[", self.peek()) and self.at_punct("]", self.peek(2)))):
            elem_type, _ = self.parse_typeref()
        elem = self.expect_ident()
        index = None
        if self.accept_punct(","):
            index = self.expect_ident().text
        self.expect_kw("in")
        source = self.parse_expr()
        body = self.parse_block()
        return A.Foreach(elem.text, elem_type, index, source, body, kw.line, kw.col)

    def parse_if(self):
        kw = self.expect_kw("if")
        self.expect_punct("(")
        cond = self.parse_expr()
        self.expect_punct(")")
        then = self.parse_block()
        orelse = []
        if self.at_kw("else"):
            self.pos += 1
            if self.at_kw("if"):
                orelse = [self.parse_if()]
            else:
                orelse = self.parse_block()
        return A.If(cond, then, orelse, kw.line, kw.col)

    # expressions

    def parse_expr(self):
        return self.parse_or()

    def _binary(self, sub, ops):
        left = sub()
        while self.tok.kind == PUNCT and self.tok.text in ops:
            op = self.tok
            self.pos += 1
            right = sub()
            left = A.BinOp(op.text, left, right, op.line, op.col)
        return left

    def parse_or(self):
        return self._binary(self.parse_and, ("||",))

    def parse_and(self):
        return self._binary(self.parse_cmp, ("&&",))

    def parse_cmp(self):
        left = self.parse_add()
        if self.tok.kind == PUNCT and self.tok.text in _RELOPS:
            op = self.tok
            self.pos += 1
            right = self.parse_add()
            left = A.BinOp(op.text, left, right, op.line, op.col)
        return left

    def parse_add(self):
        return self._binary(self.parse_mul, ("+", "-"))

    def parse_mul(self):
        return self._binary(self.parse_unary, ("*", "/", "%"))

    def parse_unary(self):
        if self.at_punct("!") or self.at_punct("-"):
            op = self.tok
            self.pos += 1
            return A.UnaryOp(op.text, self.parse_unary(), op.line, op.col)
        return self.parse_postfix()

    def parse_postfix(self):
        node = self.parse_primary()
        while True:
            if self.at_punct("."):
                self.pos += 1
                m = self.expect_ident()
                node = A.Member(node, m.text, m.line, m.col)
            elif self.at_punct("["):
                b = self.tok
                self.pos += 1
                idx = self.parse_expr()
                self.expect_punct("]")
                node = A.Index(node, idx, b.line, b.col)
            else:
                return node

    def parse_primary(self):
        t = self.tok
        if t.kind == INT:
            self.pos += 1
            return A.Literal(int(t.text), "int", t.line, t.col)
        if t.kind == FLOAT:
            self.pos += 1
            return A.Literal(float(t.text), "float", t.line, t.col)
        if t.kind == STRING:
            self.pos += 1
            return A.Literal(t.text, "string", t.line, t.col)
        if self.at_kw("true") or self.at_kw("false"):
            self.pos += 1
            return A.Literal(t.text == "true", "boolean", t.line, t.col)
        if t.kind == IDENT:
            self.pos += 1
            if self.at_punct("("):
                self.pos += 1
                args = []
                if not self.at_punct(")"):
                    while True:
                        args.append(self.parse_expr())
                        if not self.accept_punct(","):
                            break
                self.expect_punct(")")
                return A.Call(t.text, args, t.line, t.col)
            return A.Name(t.text, t.line, t.col)
        if self.at_punct("("):
            self.pos += 1
            e = self.parse_expr()
            self.expect_punct(")")
            return e
        if self.at_punct("@"):
            self._expect_builtin_at()
            self.expect_punct("(")
            arg = self.parse_expr()
            self.expect_punct(")")
            return A.Filename(arg, t.line, t.col)
        self.error("expected an expression", ["literal", "identifier", "call", "'('", "@filename"])


def parse(tokens):
    """Parse a token list (from :func:`tokenize`) into a Program."""
    return Parser(tokens).parse_program()


def parse_source(source):
    return parse(tokenize(source))
