"""Tokenizer for .sws scripts."""

from dataclasses import dataclass

from ..errors import LexError

IDENT = "ident"
STRING = "string-literal"
INT = "int-literal"
FLOAT = "float-literal"
PUNCT = "punct"
KEYWORD = "keyword"
EOF = "eof"

KEYWORDS = frozenset({"type", "app", "foreach", "in", "if", "else", "true", "false", "import"})

# longest first
_PUNCT = ("<=", ">=", "==", "!=", "&&", "||",
          "{", "}", "(", ")", "[", "]", ";", ",", ".", "=", "<", ">",
          "!", "+", "-", "*", "/", "%", "@")

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    def __repr__(self):
        return f"Token({self.kind} {self.text!r} @{self.line}:{self.col})"


def tokenize(source):
    """Split ``source`` into tokens. The list always ends with an EOF token."""
    toks = []
    i, n = 0, len(source)
    line, col = 1, 1

    def advance(k):
        nonlocal i, line, col
        for ch in source[i:i + k]:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        i += k

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            advance((n if j < 0 else j) - i)
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise LexError("unterminated block comment", line, col)
            advance(j + 2 - i)
            continue
        start_line, start_col = line, col
        if ch == '"':
            buf = []
            j = i + 1
            while True:
                if j >= n or source[j] == "\n":
                    raise LexError("unterminated string literal", start_line, start_col)
                c = source[j]
                if c == '"':
                    break
                if c == "\\":
                    if j + 1 >= n:
                        raise LexError("unterminated string literal", start_line, start_col)
                    esc = source[j + 1]
                    if esc not in _ESCAPES:
                        raise LexError(f"bad escape \\{esc}", start_line, start_col)
                    buf.append(_ESCAPES[esc])
                    j += 2
                    continue
                buf.append(c)
                j += 1
            toks.append(Token(STRING, "".join(buf), start_line, start_col))
            advance(j + 1 - i)
            continue
        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            kind = INT
            if j + 1 < n and source[j] == "." and source[j + 1].isdigit():
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
                kind = FLOAT
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    while k < n and source[k].isdigit():
                        k += 1
                    j = k
                    kind = FLOAT
            toks.append(Token(kind, source[i:j], start_line, start_col))
            advance(j - i)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            toks.append(Token(KEYWORD if word in KEYWORDS else IDENT, word, start_line, start_col))
            advance(j - i)
            continue
        for p in _PUNCT:
            if source.startswith(p, i):
                toks.append(Token(PUNCT, p, start_line, start_col))
                advance(len(p))
                break
        else:
            raise LexError(f"illegal character {ch!r}", start_line, start_col)
    toks.append(Token(EOF, "", line, col))
    return toks
