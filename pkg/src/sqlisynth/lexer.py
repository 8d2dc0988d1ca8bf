"""SQL lexer producing fixed-length normalized token sequences.

Lexing rules, chosen so injection markers always survive:

* keywords are lowercased and matched against the keyword table shipped in
  data/keywords.txt (obfuscation by case, e.g. SeLeCt, normalizes away);
  identifier and literal spellings are preserved
* operators use maximal munch (<=, <>, ||, ...)
* string literals ('...', "...") are single tokens, doubled quotes escape;
  interior whitespace runs collapse to one space; a quote whose literal
  never terminates is emitted as a lone punctuation token and lexing
  continues (swallowing the tail would hide the OR/comment tokens an
  injection payload carries)
* comments (-- , #, /* */) become comment tokens; an unterminated block
  comment becomes an unknown token covering the remainder
* numbers are collapsed to canonical decimal form (0x41 -> 65, 1.50 -> 1.5)
* optional URL percent-decoding is applied once before lexing

Sequences are padded / tail-truncated to exactly 100 tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from urllib.parse import unquote

__all__ = [
    "Token",
    "TokenSequence",
    "PAD",
    "SEQUENCE_LENGTH",
    "KEYWORDS",
    "tokenize",
    "detokenize",
    "load_keywords",
]

SEQUENCE_LENGTH = 100
MAX_QUERY_BYTES = 1 << 20

KIND_KEYWORD = "keyword"
KIND_IDENTIFIER = "identifier"
KIND_NUMBER = "number"
KIND_STRING = "string-literal"
KIND_OPERATOR = "operator"
KIND_PUNCTUATION = "punctuation"
KIND_COMMENT = "comment"
KIND_UNKNOWN = "unknown"
KIND_PAD = "pad"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str


PAD = Token(KIND_PAD, "<pad>")


@dataclass(frozen=True)
class TokenSequence:
    """Exactly SEQUENCE_LENGTH tokens; original_length counts pre-padding."""

    tokens: tuple
    original_length: int

    def __post_init__(self):
        if len(self.tokens) != SEQUENCE_LENGTH:
            raise ValueError(
                f"TokenSequence must hold {SEQUENCE_LENGTH} tokens, got {len(self.tokens)}"
            )

    def real_tokens(self):
        return self.tokens[: min(self.original_length, SEQUENCE_LENGTH)]

    def texts(self):
        return [t.text for t in self.real_tokens()]


def load_keywords():
    text = resources.files("sqlisynth").joinpath("data/keywords.txt").read_text()
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


KEYWORDS = load_keywords()

_TWO_CHAR_OPS = ("<=", ">=", "<>", "!=", "||", "&&", "<<", ">>", ":=")
_ONE_CHAR_OPS = set("+-*/%=<>!&|^~")
_PUNCT = set("(),;.?@:[]{}`\\")
_IDENT_START = re.compile(r"[A-Za-z_]")
_IDENT_CHAR = re.compile(r"[A-Za-z0-9_$]")
_WS_RUN = re.compile(r"\s+")


def _collapse_ws(text):
    return _WS_RUN.sub(" ", text)


def _canonical_number(text):
    if text[:2].lower() == "0x":
        return str(int(text, 16))
    try:
        return str(int(text))
    except ValueError:
        return repr(float(text))


def _scan_number(raw, i):
    n = len(raw)
    if raw[i : i + 2].lower() == "0x" and i + 2 < n and raw[i + 2] in "0123456789abcdefABCDEF":
        j = i + 2
        while j < n and raw[j] in "0123456789abcdefABCDEF":
            j += 1
        return j
    j = i
    while j < n and raw[j].isdigit():
        j += 1
    if j < n and raw[j] == "." and j + 1 < n and raw[j + 1].isdigit():
        j += 1
        while j < n and raw[j].isdigit():
            j += 1
    elif j < n and raw[j] == "." and j > i:
        j += 1
    if j < n and raw[j] in "eE":
        k = j + 1
        if k < n and raw[k] in "+-":
            k += 1
        if k < n and raw[k].isdigit():
            j = k
            while j < n and raw[j].isdigit():
                j += 1
    return j


def _lex(raw):
    tokens = []
    i, n = 0, len(raw)
    while i < n:
        c = raw[i]
        if c.isspace():
            i += 1
            continue
        if raw.startswith("--", i):
            end = raw.find("\n", i)
            end = n if end < 0 else end
            tokens.append(Token(KIND_COMMENT, _collapse_ws(raw[i:end]).rstrip()))
            i = end
            continue
        if c == "#":
            end = raw.find("\n", i)
            end = n if end < 0 else end
            tokens.append(Token(KIND_COMMENT, _collapse_ws(raw[i:end]).rstrip()))
            i = end
            continue
        if raw.startswith("/*", i):
            end = raw.find("*/", i + 2)
            if end < 0:
                tokens.append(Token(KIND_UNKNOWN, _collapse_ws(raw[i:]).strip()))
                break
            tokens.append(Token(KIND_COMMENT, _collapse_ws(raw[i : end + 2])))
            i = end + 2
            continue
        if c in "'\"":
            j = i + 1
            closed = False
            while j < n:
                if raw[j] == c:
                    if j + 1 < n and raw[j + 1] == c:  # doubled quote escape
                        j += 2
                        continue
                    closed = True
                    break
                j += 1
            if closed:
                tokens.append(Token(KIND_STRING, _collapse_ws(raw[i : j + 1])))
                i = j + 1
            else:
                # unterminated: keep the quote itself, keep lexing the tail
                tokens.append(Token(KIND_PUNCTUATION, c))
                i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and raw[i + 1].isdigit()):
            j = _scan_number(raw, i)
            tokens.append(Token(KIND_NUMBER, _canonical_number(raw[i:j])))
            i = j
            continue
        if _IDENT_START.match(c):
            j = i + 1
            while j < n and _IDENT_CHAR.match(raw[j]):
                j += 1
            text = raw[i:j]
            low = text.lower()
            if low in KEYWORDS:
                tokens.append(Token(KIND_KEYWORD, low))
            else:
                tokens.append(Token(KIND_IDENTIFIER, text))
            i = j
            continue
        two = raw[i : i + 2]
        if two in _TWO_CHAR_OPS:
            tokens.append(Token(KIND_OPERATOR, two))
            i += 2
            continue
        if c in _ONE_CHAR_OPS:
            tokens.append(Token(KIND_OPERATOR, c))
            i += 1
            continue
        if c in _PUNCT:
            tokens.append(Token(KIND_PUNCTUATION, c))
            i += 1
            continue
        tokens.append(Token(KIND_UNKNOWN, c))
        i += 1
    return tokens


def tokenize(raw, url_decode=False):
    """Lex one SQL string into a padded/truncated TokenSequence."""
    if len(raw.encode("utf-8", errors="replace")) > MAX_QUERY_BYTES:
        raise ValueError(f"query exceeds {MAX_QUERY_BYTES} bytes")
    if url_decode:
        raw = unquote(raw)
    tokens = _lex(raw)
    original = len(tokens)
    if original >= SEQUENCE_LENGTH:
        kept = tuple(tokens[:SEQUENCE_LENGTH])
    else:
        kept = tuple(tokens) + (PAD,) * (SEQUENCE_LENGTH - original)
    return TokenSequence(kept, original)


def detokenize(seq):
    """Joined token texts; line comments get a newline so re-lexing agrees."""
    parts = []
    for tok in seq.real_tokens() if isinstance(seq, TokenSequence) else seq:
        parts.append(tok.text)
        if tok.kind == KIND_COMMENT and not tok.text.startswith("/*"):
            parts.append("\n")
    return " ".join(parts)
