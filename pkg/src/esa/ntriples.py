"""Line-based N-Triples parsing and serialization.

Only the W3C N-Triples syntax is handled (one statement per line, UTF-8).
Turtle and RDF/XML are deliberately out of scope.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path

IRI = "iri"
LITERAL = "literal"
BLANK = "blank"


class NTriplesSyntaxError(ValueError):
    """Malformed statement. Carries the 1-based line number and a reason."""

    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


@dataclass(frozen=True)
class RdfTerm:
    """An RDF term: IRI, literal, or blank node.

    Literals may carry a language tag or a datatype IRI, never both.
    """

    kind: str
    lexical: str
    language_tag: str | None = None
    datatype_iri: str | None = None

    def __post_init__(self):
        if self.kind not in (IRI, LITERAL, BLANK):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if self.kind == IRI:
            if not self.lexical or any(ch.isspace() for ch in self.lexical):
                raise ValueError(f"IRI must be non-empty and whitespace-free: {self.lexical!r}")
        if self.kind == BLANK and not self.lexical:
            raise ValueError("blank node label must be non-empty")
        if self.kind != LITERAL and (self.language_tag or self.datatype_iri):
            raise ValueError("only literals carry language tags or datatypes")
        if self.language_tag is not None and self.datatype_iri is not None:
            raise ValueError("literal may carry a language tag or a datatype, not both")

    @staticmethod
    def iri(lexical):
        return RdfTerm(IRI, lexical)

    @staticmethod
    def literal(lexical, language_tag=None, datatype_iri=None):
        return RdfTerm(LITERAL, lexical, language_tag, datatype_iri)

    @staticmethod
    def blank(label):
        return RdfTerm(BLANK, label)


@dataclass(frozen=True)
class Triple:
    """One RDF statement. The predicate is always an IRI."""

    subject: RdfTerm
    predicate: RdfTerm
    object: RdfTerm

    def __post_init__(self):
        if self.subject.kind not in (IRI, BLANK):
            raise ValueError("triple subject must be an IRI or blank node")
        if self.predicate.kind != IRI:
            raise ValueError("triple predicate must be an IRI")


_HEX = "0-9A-Fa-f"
_UCHAR = rf"\\u[{_HEX}]{{4}}|\\U[{_HEX}]{{8}}"
_IRIREF = rf"<(?:[^\x00-\x20<>\"{{}}|^`\\]|{_UCHAR})*>"
_BNODE = r"_:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?"
_STRING = rf"\"(?:[^\"\\\n\r]|\\[tbnrf\"'\\]|{_UCHAR})*\""
_LANGTAG = r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*"

_STATEMENT = re.compile(
    rf"^[ \t]*(?P<subj>{_IRIREF}|{_BNODE})"
    rf"[ \t]+(?P<pred>{_IRIREF})"
    rf"[ \t]+(?:(?P<obj_iri>{_IRIREF})|(?P<obj_bnode>{_BNODE})"
    rf"|(?P<obj_lit>{_STRING})(?:(?P<lang>{_LANGTAG})|\^\^(?P<dtype>{_IRIREF}))?)"
    rf"[ \t]*\.[ \t]*(?:#.*)?$"
)

_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(raw, line_no):
    if "\\" not in raw:
        return raw
    out = []
    i = 0
    n = len(raw)
    while i < n:
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            raise NTriplesSyntaxError(line_no, "dangling backslash")
        esc = raw[i + 1]
        if esc in _ECHAR:
            out.append(_ECHAR[esc])
            i += 2
        elif esc in ("u", "U"):
            width = 4 if esc == "u" else 8
            hexdigits = raw[i + 2 : i + 2 + width]
            if len(hexdigits) != width:
                raise NTriplesSyntaxError(line_no, f"truncated \\{esc} escape")
            try:
                out.append(chr(int(hexdigits, 16)))
            except ValueError:
                raise NTriplesSyntaxError(line_no, f"bad \\{esc} escape {hexdigits!r}") from None
            i += 2 + width
        else:
            raise NTriplesSyntaxError(line_no, f"unknown escape \\{esc}")
    return "".join(out)


def _iri_term(token, line_no):
    lexical = _unescape(token[1:-1], line_no)
    try:
        return RdfTerm.iri(lexical)
    except ValueError as exc:
        raise NTriplesSyntaxError(line_no, str(exc)) from None


def _lines(source):
    """Normalize bytes / str / file-like / Path input to (line_no, text) pairs."""
    if isinstance(source, Path):
        source = source.read_bytes()
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, str):
        source = source.encode("utf-8")
    for line_no, raw in enumerate(source.split(b"\n"), start=1):
        try:
            yield line_no, raw.decode("utf-8")
        except UnicodeDecodeError:
            raise NTriplesSyntaxError(line_no, "invalid UTF-8") from None


def parse_ntriples(source):
    """Parse N-Triples into a list of Triple, in file order.

    `source` may be bytes, str, a Path, or a file-like object. Blank lines and
    comment lines are skipped. Raises NTriplesSyntaxError on the first
    malformed statement; there are no silent drops.
    """
    triples = []
    for line_no, text in _lines(source):
        stripped = text.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _STATEMENT.match(text.rstrip("\r"))
        if m is None:
            raise NTriplesSyntaxError(line_no, f"malformed statement: {stripped[:80]!r}")

        subj_tok = m.group("subj")
        if subj_tok.startswith("<"):
            subject = _iri_term(subj_tok, line_no)
        else:
            subject = RdfTerm.blank(subj_tok[2:])
        predicate = _iri_term(m.group("pred"), line_no)

        if m.group("obj_iri"):
            obj = _iri_term(m.group("obj_iri"), line_no)
        elif m.group("obj_bnode"):
            obj = RdfTerm.blank(m.group("obj_bnode")[2:])
        else:
            lex = _unescape(m.group("obj_lit")[1:-1], line_no)
            lang = m.group("lang")
            dtype = m.group("dtype")
            obj = RdfTerm.literal(
                lex,
                language_tag=lang[1:] if lang else None,
                datatype_iri=_iri_term(dtype, line_no).lexical if dtype else None,
            )
        triples.append(Triple(subject, predicate, obj))
    return triples


_LITERAL_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}


def _escape_literal(s):
    out = []
    for ch in s:
        if ch in _LITERAL_ESCAPES:
            out.append(_LITERAL_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def _escape_iri(s):
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch in '<>"{}|^`' or ord(ch) <= 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


def term_to_ntriples(term):
    """Serialize one term in canonical N-Triples form."""
    if term.kind == IRI:
        return f"<{_escape_iri(term.lexical)}>"
    if term.kind == BLANK:
        return f"_:{term.lexical}"
    body = f'"{_escape_literal(term.lexical)}"'
    if term.language_tag:
        return f"{body}@{term.language_tag}"
    if term.datatype_iri:
        return f"{body}^^<{_escape_iri(term.datatype_iri)}>"
    return body


def triple_to_ntriples(triple):
    """Serialize a triple as a single N-Triples statement line (no newline)."""
    return (
        f"{term_to_ntriples(triple.subject)} "
        f"{term_to_ntriples(triple.predicate)} "
        f"{term_to_ntriples(triple.object)} ."
    )
