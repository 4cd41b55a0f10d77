"""Streaming N-Triples parser and serializer.

One triple per line, line-oriented recovery: a malformed line is counted,
reported with its line number, and skipped; parsing continues. Only stream
level failures (I/O errors, truncated gzip) abort.

Supported terms: IRIs in angle brackets, blank nodes (``_:label``), and
literals with optional language tag or datatype IRI. Escapes are the
N-Triples ECHAR and UCHAR forms. Input files may be gzip-compressed;
compression is detected from the magic bytes, not the file name.
"""

from __future__ import annotations

import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

logger = logging.getLogger(__name__)

GZIP_MAGIC = b"\x1f\x8b"

_ECHAR = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}

_ESCAPE_LITERAL = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
    "\b": "\\b",
    "\f": "\\f",
}


@dataclass(frozen=True)
class Literal:
    """Lexical form of an RDF literal, with optional language tag or datatype."""

    text: str
    lang: str | None = None
    datatype: str | None = None


@dataclass(frozen=True)
class Triple:
    """A single RDF statement. ``object`` is an IRI/blank-node string or a Literal."""

    subject: str
    predicate: str
    object: Union[str, Literal]

    @property
    def is_relational(self) -> bool:
        """True when the object is an IRI or blank node (not a literal)."""
        return not isinstance(self.object, Literal)


@dataclass
class ParseStats:
    """Per-stream accounting, mutated in place by :func:`parse_ntriples`."""

    lines: int = 0
    triples: int = 0
    malformed: int = 0
    ignored: int = 0  # blank lines and comments
    first_errors: list[tuple[int, str]] = field(default_factory=list)


class LineSyntaxError(ValueError):
    """Raised internally for a single unparseable line; never escapes the parser."""


def _skip_ws(line: str, i: int) -> int:
    n = len(line)
    while i < n and line[i] in " \t":
        i += 1
    return i


def _unescape(raw: str, allow_echar: bool) -> str:
    if "\\" not in raw:
        return raw
    out: list[str] = []
    i, n = 0, len(raw)
    while i < n:
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            raise LineSyntaxError("dangling backslash")
        esc = raw[i + 1]
        if esc == "u" or esc == "U":
            width = 4 if esc == "u" else 8
            hexpart = raw[i + 2 : i + 2 + width]
            if len(hexpart) != width:
                raise LineSyntaxError(f"truncated \\{esc} escape")
            try:
                out.append(chr(int(hexpart, 16)))
            except ValueError as exc:
                raise LineSyntaxError(f"bad \\{esc} escape: {hexpart!r}") from exc
            i += 2 + width
        elif allow_echar and esc in _ECHAR:
            out.append(_ECHAR[esc])
            i += 2
        else:
            raise LineSyntaxError(f"invalid escape \\{esc}")
    return "".join(out)


def _parse_iri(line: str, i: int) -> tuple[str, int]:
    # caller guarantees line[i] == "<"
    end = line.find(">", i + 1)
    if end < 0:
        raise LineSyntaxError("unterminated IRI")
    raw = line[i + 1 : end]
    for ch in raw:
        if ch in ' <"{}|^`' or ord(ch) <= 0x20:
            raise LineSyntaxError(f"forbidden character {ch!r} in IRI")
    iri = _unescape(raw, allow_echar=False)
    if not iri:
        raise LineSyntaxError("empty IRI")
    return iri, end + 1


def _parse_bnode(line: str, i: int) -> tuple[str, int]:
    # caller guarantees line[i:i+2] == "_:"
    j = i + 2
    n = len(line)
    while j < n and (line[j].isalnum() or line[j] in "_-."):
        j += 1
    label = line[i:j]
    if len(label) <= 2 or label.endswith("."):
        raise LineSyntaxError("bad blank node label")
    return label, j


def _parse_literal(line: str, i: int) -> tuple[Literal, int]:
    # caller guarantees line[i] == '"'
    j = i + 1
    n = len(line)
    while j < n:
        ch = line[j]
        if ch == "\\":
            j += 2
            continue
        if ch == '"':
            break
        j += 1
    if j >= n:
        raise LineSyntaxError("unterminated literal")
    text = _unescape(line[i + 1 : j], allow_echar=True)
    j += 1
    lang = None
    datatype = None
    if j < n and line[j] == "@":
        k = j + 1
        while k < n and (line[k].isalnum() or line[k] == "-"):
            k += 1
        lang = line[j + 1 : k]
        if not lang:
            raise LineSyntaxError("empty language tag")
        j = k
    elif j + 1 < n and line[j] == "^" and line[j + 1] == "^":
        if j + 2 >= n or line[j + 2] != "<":
            raise LineSyntaxError("datatype must be an IRI")
        datatype, j = _parse_iri(line, j + 2)
    return Literal(text, lang=lang, datatype=datatype), j


def parse_line(line: str) -> Triple | None:
    """Parse one N-Triples line. Returns None for blank/comment lines.

    Raises LineSyntaxError on malformed input.
    """
    i = _skip_ws(line, 0)
    n = len(line)
    if i >= n or line[i] == "#":
        return None

    if line[i] == "<":
        subject, i = _parse_iri(line, i)
    elif line.startswith("_:", i):
        subject, i = _parse_bnode(line, i)
    else:
        raise LineSyntaxError("subject must be an IRI or blank node")

    i = _skip_ws(line, i)
    if i >= n or line[i] != "<":
        raise LineSyntaxError("predicate must be an IRI")
    predicate, i = _parse_iri(line, i)

    i = _skip_ws(line, i)
    if i >= n:
        raise LineSyntaxError("missing object")
    obj: Union[str, Literal]
    if line[i] == "<":
        obj, i = _parse_iri(line, i)
    elif line.startswith("_:", i):
        obj, i = _parse_bnode(line, i)
    elif line[i] == '"':
        obj, i = _parse_literal(line, i)
    else:
        raise LineSyntaxError("object must be an IRI, blank node, or literal")

    i = _skip_ws(line, i)
    if i >= n or line[i] != ".":
        raise LineSyntaxError("statement must end with '.'")
    i = _skip_ws(line, i + 1)
    if i < n:
        raise LineSyntaxError("trailing content after '.'")
    return Triple(subject, predicate, obj)


def open_maybe_gzip(path: str | Path) -> IO[bytes]:
    """Open a file for binary reading, transparently ungzipping by magic bytes."""
    f = open(path, "rb")
    magic = f.read(2)
    f.seek(0)
    if magic == GZIP_MAGIC:
        return gzip.open(f, "rb")  # type: ignore[return-value]
    return f


Source = Union[str, Path, IO[bytes], IO[str], Iterable[str]]


def _line_iter(source: Source) -> Iterator[tuple[int, str | bytes]]:
    if isinstance(source, (str, Path)):
        with open_maybe_gzip(source) as f:
            for lineno, raw in enumerate(f, start=1):
                yield lineno, raw
    else:
        for lineno, raw in enumerate(source, start=1):
            yield lineno, raw


def parse_ntriples(
    source: Source,
    stats: ParseStats | None = None,
    max_reported: int = 20,
) -> Iterator[Triple]:
    """Yield well-formed triples from an N-Triples source, skipping bad lines.

    ``source`` may be a path (gzip detected automatically), a binary or text
    file object, or an iterable of lines. Malformed lines (including invalid
    UTF-8) increment ``stats.malformed``; the first ``max_reported`` are
    logged with their line numbers and kept in ``stats.first_errors``.
    Stream-level I/O errors propagate to the caller.
    """
    if stats is None:
        stats = ParseStats()
    for lineno, raw in _line_iter(source):
        stats.lines += 1
        try:
            if isinstance(raw, bytes):
                line = raw.decode("utf-8").rstrip("\r\n")
            else:
                line = raw.rstrip("\r\n")
            triple = parse_line(line)
        except (LineSyntaxError, UnicodeDecodeError) as exc:
            stats.malformed += 1
            if len(stats.first_errors) < max_reported:
                stats.first_errors.append((lineno, str(exc)))
                logger.warning("line %d: skipped malformed triple (%s)", lineno, exc)
            continue
        if triple is None:
            stats.ignored += 1
            continue
        stats.triples += 1
        yield triple


def _escape_literal(text: str) -> str:
    out = []
    for ch in text:
        out.append(_ESCAPE_LITERAL.get(ch, ch))
    return "".join(out)


def format_term(term: Union[str, Literal]) -> str:
    """Serialize one term to its N-Triples form."""
    if isinstance(term, Literal):
        s = f'"{_escape_literal(term.text)}"'
        if term.lang:
            return f"{s}@{term.lang}"
        if term.datatype:
            return f"{s}^^<{term.datatype}>"
        return s
    if term.startswith("_:"):
        return term
    return f"<{term}>"


def format_triple(t: Triple) -> str:
    return (
        f"{format_term(t.subject)} {format_term(t.predicate)} "
        f"{format_term(t.object)} ."
    )


def write_ntriples(triples: Iterable[Triple], dest: str | Path | IO[str]) -> int:
    """Write triples in N-Triples format; returns the number written."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as f:
            return write_ntriples(triples, f)
    count = 0
    for t in triples:
        dest.write(format_triple(t))
        dest.write("\n")
        count += 1
    return count


def read_ntriples_text(text: str, stats: ParseStats | None = None) -> list[Triple]:
    """Convenience wrapper: parse triples from an in-memory string."""
    return list(parse_ntriples(io.StringIO(text), stats=stats))
