"""Inverted index from normalized entity names to entity ids.

Exact-match semantics by default: Unicode NFC, trimmed, internal
whitespace runs collapsed, case preserved. Casefolding is an opt-in
policy. Postings are sorted and duplicate-free so candidate ordering is
deterministic downstream.
"""

from __future__ import annotations

import struct
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import IO

MAGIC = b"KGNI"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NormalizationPolicy:
    casefold: bool = False

    @property
    def descriptor(self) -> str:
        return "nfc-ws-casefold" if self.casefold else "nfc-ws"

    @classmethod
    def from_descriptor(cls, desc: str) -> "NormalizationPolicy":
        if desc == "nfc-ws":
            return cls(casefold=False)
        if desc == "nfc-ws-casefold":
            return cls(casefold=True)
        raise ValueError(f"unknown normalization policy {desc!r}")


def normalize_name(raw: str, policy: NormalizationPolicy | None = None) -> str:
    """Deterministic name normalization: NFC, trim, collapse whitespace runs."""
    s = unicodedata.normalize("NFC", raw)
    s = " ".join(s.split())
    if policy is not None and policy.casefold:
        s = s.casefold()
    return s


class NameIndex:
    """Map from normalized name to the sorted list of entities carrying it."""

    def __init__(self, policy: NormalizationPolicy | None = None) -> None:
        self.policy = policy or NormalizationPolicy()
        self.postings: dict[str, list[int]] = {}

    def __len__(self) -> int:
        return len(self.postings)

    @property
    def total_postings(self) -> int:
        return sum(len(p) for p in self.postings.values())

    def lookup(self, name: str) -> list[int]:
        return self.postings.get(normalize_name(name, self.policy), [])


def build_index(
    names: dict[int, list[str]],
    policy: NormalizationPolicy | None = None,
) -> NameIndex:
    """Index every (entity, name) pair under the normalized name."""
    index = NameIndex(policy)
    acc: dict[str, set[int]] = {}
    for eid, name_list in names.items():
        for name in name_list:
            key = normalize_name(name, index.policy)
            if not key:
                continue
            acc.setdefault(key, set()).add(eid)
    index.postings = {key: sorted(ids) for key, ids in acc.items()}
    return index


def save_index(index: NameIndex, path: str | Path) -> None:
    """Binary snapshot: versioned header, then length-prefixed postings."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBQ", FORMAT_VERSION, int(index.policy.casefold),
                            len(index.postings)))
        for name in sorted(index.postings):
            ids = index.postings[name]
            data = name.encode("utf-8")
            f.write(struct.pack("<I", len(data)))
            f.write(data)
            f.write(struct.pack("<I", len(ids)))
            f.write(struct.pack(f"<{len(ids)}Q", *ids))


def _read_exact(f: IO[bytes], n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError("truncated name index file")
    return data


def load_index(path: str | Path) -> NameIndex:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise ValueError(f"{path}: not a name index file")
        version, casefold, count = struct.unpack("<HBQ", _read_exact(f, 11))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        index = NameIndex(NormalizationPolicy(casefold=bool(casefold)))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            (n_ids,) = struct.unpack("<I", _read_exact(f, 4))
            ids = list(struct.unpack(f"<{n_ids}Q", _read_exact(f, 8 * n_ids)))
            index.postings[name] = ids
    return index


def dump_index_tsv(index: NameIndex, path: str | Path) -> None:
    """Plain-text dump for inspection: ``name \\t id,id,...`` per line.

    Safe against delimiter collisions: normalization has already collapsed
    tabs and newlines out of the keys.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for name in sorted(index.postings):
            ids = ",".join(str(i) for i in index.postings[name])
            f.write(f"{name}\t{ids}\n")
