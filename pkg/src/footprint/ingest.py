"""Parsing of the three corpus CSV files and users-likes matrix assembly.

The corpus is distributed as ``users.csv`` (profiles and the eight
dependent variables), ``likes.csv`` (like catalog) and ``users-likes.csv``
(one row per user-like association).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyMatrixError, ParseError, ReferentialError, ValidationError

# Canonical order of the dependent variables; also the users.csv column order.
TRAITS: tuple[str, ...] = ("gender", "age", "political", "ope", "con", "ext", "agr", "neu")
BINARY_TRAITS: frozenset[str] = frozenset({"gender", "political"})
USERS_HEADER: tuple[str, ...] = ("userid",) + TRAITS
MISSING_TOKENS = ("", "NA")

USERS_FILE = "users.csv"
LIKES_FILE = "likes.csv"
PAIRS_FILE = "users-likes.csv"


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    gender: float | None = None
    age: float | None = None
    political: float | None = None
    ope: float | None = None
    con: float | None = None
    ext: float | None = None
    agr: float | None = None
    neu: float | None = None


@dataclass(frozen=True)
class LikeRecord:
    like_id: str
    name: str


class TraitTable:
    """Per-user scores for the eight dependent variables.

    Values live in an ``(n_users, 8)`` float array in :data:`TRAITS` column
    order; missing cells are NaN. The array is read-only.
    """

    def __init__(self, user_ids: Sequence[str], values: np.ndarray):
        values = np.array(values, dtype=np.float64, copy=True)
        user_ids = tuple(str(u) for u in user_ids)
        if values.shape != (len(user_ids), len(TRAITS)):
            raise ValidationError(
                f"trait values must have shape ({len(user_ids)}, {len(TRAITS)}), got {values.shape}"
            )
        seen: set[str] = set()
        for uid in user_ids:
            if not uid:
                raise ValidationError("empty user id")
            if uid in seen:
                raise ValidationError(f"duplicate user id {uid!r}")
            seen.add(uid)
        for name in BINARY_TRAITS:
            col = values[:, TRAITS.index(name)]
            present = col[~np.isnan(col)]
            if np.any((present != 0) & (present != 1)):
                raise ValidationError(f"binary trait {name} must be 0 or 1")
        values.setflags(write=False)
        self.user_ids = user_ids
        self.values = values
        self._index = {uid: i for i, uid in enumerate(user_ids)}

    def __len__(self) -> int:
        return len(self.user_ids)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraitTable):
            return NotImplemented
        return self.user_ids == other.user_ids and np.array_equal(
            self.values, other.values, equal_nan=True
        )

    def __repr__(self) -> str:
        return f"TraitTable(n_users={len(self)}, missing={self.missing_count()})"

    def index_of(self, user_id: str) -> int:
        try:
            return self._index[user_id]
        except KeyError:
            raise ReferentialError("user", user_id) from None

    def __contains__(self, user_id: object) -> bool:
        return user_id in self._index

    def column(self, name: str) -> np.ndarray:
        return self.values[:, _trait_index(name)]

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def missing_count(self, name: str | None = None) -> int:
        mask = self.missing_mask()
        if name is None:
            return int(mask.sum())
        return int(mask[:, _trait_index(name)].sum())

    def is_complete(self) -> bool:
        return not self.missing_mask().any()

    def subset(self, user_ids: Sequence[str]) -> "TraitTable":
        rows = [self.index_of(u) for u in user_ids]
        return TraitTable(user_ids, self.values[rows])

    def with_column(self, name: str, column: np.ndarray) -> "TraitTable":
        values = self.values.copy()
        values[:, _trait_index(name)] = column
        return TraitTable(self.user_ids, values)

    def profiles(self) -> Iterator[UserProfile]:
        for uid, row in zip(self.user_ids, self.values):
            kwargs = {t: (None if math.isnan(v) else float(v)) for t, v in zip(TRAITS, row)}
            yield UserProfile(uid, **kwargs)

    @classmethod
    def from_profiles(cls, profiles: Iterable[UserProfile]) -> "TraitTable":
        profiles = list(profiles)
        values = np.array(
            [[np.nan if getattr(p, t) is None else getattr(p, t) for t in TRAITS] for p in profiles],
            dtype=np.float64,
        ).reshape(len(profiles), len(TRAITS))
        return cls([p.user_id for p in profiles], values)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(USERS_HEADER)
            for uid, row in zip(self.user_ids, self.values):
                writer.writerow([uid] + [_format_cell(t, v) for t, v in zip(TRAITS, row)])


def _trait_index(name: str) -> int:
    try:
        return TRAITS.index(name)
    except ValueError:
        raise ValidationError(f"unknown trait {name!r}; expected one of {', '.join(TRAITS)}") from None


def _format_cell(trait: str, value: float) -> str:
    if math.isnan(value):
        return "NA"
    if trait in BINARY_TRAITS:
        return str(int(value))
    return repr(float(value))


class LikeCatalog:
    """Ordered, id-unique collection of :class:`LikeRecord`."""

    def __init__(self, records: Iterable[LikeRecord]):
        self.records = tuple(records)
        self._index: dict[str, int] = {}
        for i, rec in enumerate(self.records):
            if not rec.like_id:
                raise ValidationError("empty like id")
            if rec.like_id in self._index:
                raise ValidationError(f"duplicate like id {rec.like_id!r}")
            self._index[rec.like_id] = i

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, like_id: object) -> bool:
        return like_id in self._index

    def index_of(self, like_id: str) -> int:
        try:
            return self._index[like_id]
        except KeyError:
            raise ReferentialError("like", like_id) from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.like_id for r in self.records)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["likeid", "name"])
            for rec in self.records:
                writer.writerow([rec.like_id, rec.name])


def _rows(path: str | os.PathLike) -> Iterator[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            yield reader.line_num, row


def _read_header(rows: Iterator[tuple[int, list[str]]], path) -> list[str]:
    try:
        _, header = next(rows)
    except StopIteration:
        raise ParseError("missing header row", str(path), 1) from None
    return header


def parse_users(path: str | os.PathLike) -> TraitTable:
    """Parse ``users.csv`` into a :class:`TraitTable`.

    Empty cells and the literal ``NA`` are missing values. Header names are
    checked case-insensitively against the fixed nine-column layout.
    """
    rows = _rows(path)
    header = _read_header(rows, path)
    if [h.strip().lower() for h in header] != list(USERS_HEADER):
        raise ParseError(
            f"expected header {','.join(USERS_HEADER)}, got {','.join(header)}", str(path), 1
        )
    ids: list[str] = []
    values: list[list[float]] = []
    for line, row in rows:
        if not row:
            continue
        if len(row) != len(USERS_HEADER):
            raise ParseError(f"expected {len(USERS_HEADER)} columns, got {len(row)}", str(path), line)
        parsed = []
        for trait, cell in zip(TRAITS, row[1:]):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                parsed.append(np.nan)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric {trait} value {cell!r}", str(path), line) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite {trait} value {cell!r}", str(path), line)
            if trait in BINARY_TRAITS and v not in (0.0, 1.0):
                raise ValidationError(f"{path}:{line}: {trait} must be 0 or 1, got {cell!r}")
            if trait == "age" and v < 0:
                raise ValidationError(f"{path}:{line}: negative age {cell!r}")
            parsed.append(v)
        ids.append(row[0].strip())
        values.append(parsed)
    arr = np.array(values, dtype=np.float64).reshape(len(ids), len(TRAITS))
    return TraitTable(ids, arr)


def parse_likes(path: str | os.PathLike) -> LikeCatalog:
    rows = _rows(path)
    _read_header(rows, path)
    records = []
    for line, row in rows:
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", str(path), line)
        records.append(LikeRecord(row[0].strip(), row[1]))
    return LikeCatalog(records)


def parse_pairs(path: str | os.PathLike) -> list[tuple[str, str]]:
    """Parse ``users-likes.csv``; duplicates are kept at this stage."""
    rows = _rows(path)
    _read_header(rows, path)
    pairs = []
    for line, row in rows:
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", str(path), line)
        pairs.append((row[0].strip(), row[1].strip()))
    return pairs


def write_pairs(path: str | os.PathLike, pairs: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["userid", "likeid"])
        writer.writerows(pairs)


@dataclass(frozen=True)
class UserLikeMatrix:
    """Binary user x like incidence matrix with stable id maps.

    ``data`` is a canonical CSR matrix of ones (sorted indices, no
    duplicates); ``row_ids[i]`` / ``col_ids[j]`` name row ``i`` / column ``j``.
    """

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    data: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        if self.data.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValidationError(
                f"matrix shape {self.data.shape} does not match id lists "
                f"({len(self.row_ids)}, {len(self.col_ids)})"
            )

    @classmethod
    def from_entries(cls, row_ids, col_ids, rows, cols) -> "UserLikeMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        shape = (len(row_ids), len(col_ids))
        m = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=shape)
        m.sum_duplicates()
        m.data[:] = 1
        m.sort_indices()
        return cls(tuple(row_ids), tuple(col_ids), m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_users(self) -> int:
        return self.data.shape[0]

    @property
    def n_likes(self) -> int:
        return self.data.shape[1]

    @property
    def n_pairs(self) -> int:
        return int(self.data.nnz)

    @property
    def density(self) -> float:
        cells = self.n_users * self.n_likes
        return self.n_pairs / cells if cells else 0.0

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.data.indptr).astype(np.int64)

    def col_degrees(self) -> np.ndarray:
        return np.bincount(self.data.indices, minlength=self.n_likes).astype(np.int64)

    def entries(self) -> tuple[np.ndarray, np.ndarray]:
        coo = self.data.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64)

    def pairs(self) -> list[tuple[str, str]]:
        rows, cols = self.entries()
        return [(self.row_ids[r], self.col_ids[c]) for r, c in zip(rows, cols)]

    def submatrix(self, row_mask: np.ndarray, col_mask: np.ndarray) -> "UserLikeMatrix":
        rows = np.flatnonzero(row_mask)
        cols = np.flatnonzero(col_mask)
        sub = self.data[rows][:, cols].tocsr()
        sub.sort_indices()
        return UserLikeMatrix(
            tuple(self.row_ids[i] for i in rows), tuple(self.col_ids[j] for j in cols), sub
        )

    def to_float(self) -> sp.csr_matrix:
        return self.data.astype(np.float64)

    def toarray(self) -> np.ndarray:
        return self.data.toarray().astype(np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UserLikeMatrix):
            return NotImplemented
        return (
            self.row_ids == other.row_ids
            and self.col_ids == other.col_ids
            and self.data.shape == other.data.shape
            and (self.data != other.data).nnz == 0
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                indptr=self.data.indptr,
                indices=self.data.indices,
                shape=np.array(self.data.shape),
                row_ids=np.array(self.row_ids, dtype=str),
                col_ids=np.array(self.col_ids, dtype=str),
            )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "UserLikeMatrix":
        with np.load(path, allow_pickle=False) as z:
            shape = tuple(int(s) for s in z["shape"])
            indices = z["indices"]
            m = sp.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, z["indptr"]), shape=shape)
            return cls(tuple(z["row_ids"].tolist()), tuple(z["col_ids"].tolist()), m)


def build_matrix(
    pairs: Sequence[tuple[str, str]], users: TraitTable, likes: LikeCatalog
) -> UserLikeMatrix:
    """Assemble the sparse matrix from user-like pairs.

    Duplicate pairs collapse to one entry. Users and likes that no pair
    references are left out; surviving rows and columns keep the order of
    ``users`` and ``likes``.
    """
    if not pairs:
        raise EmptyMatrixError("no user-like pairs; cannot build an empty matrix")
    u_idx = np.empty(len(pairs), dtype=np.int64)
    l_idx = np.empty(len(pairs), dtype=np.int64)
    for k, (uid, lid) in enumerate(pairs):
        u_idx[k] = users.index_of(uid)
        l_idx[k] = likes.index_of(lid)
    used_u = np.unique(u_idx)
    used_l = np.unique(l_idx)
    row_of = np.full(len(users), -1, dtype=np.int64)
    row_of[used_u] = np.arange(len(used_u))
    col_of = np.full(len(likes), -1, dtype=np.int64)
    col_of[used_l] = np.arange(len(used_l))
    row_ids = [users.user_ids[i] for i in used_u]
    col_ids = [likes.records[j].like_id for j in used_l]
    return UserLikeMatrix.from_entries(row_ids, col_ids, row_of[u_idx], col_of[l_idx])


def load_corpus(data_dir: str | os.PathLike) -> tuple[TraitTable, LikeCatalog, list[tuple[str, str]]]:
    data_dir = Path(data_dir)
    return (
        parse_users(data_dir / USERS_FILE),
        parse_likes(data_dir / LIKES_FILE),
        parse_pairs(data_dir / PAIRS_FILE),
    )
