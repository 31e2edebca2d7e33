"""Rating-log and genre-table ingestion for the MovieLens wire formats.

Produces dense 0-based user/item index spaces (sorted by original id),
multi-hot genre vectors per item, and seeded train/validation/test
splits. Both supported formats share the same 18 canonical genres; the
100K format's extra "unknown" flag is dropped, so items carrying only
that flag end with an all-zero genre vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "FormatError",
    "UnknownGenre",
    "Interaction",
    "AspectCatalog",
    "DatasetSplit",
    "GENRES",
    "parse_ml100k",
    "parse_ml1m",
    "split",
    "dataset_stats",
    "interactions_to_arrays",
]

# Canonical genre order shared by the 100K and 1M formats. The 100K item
# table carries these as binary flags (preceded by an "unknown" flag that
# is dropped); the 1M table names them explicitly.
GENRES = (
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
)


class FormatError(ValueError):
    """A malformed row; the message carries the file path and line number."""


class UnknownGenre(ValueError):
    """A genre name outside the canonical list."""


class Interaction(NamedTuple):
    user: int
    item: int
    rating: float
    timestamp: int


@dataclass
class AspectCatalog:
    """Item -> multi-hot genre table plus the id maps built at ingestion.

    ``item_aspects[i]`` is the 0/1 genre vector of the item with dense
    index ``i``; ``user_ids``/``item_ids`` map dense indices back to the
    original dataset ids. ``missing_items`` counts rated items that had
    no metadata row (they get all-zero vectors).
    """

    aspect_names: tuple
    item_aspects: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    missing_items: int = 0

    @property
    def n_aspects(self) -> int:
        return len(self.aspect_names)

    @property
    def n_items(self) -> int:
        return self.item_aspects.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_ids.shape[0]

    def user_index(self, original_id: int) -> int:
        idx = int(np.searchsorted(self.user_ids, original_id))
        if idx >= len(self.user_ids) or self.user_ids[idx] != original_id:
            raise KeyError(f"unknown user id {original_id}")
        return idx

    def item_index(self, original_id: int) -> int:
        idx = int(np.searchsorted(self.item_ids, original_id))
        if idx >= len(self.item_ids) or self.item_ids[idx] != original_id:
            raise KeyError(f"unknown item id {original_id}")
        return idx


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int
    fractions: tuple

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def _read_lines(path):
    """Yield (line_number, text) decoding UTF-8 with a Latin-1 fallback.

    The 1M titles (and some 100K ones) carry Latin-1 bytes; genre fields
    are plain ASCII either way, so the fallback only affects titles.
    """
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.rstrip(b"\r\n")
            if not raw:
                continue
            try:
                yield lineno, raw.decode("utf-8")
            except UnicodeDecodeError:
                yield lineno, raw.decode("latin-1")


def _parse_ratings(path, sep, max_rating=5.0):
    users, items, ratings, stamps = [], [], [], []
    for lineno, line in _read_lines(path):
        parts = line.split(sep)
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            u = int(parts[0])
            i = int(parts[1])
            r = float(parts[2])
            t = int(parts[3])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if not (1.0 <= r <= max_rating):
            raise FormatError(f"{path}:{lineno}: rating {r} outside [1, {max_rating}]")
        users.append(u)
        items.append(i)
        ratings.append(r)
        stamps.append(t)
    return users, items, ratings, stamps


def _assemble(users, items, ratings, stamps, aspect_by_item):
    """Densify ids (sorted by original id) and build the catalog.

    The item index space is derived from the rating log, so metadata
    rows for never-rated items are ignored and rated items without
    metadata fall back to all-zero vectors (counted).
    """
    user_ids = np.unique(np.asarray(users, dtype=np.int64))
    item_ids = np.unique(np.asarray(items, dtype=np.int64))
    u_map = {int(v): k for k, v in enumerate(user_ids)}
    i_map = {int(v): k for k, v in enumerate(item_ids)}

    m = len(GENRES)
    table = np.zeros((len(item_ids), m), dtype=np.uint8)
    missing = 0
    for orig in item_ids:
        vec = aspect_by_item.get(int(orig))
        if vec is None:
            missing += 1
        else:
            table[i_map[int(orig)]] = vec

    interactions = [
        Interaction(u_map[u], i_map[i], r, t)
        for u, i, r, t in zip(users, items, ratings, stamps)
    ]
    catalog = AspectCatalog(
        aspect_names=GENRES,
        item_aspects=table,
        user_ids=user_ids,
        item_ids=item_ids,
        missing_items=missing,
    )
    return interactions, catalog


def parse_ml100k(ratings_path, items_path):
    """Parse the 100K tab-separated log and pipe-separated item table.

    Returns ``(interactions, catalog)``. The item table's 19 genre flags
    start with "unknown", which is dropped; an item flagged only
    "unknown" therefore gets an all-zero vector.
    """
    users, items, ratings, stamps = _parse_ratings(ratings_path, "\t")

    aspect_by_item = {}
    for lineno, line in _read_lines(items_path):
        parts = line.split("|")
        if len(parts) != 24:
            raise FormatError(
                f"{items_path}:{lineno}: expected 24 pipe-separated fields, got {len(parts)}"
            )
        try:
            item_id = int(parts[0])
            flags = [int(f) for f in parts[5:24]]
        except ValueError as exc:
            raise FormatError(f"{items_path}:{lineno}: {exc}") from None
        if any(f not in (0, 1) for f in flags):
            raise FormatError(f"{items_path}:{lineno}: genre flags must be 0/1")
        # flags[0] is "unknown"; the remaining 18 follow the canonical order.
        aspect_by_item[item_id] = np.asarray(flags[1:], dtype=np.uint8)

    return _assemble(users, items, ratings, stamps, aspect_by_item)


def parse_ml1m(ratings_path, movies_path):
    """Parse the 1M "::"-separated log and movie table.

    Genre names are matched against the canonical list; an unrecognized
    name raises UnknownGenre. An empty genre field yields an all-zero
    vector.
    """
    users, items, ratings, stamps = _parse_ratings(ratings_path, "::")

    genre_index = {name: k for k, name in enumerate(GENRES)}
    aspect_by_item = {}
    for lineno, line in _read_lines(movies_path):
        parts = line.split("::")
        if len(parts) != 3:
            raise FormatError(
                f"{movies_path}:{lineno}: expected 3 '::'-separated fields, got {len(parts)}"
            )
        try:
            item_id = int(parts[0])
        except ValueError as exc:
            raise FormatError(f"{movies_path}:{lineno}: {exc}") from None
        vec = np.zeros(len(GENRES), dtype=np.uint8)
        genre_field = parts[2].strip()
        if genre_field:
            for name in genre_field.split("|"):
                k = genre_index.get(name)
                if k is None:
                    raise UnknownGenre(
                        f"{movies_path}:{lineno}: genre {name!r} not in the canonical list"
                    )
                vec[k] = 1
        aspect_by_item[item_id] = vec

    return _assemble(users, items, ratings, stamps, aspect_by_item)


def split(interactions, fractions=(0.85, 0.05, 0.10), seed=42) -> DatasetSplit:
    """Assign each interaction to train/validation/test independently.

    Each interaction draws one uniform variate from the seeded generator
    and lands in the slice whose cumulative fraction covers it, so the
    partition is deterministic given the seed and the input order.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr):
        raise ValueError("fractions must be three nonnegative reals")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fr)}")
    rng = np.random.default_rng(seed)
    draws = rng.random(len(interactions))
    parts = ([], [], [])
    c1 = fr[0]
    c2 = fr[0] + fr[1]
    for x, inter in zip(draws, interactions):
        if x < c1:
            parts[0].append(inter)
        elif x < c2:
            parts[1].append(inter)
        else:
            parts[2].append(inter)
    return DatasetSplit(parts[0], parts[1], parts[2], seed=seed, fractions=fr)


def dataset_stats(interactions, catalog) -> dict:
    return {
        "n_ratings": len(interactions),
        "n_users": int(catalog.n_users),
        "n_items": int(catalog.n_items),
        "n_aspects": int(catalog.n_aspects),
    }


def interactions_to_arrays(interactions):
    """Convert a list of interactions to (users, items, ratings) arrays."""
    n = len(interactions)
    users = np.empty(n, dtype=np.int64)
    items = np.empty(n, dtype=np.int64)
    ratings = np.empty(n, dtype=np.float64)
    for k, inter in enumerate(interactions):
        users[k] = inter.user
        items[k] = inter.item
        ratings[k] = inter.rating
    return users, items, ratings
