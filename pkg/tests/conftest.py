import os
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from aspectmf.data import AspectCatalog, parse_ml100k, split
from synthdata import make_synthetic, write_ml100k_files


def _data_dir(name):
    root = os.environ.get("ASPECTMF_DATA_ROOT", "")
    if not root:
        return None
    base = Path(root) / name
    return base if base.is_dir() else None


def ml100k_dir():
    return _data_dir("ml-100k")


def ml1m_dir():
    return _data_dir("ml-1m")


requires_ml100k = pytest.mark.skipif(
    ml100k_dir() is None,
    reason="MovieLens 100K files not found under ASPECTMF_DATA_ROOT (see README)",
)
requires_ml1m = pytest.mark.skipif(
    ml1m_dir() is None,
    reason="MovieLens 1M files not found under ASPECTMF_DATA_ROOT (see README)",
)


def toy_catalog(n_items, aspect_rows, n_users=8, names=None):
    """Catalog over explicit aspect rows (list of 0/1 lists)."""
    table = np.asarray(aspect_rows, dtype=np.uint8)
    assert table.shape[0] == n_items
    m = table.shape[1]
    names = tuple(names) if names else tuple(f"aspect{k}" for k in range(m))
    return AspectCatalog(
        aspect_names=names,
        item_aspects=table,
        user_ids=np.arange(1, n_users + 1, dtype=np.int64),
        item_ids=np.arange(1, n_items + 1, dtype=np.int64),
    )


@pytest.fixture(scope="session")
def small_files(tmp_path_factory):
    """A compact planted dataset in the 100K wire format."""
    data = make_synthetic(n_users=120, n_items=180, n_ratings=6000, seed=11)
    out = tmp_path_factory.mktemp("smallml")
    ratings_path, items_path = write_ml100k_files(data, out)
    interactions, catalog = parse_ml100k(ratings_path, items_path)
    return SimpleNamespace(
        data=data,
        dir=out,
        ratings_path=ratings_path,
        items_path=items_path,
        interactions=interactions,
        catalog=catalog,
    )


@pytest.fixture(scope="session")
def planted(tmp_path_factory):
    """Full-scale planted dataset mirroring the 100K dimensions.

    Calibrated so the latent+bias structure dominates the genre signal,
    reproducing the real-data relationship where the factor model beats
    the genre-only regression on RMSE while both explain well.
    """
    data = make_synthetic(
        n_users=943, n_items=1682, n_ratings=100_000, seed=5,
        genre_strength=0.55, rank_strength=0.85, bias_scale=0.5,
        noise=0.5, n_latent=8,
    )
    out = tmp_path_factory.mktemp("plantedml")
    ratings_path, items_path = write_ml100k_files(data, out)
    interactions, catalog = parse_ml100k(ratings_path, items_path)
    ds = split(interactions, (0.85, 0.05, 0.10), 42)
    return SimpleNamespace(
        data=data,
        dir=out,
        interactions=interactions,
        catalog=catalog,
        split=ds,
    )
