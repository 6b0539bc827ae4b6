"""PCA compression and nearest-neighbor linking: exact flat search plus an
inverted-file approximate index over unit-normalized compressed embeddings.
"""

from dataclasses import dataclass

import numpy as np

from . import artifacts
from .encoder import NORM_EPS, encode
from .errors import DataError


@dataclass
class PcaTransform:
    mean: np.ndarray          # d
    projection: np.ndarray    # d x k, orthonormal columns
    explained_variance: np.ndarray  # k, non-increasing


@dataclass
class FlatIndex:
    vectors: np.ndarray  # n x k, unit rows
    ids: np.ndarray      # n term_ids


@dataclass
class IvfIndex:
    centroids: np.ndarray  # nlist x k
    list_rows: list        # per centroid: m x k matrix of unit rows
    list_ids: list         # per centroid: m term_ids
    nprobe: int = 8


@dataclass
class Neighbor:
    term_id: int
    score: float


def fit_pca(matrix, k):
    """PCA via SVD of the mean-centered data.

    Components are ordered by descending variance; the sign convention
    (largest-magnitude entry of each component positive) makes the
    transform deterministic.
    """
    X = np.asarray(matrix, dtype=float)
    n, d = X.shape
    if n < 2 or k < 1 or k > min(n - 1, d):
        raise DataError(f"pca: k={k} out of range for {n}x{d} data")
    mean = X.mean(axis=0)
    _u, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    components = vt[:k]
    variance = (s[:k] ** 2) / (n - 1)
    # sign convention
    flip = components[np.arange(k), np.argmax(np.abs(components), axis=1)] < 0
    components[flip] *= -1.0
    return PcaTransform(mean=mean, projection=components.T.copy(),
                        explained_variance=variance)


def apply_pca_raw(transform, vectors):
    """Project without normalization (supports single vectors and batches)."""
    V = np.asarray(vectors, dtype=float)
    return (V - transform.mean) @ transform.projection


def reconstruct(transform, projected):
    return np.asarray(projected, dtype=float) @ transform.projection.T + transform.mean


def _unit_rows(M):
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=-1, keepdims=True)
    return np.where(norms >= NORM_EPS, M / np.maximum(norms, NORM_EPS), M)


def apply_pca(transform, vector):
    """Project a d-vector to k dims and unit-normalize (zero passes through)."""
    v = np.asarray(vector, dtype=float)
    if v.shape[-1] != transform.mean.shape[0]:
        raise DataError(
            f"pca: vector dim {v.shape[-1]} != transform dim {transform.mean.shape[0]}")
    return _unit_rows(apply_pca_raw(transform, v))


def build_flat(vectors, ids):
    V = _unit_rows(vectors)
    ids = np.asarray(ids, dtype=np.int64)
    if V.shape[0] != ids.shape[0]:
        raise DataError("flat index: row count != id count")
    return FlatIndex(vectors=V, ids=ids)


def _rank(scores, ids, top_k):
    order = np.lexsort((ids, -scores))[:top_k]
    return [Neighbor(term_id=int(ids[i]), score=float(scores[i])) for i in order]


def search_flat(index, query, top_k=10):
    """Exact top-k by inner product; ties broken by ascending term_id."""
    if index.vectors.shape[0] == 0:
        return []
    q = _unit_rows(np.asarray(query, dtype=float))
    return _rank(index.vectors @ q, index.ids, top_k)


def _kmeans_pp_init(rows, nlist, rng):
    n = rows.shape[0]
    centroids = np.empty((nlist, rows.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = rows[first]
    d2 = np.sum((rows - centroids[0]) ** 2, axis=1)
    for c in range(1, nlist):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2 / total), rng.random()))
            idx = min(idx, n - 1)
        centroids[c] = rows[idx]
        d2 = np.minimum(d2, np.sum((rows - centroids[c]) ** 2, axis=1))
    return centroids


def _assign(rows, centroids):
    d2 = (np.sum(rows ** 2, axis=1)[:, None]
          + np.sum(centroids ** 2, axis=1)[None, :]
          - 2.0 * rows @ centroids.T)
    return np.argmin(d2, axis=1)


def build_ivf(vectors, ids, nlist, seed=0, kmeans_iters=10):
    """Inverted-file index: k-means++ seeded centroids, Lloyd refinement,
    each row stored in the list of its nearest centroid."""
    rows = _unit_rows(vectors)
    ids = np.asarray(ids, dtype=np.int64)
    n = rows.shape[0]
    if nlist < 1 or nlist > n:
        raise DataError(f"ivf: nlist={nlist} out of range for {n} rows")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(rows, nlist, rng)
    assign = _assign(rows, centroids)
    for _ in range(kmeans_iters):
        for c in range(nlist):
            members = rows[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        new_assign = _assign(rows, centroids)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    list_rows = []
    list_ids = []
    for c in range(nlist):
        mask = assign == c
        list_rows.append(rows[mask])
        list_ids.append(ids[mask])
    return IvfIndex(centroids=centroids, list_rows=list_rows, list_ids=list_ids)


def search_ivf(index, query, top_k=10, nprobe=None):
    """Scan the nprobe nearest centroids' lists; same ordering contract as
    search_flat. nprobe > nlist is clamped with a warning."""
    nlist = index.centroids.shape[0]
    if nprobe is None:
        nprobe = index.nprobe
    if nprobe > nlist:
        import logging
        logging.getLogger(__name__).warning(
            "nprobe=%d clamped to nlist=%d", nprobe, nlist)
        nprobe = nlist
    nprobe = max(nprobe, 1)
    q = _unit_rows(np.asarray(query, dtype=float))
    cd = np.sum((index.centroids - q) ** 2, axis=1)
    probe = np.lexsort((np.arange(nlist), cd))[:nprobe]
    rows = [index.list_rows[c] for c in probe if len(index.list_rows[c])]
    idlists = [index.list_ids[c] for c in probe if len(index.list_ids[c])]
    if not rows:
        return []
    V = np.vstack(rows)
    ids = np.concatenate(idlists)
    return _rank(V @ q, ids, top_k)


def link_mention(text, params, transform, index, id_to_cui, top_k=10,
                 nprobe=None):
    """Encode, compress and search; the predicted CUI is the top neighbor's.

    Returns (predicted_cui, neighbors). Raises DataError when the index is
    empty or the mention cannot be encoded.
    """
    emb = encode(params, text)
    q = apply_pca(transform, emb)
    if isinstance(index, IvfIndex):
        neighbors = search_ivf(index, q, top_k=top_k, nprobe=nprobe)
    else:
        neighbors = search_flat(index, q, top_k=top_k)
    if not neighbors:
        raise DataError("no candidates: index is empty")
    return id_to_cui[neighbors[0].term_id], neighbors


def save_pca(path, transform):
    artifacts.save_artifact(path, "pca-transform", {},
                            {"mean": transform.mean,
                             "projection": transform.projection,
                             "explained_variance": transform.explained_variance})


def load_pca(path):
    _meta, arrays = artifacts.load_artifact(path, "pca-transform")
    return PcaTransform(mean=arrays["mean"], projection=arrays["projection"],
                        explained_variance=arrays["explained_variance"])


def save_flat(path, index):
    artifacts.save_artifact(path, "flat-index", {},
                            {"vectors": index.vectors, "ids": index.ids})


def load_flat(path):
    _meta, arrays = artifacts.load_artifact(path, "flat-index")
    return FlatIndex(vectors=arrays["vectors"], ids=arrays["ids"])


def save_ivf(path, index):
    sizes = np.array([len(i) for i in index.list_ids], dtype=np.int64)
    artifacts.save_artifact(
        path, "ivf-index", {"nprobe": index.nprobe},
        {"centroids": index.centroids,
         "rows": np.vstack([r for r in index.list_rows if len(r)])
                 if sizes.sum() else np.zeros((0, index.centroids.shape[1])),
         "ids": np.concatenate(index.list_ids) if sizes.sum()
                else np.zeros(0, dtype=np.int64),
         "sizes": sizes})


def load_ivf(path):
    meta, arrays = artifacts.load_artifact(path, "ivf-index")
    sizes = arrays["sizes"]
    list_rows = []
    list_ids = []
    off = 0
    for sz in sizes:
        sz = int(sz)
        list_rows.append(arrays["rows"][off:off + sz])
        list_ids.append(arrays["ids"][off:off + sz])
        off += sz
    return IvfIndex(centroids=arrays["centroids"], list_rows=list_rows,
                    list_ids=list_ids, nprobe=int(meta["nprobe"]))
