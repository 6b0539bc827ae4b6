"""Trainable string encoder: hashed char n-grams -> two-layer map -> R^d.

The output vector plays the role of the term representation used for
similarity search; with ``normalize_output`` on (the default) the output
is unit-L2, so cosine similarity equals the inner product.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import artifacts
from .features import featurize

NORM_EPS = 1e-12


@dataclass
class EncoderParams:
    n_min: int
    n_max: int
    buckets: int
    hidden: int
    dim: int
    W1: np.ndarray  # hidden x buckets
    b1: np.ndarray  # hidden
    W2: np.ndarray  # dim x hidden
    b2: np.ndarray  # dim
    normalize_output: bool = True
    lowercase: bool = False

    def copy(self):
        return replace(self, W1=self.W1.copy(), b1=self.b1.copy(),
                       W2=self.W2.copy(), b2=self.b2.copy())


@dataclass
class EncoderGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


def init_params(seed, n_min=2, n_max=4, buckets=4096, hidden=64, dim=32,
                normalize_output=True, lowercase=False):
    """Seeded uniform init: weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases."""
    if min(buckets, hidden, dim) < 1 or n_min < 1 or n_max < n_min:
        raise ValueError("invalid encoder dimensions")
    rng = np.random.default_rng(seed)
    s1 = 1.0 / np.sqrt(buckets)
    s2 = 1.0 / np.sqrt(hidden)
    return EncoderParams(
        n_min=n_min, n_max=n_max, buckets=buckets, hidden=hidden, dim=dim,
        W1=rng.uniform(-s1, s1, size=(hidden, buckets)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-s2, s2, size=(dim, hidden)),
        b2=np.zeros(dim),
        normalize_output=normalize_output, lowercase=lowercase,
    )


def featurize_text(params, text):
    return featurize(text, params.n_min, params.n_max, params.buckets,
                     lowercase=params.lowercase)


def forward_features(params, indices, values):
    """Forward pass from a sparse feature vector; returns (output, cache)."""
    z = params.W1[:, indices] @ values + params.b1
    h = np.maximum(z, 0.0)
    e = params.W2 @ h + params.b2
    norm = float(np.linalg.norm(e))
    if params.normalize_output and norm >= NORM_EPS:
        out = e / norm
    else:
        out = e
    return out, (indices, values, z, h, e, norm, out)


def encode(params, text):
    """Embed a string; unit-L2 output when normalization is active."""
    indices, values = featurize_text(params, text)
    out, _ = forward_features(params, indices, values)
    return out


def backward_features(params, cache, upstream):
    """Gradients of upstream . output w.r.t. params, given a forward cache.

    Returns (g_W2, g_b2, g_b1, indices, w1_cols) where the W1 gradient is
    nonzero only at ``indices`` with column block ``w1_cols`` (hidden x nnz);
    callers accumulating over a batch can scatter-add without densifying.
    """
    indices, values, z, h, e, norm, out = cache
    if params.normalize_output and norm >= NORM_EPS:
        # out = e/|e|; J^T u = (u - (u.out) out) / |e|
        g_e = (upstream - (upstream @ out) * out) / norm
    else:
        g_e = upstream
    g_W2 = np.outer(g_e, h)
    g_b2 = g_e
    g_h = (params.W2.T @ g_e) * (z > 0.0)
    w1_cols = np.outer(g_h, values)
    return g_W2, g_b2, g_h, indices, w1_cols


def encode_backward(params, text, upstream):
    """Exact gradients of upstream . encode(params, text) for every parameter."""
    indices, values = featurize_text(params, text)
    _, cache = forward_features(params, indices, values)
    g_W2, g_b2, g_b1, idx, w1_cols = backward_features(params, cache, upstream)
    g_W1 = np.zeros_like(params.W1)
    np.add.at(g_W1, (slice(None), idx), w1_cols)
    return EncoderGrads(W1=g_W1, b1=g_b1, W2=g_W2, b2=g_b2)


def save_params(path, params):
    meta = {
        "n_min": params.n_min, "n_max": params.n_max, "buckets": params.buckets,
        "hidden": params.hidden, "dim": params.dim,
        "normalize_output": params.normalize_output, "lowercase": params.lowercase,
    }
    artifacts.save_artifact(path, "encoder-params", meta,
                            {"W1": params.W1, "b1": params.b1,
                             "W2": params.W2, "b2": params.b2})


def load_params(path):
    meta, arrays = artifacts.load_artifact(path, "encoder-params")
    params = EncoderParams(
        n_min=meta["n_min"], n_max=meta["n_max"], buckets=meta["buckets"],
        hidden=meta["hidden"], dim=meta["dim"],
        W1=arrays["W1"], b1=arrays["b1"], W2=arrays["W2"], b2=arrays["b2"],
        normalize_output=meta["normalize_output"], lowercase=meta["lowercase"],
    )
    if params.W1.shape != (params.hidden, params.buckets) or \
       params.W2.shape != (params.dim, params.hidden) or \
       params.b1.shape != (params.hidden,) or params.b2.shape != (params.dim,):
        from .errors import ArtifactError
        raise ArtifactError(f"{path}: parameter shapes do not match declared dimensions")
    return params
