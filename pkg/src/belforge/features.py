"""Character n-gram feature hashing with lane selection.

The hashing kernel exists twice: a Cython extension (belforge._fastfeat)
and a pure-Python fallback (belforge._pyfeat). The compiled lane is picked
at import when available; set BELFORGE_FORCE_PYTHON=1 to force the
fallback. Both lanes produce identical output (FNV-1a 64-bit over UTF-8
bytes, modulo the bucket count), so artifacts are lane-independent.
"""

import os

import numpy as np

from . import _pyfeat
from .errors import UnencodableTextError

try:
    from . import _fastfeat
except ImportError:
    _fastfeat = None

if os.environ.get("BELFORGE_FORCE_PYTHON"):
    _fastfeat = None

HAVE_FAST_LANE = _fastfeat is not None
_kernel = _fastfeat.ngram_hash_counts if HAVE_FAST_LANE else _pyfeat.ngram_hash_counts

BOUNDARY_START = "^"
BOUNDARY_END = "$"


def featurize(text, n_min, n_max, buckets, lowercase=False):
    """Hash the char n-grams of ``text`` into a sparse count vector.

    The text is trimmed, optionally lowercased, and wrapped with boundary
    markers before n-gram extraction. Returns (indices, counts): sorted
    int64 bucket indices and their float64 counts.

    Raises UnencodableTextError if the text is empty after trimming.
    """
    stripped = text.strip()
    if not stripped:
        raise UnencodableTextError("empty text cannot be featurized")
    if lowercase:
        stripped = stripped.lower()
    wrapped = BOUNDARY_START + stripped + BOUNDARY_END
    counts = _kernel(wrapped, n_min, n_max, buckets)
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return indices, values


def kernel_lanes():
    """Expose both kernels for benchmarking / equivalence tests."""
    lanes = {"python": _pyfeat.ngram_hash_counts}
    if _fastfeat is not None:
        lanes["cython"] = _fastfeat.ngram_hash_counts
    return lanes
