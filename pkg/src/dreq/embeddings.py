"""Fixed-dimension embedding stores and the dense linear-algebra kernel.

Stores hold float64 vectors keyed by string id, one store per embedding
space (entities, passages, queries, query-conditioned entity encodings).
A deterministic hash-seeded embedder stands in for neural encoders at
desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DimsConfig",
    "EmbeddingStore",
    "load_store",
    "save_store",
    "synthetic_embed",
    "linear",
    "softmax",
    "sigmoid",
    "cosine",
    "passage_key",
    "query_entity_key",
]


@dataclass(frozen=True)
class DimsConfig:
    """Embedding dimensions: k = query-conditioned entity encodings,
    m = entities, n = text passages, p = queries (and the hybrid space)."""

    k: int = 32
    m: int = 32
    n: int = 32
    p: int = 32

    def __post_init__(self) -> None:
        for name in ("k", "m", "n", "p"):
            if getattr(self, name) < 1:
                raise ValueError(f"dimension {name} must be >= 1, got {getattr(self, name)}")


def passage_key(doc_id: str, index: int) -> str:
    """Store key for passage `index` of document `doc_id`."""
    return f"{doc_id}::{index}"


def query_entity_key(query_id: str, entity_id: str) -> str:
    """Store key for the query-conditioned encoding of an entity."""
    return f"{query_id}::{entity_id}"


@dataclass
class EmbeddingStore:
    """Immutable-after-load map id -> vector, all sharing one dimension."""

    space: str
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"store dim must be >= 1, got {self.dim}")

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, key: str) -> bool:
        return key in self.vectors

    def ids(self) -> list[str]:
        return list(self.vectors.keys())

    def add(self, key: str, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(
                f"store '{self.space}' expects dim {self.dim}, got shape {vec.shape} for id {key!r}"
            )
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite components in vector for id {key!r}")
        if key in self.vectors:
            raise ValueError(f"duplicate id {key!r} in store '{self.space}'")
        self.vectors[key] = vec

    def get(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise KeyError(f"id {key!r} not found in store '{self.space}'") from None


def save_store(store: EmbeddingStore, path: str) -> None:
    """Write a store in the text format: header line, then `id<TAB>components`.

    Components use 17 significant digits so load(save(s)) is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#space={store.space} dim={store.dim}\n")
        for key, vec in store.vectors.items():
            comps = " ".join("%.17g" % c for c in vec)
            f.write(f"{key}\t{comps}\n")


def load_store(path: str) -> EmbeddingStore:
    """Load a store written by :func:`save_store`."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if not header.startswith("#space="):
            raise ValueError(f"{path}: missing store header, got {header!r}")
        try:
            space_part, dim_part = header[1:].split(" ")
            space = space_part.split("=", 1)[1]
            dim = int(dim_part.split("=", 1)[1])
        except (ValueError, IndexError) as e:
            raise ValueError(f"{path}: malformed header {header!r}") from e
        store = EmbeddingStore(space=space, dim=dim)
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'id<TAB>components'")
            key, comp_str = line.split("\t", 1)
            parts = comp_str.split()
            if len(parts) != dim:
                raise ValueError(
                    f"{path}:{line_no}: id {key!r} has {len(parts)} components, expected {dim}"
                )
            vec = np.array([float(x) for x in parts], dtype=np.float64)
            store.add(key, vec)
    return store


# --- deterministic synthetic embedder ---------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64_stream(seed: int, count: int) -> list[int]:
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
        out.append(z)
    return out


def synthetic_embed(namespace: str, id: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic unit vector derived from (namespace, id, seed).

    Hashes `namespace \\x1f id \\x1f seed` with FNV-1a-64, draws `dim`
    SplitMix64 words, maps the top 53 bits of each into [-1, 1), then
    L2-normalizes. Identical on every platform.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    key = "\x1f".join([namespace, id, str(seed)]).encode("utf-8")
    h = _fnv1a64(key)
    words = _splitmix64_stream(h, dim)
    comps = np.array([(w >> 11) / 2.0**53 * 2.0 - 1.0 for w in words], dtype=np.float64)
    norm = float(np.linalg.norm(comps))
    return comps / norm


# --- dense kernels -----------------------------------------------------------


def linear(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map W @ x + b with shape validation."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"W must be a matrix, got ndim {W.ndim}")
    r, c = W.shape
    if x.shape != (c,):
        raise ValueError(f"x has shape {x.shape}, expected ({c},) for W {W.shape}")
    if b.shape != (r,):
        raise ValueError(f"b has shape {b.shape}, expected ({r},) for W {W.shape}")
    return W @ x + b


def softmax(x) -> np.ndarray:
    """Numerically stable exp-normalization; output sums to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("softmax expects a non-empty 1-d array")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / np.sum(e)


def sigmoid(x):
    """Numerically stable logistic function, elementwise on arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero vectors are rejected."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"cosine expects equal-dim vectors, got {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    c = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, c))
