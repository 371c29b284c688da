"""Semantic clustering of knowledge-concept texts.

The cluster map feeds the false-negative indicator of the contrastive losses:
two KC instances whose texts land in the same cluster are never used as
negatives for each other. Clusters come from single-linkage agglomeration
under cosine distance with a cutoff, with undersized components dissolved
into singletons (a singleton behaves as "no elimination").
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import AnnotatedQuestion
from .errors import InputError, NumericalError


@dataclass
class ClusterAssignment:
    """Total map KC id -> cluster id, plus the KC texts for provenance."""

    cluster_of: dict[int, int]
    kc_texts: dict[int, str]

    @property
    def num_clusters(self) -> int:
        return len(set(self.cluster_of.values()))

    def cluster(self, kc_id: int) -> int:
        if kc_id not in self.cluster_of:
            raise InputError(f"unknown KC id {kc_id}")
        return self.cluster_of[kc_id]

    def to_record(self) -> dict:
        return {
            "cluster_of": {str(k): v for k, v in sorted(self.cluster_of.items())},
            "kc_texts": {str(k): v for k, v in sorted(self.kc_texts.items())},
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ClusterAssignment":
        return cls(
            cluster_of={int(k): int(v) for k, v in rec["cluster_of"].items()},
            kc_texts={int(k): str(v) for k, v in rec["kc_texts"].items()},
        )


def build_kc_universe(corpus: list[AnnotatedQuestion]) -> tuple[list[str], dict[str, int]]:
    """Collect unique KC texts across the corpus; ids follow sorted order."""
    unique = sorted({kc for aq in corpus for kc in aq.kcs})
    return unique, {text: i for i, text in enumerate(unique)}


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------

def hashed_token_embeddings(kcs: list[str], dim: int = 256) -> np.ndarray:
    """Deterministic signed bag-of-tokens fallback (no trained model needed)."""
    if dim < 2:
        raise InputError("hashed embedding dimension must be >= 2")
    out = np.zeros((len(kcs), dim), dtype=np.float64)
    for row, text in enumerate(kcs):
        for token in text.lower().split():
            digest = hashlib.md5(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            out[row, bucket] += sign
        norm = np.linalg.norm(out[row])
        if norm > 0:
            out[row] /= norm
    return out


def load_embedding_file(path: str, kcs: list[str]) -> np.ndarray:
    """Read an external KC embedding file: header "dim=<d>", then "id f f ..."."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise InputError(f"{path}: expected header 'dim=<d>', got {header!r}")
        dim = int(header.split("=", 1)[1])
        vectors: dict[int, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            kc_id = int(parts[0])
            vals = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            if vals.shape[0] != dim:
                raise InputError(
                    f"{path}:{lineno}: expected {dim} floats, got {vals.shape[0]}"
                )
            vectors[kc_id] = vals
    if len(vectors) != len(kcs):
        raise InputError(
            f"{path}: file has {len(vectors)} rows but corpus has {len(kcs)} KCs"
        )
    return np.stack([vectors[i] for i in range(len(kcs))])


def embed_kc_texts(provider, kcs: list[str]) -> np.ndarray:
    """Call a pluggable provider ``f(list[str]) -> (n, d) array`` and sanity-check."""
    if not kcs:
        raise InputError("embed_kc_texts requires a non-empty KC list")
    embeddings = np.asarray(provider(kcs), dtype=np.float64)
    if embeddings.shape[0] != len(kcs) or embeddings.ndim != 2 or embeddings.shape[1] < 2:
        raise InputError(
            f"provider returned shape {embeddings.shape}, expected ({len(kcs)}, d>=2)"
        )
    if not np.all(np.isfinite(embeddings)):
        raise NumericalError("KC embeddings contain non-finite values")
    return embeddings


# ---------------------------------------------------------------------------
# Single-linkage clustering with a cosine-distance cutoff
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # anchor to the lower index so labels stay order-independent
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def cluster_kcs(
    embeddings: np.ndarray,
    kc_texts: list[str],
    threshold: float = 0.15,
    min_cluster_size: int = 2,
) -> ClusterAssignment:
    """Cluster KC embeddings; ids are positional (row i -> KC id i).

    Single-linkage components are exactly the connected components of the
    graph joining pairs at cosine distance <= threshold. Components smaller
    than ``min_cluster_size`` dissolve into singletons. Cluster ids are
    assigned by each cluster's smallest member KC id, so the partition is
    invariant to input permutation up to relabeling.
    """
    if not (0.0 < threshold < 1.0):
        raise InputError(f"threshold must be in (0, 1), got {threshold}")
    if min_cluster_size < 2:
        raise InputError(f"min_cluster_size must be >= 2, got {min_cluster_size}")
    x = np.asarray(embeddings, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericalError("embeddings contain non-finite values")
    n = x.shape[0]
    if n != len(kc_texts):
        raise InputError("embeddings row count must match kc_texts length")
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = x / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    dist = 1.0 - cos
    uf = _UnionFind(n)
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] <= threshold:
                uf.union(i, j)
    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(uf.find(i), []).append(i)
    groups: list[list[int]] = []
    for root in members:
        grp = members[root]
        if len(grp) >= min_cluster_size:
            groups.append(sorted(grp))
        else:
            groups.extend([m] for m in grp)
    groups.sort(key=lambda g: g[0])
    cluster_of = {kc: cid for cid, grp in enumerate(groups) for kc in grp}
    return ClusterAssignment(
        cluster_of=cluster_of, kc_texts={i: kc_texts[i] for i in range(n)}
    )


def same_cluster(assignment: ClusterAssignment, kc1: int, kc2: int) -> bool:
    return assignment.cluster(kc1) == assignment.cluster(kc2)
