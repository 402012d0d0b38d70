"""Hashed neighbourhood fingerprints of graphs and states.

Each vertex starts from a hash of its label and is re-hashed ``radius`` times
together with the sorted (edge label, neighbour code) pairs around it. Every
code at every iteration increments one of ``n_bits`` count buckets.

Hashing uses FNV-1a (64-bit offset ``0xcbf29ce484222325``, prime
``0x100000001b3``) for strings and the splitmix64 finaliser
(``0x9e3779b97f4a7c15``, ``0xbf58476d1ce4e5b9``, ``0x94d049bb133111eb``) to
combine integers, so fingerprints are identical across processes and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import LabeledGraph, State

DEFAULT_RADIUS = 2
DEFAULT_BITS = 2048

_MASK = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
SEED = 0x5EED


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK
    return h


def mix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def combine(values) -> int:
    h = SEED
    for v in values:
        h = mix64(h ^ v)
    return h


_label_hash_cache: dict[str, int] = {}


def label_hash(label: str) -> int:
    h = _label_hash_cache.get(label)
    if h is None:
        h = _label_hash_cache[label] = fnv1a64(label.encode("utf-8"))
    return h


@dataclass(frozen=True)
class Fingerprint:
    counts: np.ndarray
    radius: int

    @property
    def n_bits(self) -> int:
        return len(self.counts)


def _check(radius: int, n_bits: int) -> None:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if n_bits < 16:
        raise ValueError("n_bits must be >= 16")


def vertex_codes(g: LabeledGraph, radius: int) -> list[list[int]]:
    """Per-iteration vertex codes, ``radius + 1`` lists of length ``n``."""
    codes = [label_hash(lab) for lab in g.labels]
    out = [codes]
    for _ in range(radius):
        new = []
        for v in range(len(codes)):
            pairs = sorted((label_hash(lab), codes[w]) for w, lab in g.adj[v].items())
            new.append(combine([codes[v]] + [x for pair in pairs for x in pair]))
        codes = new
        out.append(codes)
    return out


def sparse_graph_fingerprint(g: LabeledGraph, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS) -> dict[int, int]:
    """Bucket -> count map; cached on the graph."""
    cache = g._fp
    if cache is None:
        cache = g._fp = {}
    fp = cache.get((radius, n_bits))
    if fp is None:
        fp = {}
        for codes in vertex_codes(g, radius):
            for c in codes:
                b = c % n_bits
                fp[b] = fp.get(b, 0) + 1
        cache[(radius, n_bits)] = fp
    return fp


def fingerprint_graph(g: LabeledGraph, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS) -> Fingerprint:
    _check(radius, n_bits)
    counts = np.zeros(n_bits, dtype=np.int64)
    for b, c in sparse_graph_fingerprint(g, radius, n_bits).items():
        counts[b] += c
    return Fingerprint(counts, radius)


def sparse_state_fingerprint(s: State, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS) -> dict[int, int]:
    out: dict[int, int] = {}
    for g in s.graphs:
        for b, c in sparse_graph_fingerprint(g, radius, n_bits).items():
            out[b] = out.get(b, 0) + c
    return out


def fingerprint_state(s: State, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS) -> Fingerprint:
    """Elementwise sum of member fingerprints."""
    _check(radius, n_bits)
    counts = np.zeros(n_bits, dtype=np.int64)
    for g in s.graphs:
        for b, c in sparse_graph_fingerprint(g, radius, n_bits).items():
            counts[b] += c
    return Fingerprint(counts, radius)


def state_matrix(states, radius: int = DEFAULT_RADIUS, n_bits: int = DEFAULT_BITS) -> np.ndarray:
    X = np.zeros((len(states), n_bits), dtype=np.float64)
    for i, s in enumerate(states):
        for b, c in sparse_state_fingerprint(s, radius, n_bits).items():
            X[i, b] = c
    return X
