"""MinHash signatures and banded locality-sensitive hashing over integer sets.

Hash functions are universal hashes ``(a*x + b) mod p`` with ``p`` the
Mersenne prime 2^61 - 1 and multipliers drawn from the full [1, p) range,
standing in for ideal random permutations. Set elements must fit in 31
bits (image indices and flattened map positions always do); the a*x
product is reduced exactly in uint64 by splitting the multiplier and
folding with 2^61 = 1 (mod p). Two items land in the same bucket of a band
when their r signature values in that band are identical; grouping takes
the transitive closure of co-bucketing via union-find.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Mapping

import numpy as np

MERSENNE_PRIME = (1 << 61) - 1
_ELEMENT_BOUND = 1 << 31
_MASK30 = np.uint64((1 << 30) - 1)
_PRIME = np.uint64(MERSENNE_PRIME)
_ELEMENT_CHUNK = 256


def _scatter(elements: np.ndarray) -> np.ndarray:
    """Fixed 64-bit finalizer (splitmix64) truncated to 31 bits.

    Linear families alone are visibly biased min-wise estimators on small
    structured sets (consecutive integers barely wrap the modulus), so
    elements are scattered first; per-function randomness still comes from
    the (a, b) parameters. uint64 arithmetic wraps mod 2^64 by design.
    """
    z = elements + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return z & np.uint64(_ELEMENT_BOUND - 1)


def _mod_hash(elements: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a * scatter(x) + b) mod p, exact in uint64 for a, b < p.

    a*x can reach 2^92, so split a = a_hi*2^31 + a_lo and fold the high
    product with 2^61 = 1 (mod p); every intermediate stays below 2^63.
    """
    x = _scatter(elements)[:, None]
    a_hi = a[None, :] >> np.uint64(31)
    a_lo = a[None, :] & np.uint64(_ELEMENT_BOUND - 1)
    t = a_hi * x  # < 2^61
    folded = (t >> np.uint64(30)) + ((t & _MASK30) << np.uint64(31))
    return (folded + a_lo * x + b[None, :]) % _PRIME


@dataclass(frozen=True)
class HashFamily:
    """n universal hash functions, deterministic given the seed."""

    seed: int
    n: int
    a: np.ndarray
    b: np.ndarray

    @classmethod
    def create(cls, seed: int, n: int) -> "HashFamily":
        if n < 1:
            raise ValueError("need at least one hash function")
        rng = np.random.default_rng(seed)
        a = rng.integers(1, MERSENNE_PRIME, size=n, dtype=np.uint64) | np.uint64(1)
        b = rng.integers(0, MERSENNE_PRIME, size=n, dtype=np.uint64)
        return cls(seed=seed, n=n, a=a, b=b)

    def hash_values(self, element: int) -> np.ndarray:
        """All n hash values of a single element."""
        return _mod_hash(np.array([element], dtype=np.uint64), self.a, self.b)[0]


@dataclass(frozen=True)
class BandingParams:
    b: int
    r: int

    def __post_init__(self) -> None:
        if self.b < 1 or self.r < 1:
            raise ValueError("band count and rows per band must be >= 1")

    @property
    def n(self) -> int:
        return self.b * self.r


def signature(items: Iterable[int], family: HashFamily) -> np.ndarray:
    """MinHash signature: values[i] = min over set elements of h_i(element)."""
    elems = np.fromiter(items, dtype=np.uint64)
    if elems.size == 0:
        raise ValueError("undefined min-hash for an empty set")
    if int(elems.max()) >= _ELEMENT_BOUND:
        raise ValueError(f"set elements must be < 2^31, got {int(elems.max())}")
    sig = np.full(family.n, MERSENNE_PRIME, dtype=np.uint64)
    for start in range(0, elems.size, _ELEMENT_CHUNK):
        chunk = elems[start : start + _ELEMENT_CHUNK]
        np.minimum(sig, _mod_hash(chunk, family.a, family.b).min(axis=0), out=sig)
    return sig


@dataclass
class BucketIndex:
    """Per band, a map from the exact r-value key to the items sharing it."""

    params: BandingParams
    bands: list[dict[bytes, list]]


def band_group(signatures: Mapping[Hashable, np.ndarray], params: BandingParams) -> BucketIndex:
    """Bucket items within each band by their exact r-value key."""
    n = params.n
    bands: list[dict[bytes, list]] = [defaultdict(list) for _ in range(params.b)]
    for item, sig in signatures.items():
        if len(sig) != n:
            raise ValueError(f"signature length {len(sig)} != b*r = {n}")
        contiguous = np.ascontiguousarray(sig, dtype=np.uint64)
        for band_index in range(params.b):
            key = contiguous[band_index * params.r : (band_index + 1) * params.r].tobytes()
            bands[band_index][key].append(item)
    return BucketIndex(params=params, bands=[dict(d) for d in bands])


def bucket_edges(index: BucketIndex) -> Iterator[tuple[Hashable, Hashable]]:
    """One spanning edge per (bucket, extra member); enough for components."""
    for band in index.bands:
        for members in band.values():
            first = members[0]
            for other in members[1:]:
                yield first, other


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self._parent: dict = {}
        self._size: dict = {}
        for item in items:
            self.add(item)

    def add(self, item: Hashable) -> None:
        if item not in self._parent:
            self._parent[item] = item
            self._size[item] = 1

    def find(self, item: Hashable):
        root = item
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[item] != root:
            self._parent[item], item = root, self._parent[item]
        return root

    def union(self, a: Hashable, b: Hashable) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]

    def groups(self) -> list[list]:
        """Disjoint groups, members sorted, groups ordered by first member."""
        out: dict = defaultdict(list)
        for item in self._parent:
            out[self.find(item)].append(item)
        groups = [sorted(members) for members in out.values()]
        groups.sort(key=lambda g: g[0])
        return groups


def components(index: BucketIndex) -> list[list]:
    """Connected components of the co-bucket graph; singletons included."""
    uf = UnionFind()
    for band in index.bands:
        for members in band.values():
            for item in members:
                uf.add(item)
    for a, b in bucket_edges(index):
        uf.union(a, b)
    return uf.groups()
