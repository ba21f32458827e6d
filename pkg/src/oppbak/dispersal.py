"""(n, k) dispersal codec: split a payload into n fragments, any k rebuild it.

Systematic maximum-distance-separable coding over GF(256): the first k
fragments are the payload chunks themselves, the remaining n - k are
parity rows of a Vandermonde-derived matrix whose every k-row submatrix
is invertible. k = 1 degenerates to plain n-way replication. Byte-level
math runs through a 256x256 product table with numpy, so splitting and
rebuilding large payloads stays cheap.

Wire format (big-endian, fixed 51-byte header, then the chunk bytes):

    offset  size  field
    0       32    item id, UTF-8, NUL padded
    32      1     fragment index
    33      1     n
    34      1     k
    35      8     original payload size (u64)
    43      8     item version (u64)

Chunk size is ceil(original_size / k); the payload is zero-padded to
k * chunk and the true length travels in the header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .model import Fragment, IntegrityError, UsageError

_HEADER = struct.Struct(">32sBBBQQ")
HEADER_SIZE = _HEADER.size  # 51
MAX_FRAGMENTS = 255  # distinct nonzero-safe evaluation points in GF(256)

_PRIMITIVE_POLY = 0x11D


class InsufficientFragments(UsageError):
    """Fewer than k distinct fragment indices were supplied."""


class FragmentMismatch(IntegrityError):
    """Fragments claim inconsistent headers and cannot belong to one set."""


def _build_tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= _PRIMITIVE_POLY
    exp[255:510] = exp[:255]
    # full product table: mul[a, b] = a * b in GF(256)
    idx = log[:, None] + log[None, :]
    mul = exp[idx]
    mul[0, :] = 0
    mul[:, 0] = 0
    return exp, log, mul


_EXP, _LOG, _MUL = _build_tables()


def gf_mul(a: int, b: int) -> int:
    return int(_MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in GF(256)")
    return int(_EXP[255 - _LOG[a]])


def gf_pow(a: int, e: int) -> int:
    if e == 0:
        return 1
    if a == 0:
        return 0
    return int(_EXP[(_LOG[a] * e) % 255])


def _invert(matrix: list[list[int]]) -> list[list[int]]:
    """Gauss-Jordan inverse of a square matrix over GF(256)."""
    size = len(matrix)
    aug = [row[:] + [1 if i == j else 0 for j in range(size)]
           for i, row in enumerate(matrix)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col]), None)
        if pivot is None:
            raise IntegrityError("singular matrix: fragments are not independent")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = gf_inv(aug[col][col])
        aug[col] = [gf_mul(v, inv) for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [v ^ gf_mul(factor, p) for v, p in zip(aug[r], aug[col])]
    return [row[size:] for row in aug]


@lru_cache(maxsize=None)
def _encode_matrix(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """n x k matrix whose top k rows are the identity and whose every
    k-row submatrix is invertible."""
    vander = [[gf_pow(i, j) for j in range(k)] for i in range(n)]
    top_inv = _invert([row[:] for row in vander[:k]])
    rows = []
    for i in range(n):
        row = [0] * k
        for j in range(k):
            acc = 0
            for t in range(k):
                acc ^= gf_mul(vander[i][t], top_inv[t][j])
            row[j] = acc
        rows.append(tuple(row))
    return tuple(rows)


def chunk_size(original_size: int, k: int) -> int:
    return -(-original_size // k)


def fragment_wire_size(original_size: int, k: int) -> int:
    """Bytes one stored fragment occupies: header plus its payload chunk."""
    return HEADER_SIZE + chunk_size(original_size, k)


@dataclass(frozen=True)
class FragmentSet:
    """All n fragments of one split, in index order."""

    n: int
    k: int
    original_size: int
    fragments: tuple[Fragment, ...]

    @property
    def chunk(self) -> int:
        return chunk_size(self.original_size, self.k)

    @property
    def storage_bytes(self) -> int:
        return self.n * (HEADER_SIZE + self.chunk)


def _combine(rows: Sequence[Sequence[int]], shards: np.ndarray) -> np.ndarray:
    """Matrix-times-shards over GF(256): rows (r x k) applied to shards (k x c)."""
    out = np.zeros((len(rows), shards.shape[1]), dtype=np.uint8)
    for i, row in enumerate(rows):
        acc = out[i]
        for coeff, shard in zip(row, shards):
            if coeff == 0:
                continue
            if coeff == 1:
                acc ^= shard
            else:
                acc ^= _MUL[coeff][shard]
    return out


def split(
    payload: bytes, n: int, k: int, *, item_id: str = "", version: int = 1
) -> FragmentSet:
    """Encode a payload into n fragments such that any k reconstruct it.

    Deterministic: the same inputs always yield the same fragment bytes.
    """
    if not payload:
        raise UsageError("cannot split an empty payload")
    if not 1 <= k <= n:
        raise UsageError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n > MAX_FRAGMENTS:
        raise UsageError(f"n must be <= {MAX_FRAGMENTS}, got {n}")
    if len(item_id.encode("utf-8")) > 32:
        raise UsageError(f"item id {item_id!r} exceeds the 32-byte header slot")
    size = len(payload)
    chunk = chunk_size(size, k)
    padded = payload + b"\x00" * (k * chunk - size)
    data = np.frombuffer(padded, dtype=np.uint8).reshape(k, chunk)
    matrix = _encode_matrix(n, k)
    parity = _combine(matrix[k:], data) if n > k else None
    fragments = []
    for i in range(n):
        chunk_bytes = data[i].tobytes() if i < k else parity[i - k].tobytes()
        fragments.append(
            Fragment(
                item_id=item_id,
                version=version,
                index=i,
                n=n,
                k=k,
                original_size=size,
                payload=chunk_bytes,
            )
        )
    return FragmentSet(n=n, k=k, original_size=size, fragments=tuple(fragments))


def reconstruct(fragments: Iterable[Fragment]) -> bytes:
    """Rebuild the exact original payload from any k distinct fragments."""
    frags = list(fragments)
    by_index: dict[int, Fragment] = {}
    for f in frags:
        by_index.setdefault(f.index, f)
    if not by_index:
        raise InsufficientFragments("no fragments supplied")
    ref = next(iter(by_index.values()))
    for f in by_index.values():
        if (f.item_id, f.version, f.n, f.k, f.original_size) != (
            ref.item_id, ref.version, ref.n, ref.k, ref.original_size,
        ):
            raise FragmentMismatch(
                f"fragment {f.index} headers disagree with fragment {ref.index}"
            )
        if f.index >= ref.n:
            raise FragmentMismatch(f"fragment index {f.index} outside n={ref.n}")
        if f.payload is None:
            raise UsageError(f"fragment {f.index} carries no payload bytes")
    k = ref.k
    if len(by_index) < k:
        raise InsufficientFragments(
            f"need {k} distinct fragments, got {len(by_index)}"
        )
    chunk = chunk_size(ref.original_size, k)
    for f in by_index.values():
        if len(f.payload) != chunk:  # type: ignore[arg-type]
            raise FragmentMismatch(
                f"fragment {f.index} payload is {len(f.payload)} bytes, "  # type: ignore[arg-type]
                f"expected {chunk}"
            )
    chosen = sorted(by_index)[:k]
    shards = np.stack(
        [np.frombuffer(by_index[i].payload, dtype=np.uint8) for i in chosen]
    )
    if chosen == list(range(k)):
        data = shards  # systematic fast path: the chunks are the payload
    else:
        matrix = _encode_matrix(ref.n, k)
        sub = [list(matrix[i]) for i in chosen]
        data = _combine(_invert(sub), shards)
    return data.reshape(-1).tobytes()[: ref.original_size]


def pack_fragment(fragment: Fragment) -> bytes:
    """Serialize a fragment to its wire bytes (header then chunk)."""
    if fragment.payload is None:
        raise UsageError("cannot pack a metadata-only fragment")
    slot = fragment.item_id.encode("utf-8")
    if len(slot) > 32:
        raise UsageError(f"item id {fragment.item_id!r} exceeds the 32-byte header slot")
    header = _HEADER.pack(
        slot,
        fragment.index,
        fragment.n,
        fragment.k,
        fragment.original_size,
        fragment.version,
    )
    return header + fragment.payload


def unpack_fragment(wire: bytes) -> Fragment:
    """Parse wire bytes back into a fragment; exact inverse of `pack_fragment`."""
    if len(wire) < HEADER_SIZE:
        raise FragmentMismatch(f"wire record of {len(wire)} bytes is shorter than a header")
    slot, index, n, k, original_size, version = _HEADER.unpack_from(wire)
    payload = wire[HEADER_SIZE:]
    expected = chunk_size(original_size, k) if k else 0
    if len(payload) != expected:
        raise FragmentMismatch(
            f"payload of {len(payload)} bytes does not match chunk size {expected}"
        )
    return Fragment(
        item_id=slot.rstrip(b"\x00").decode("utf-8"),
        version=version,
        index=index,
        n=n,
        k=k,
        original_size=original_size,
        payload=payload,
    )
