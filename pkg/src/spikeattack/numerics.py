"""Dense float64 arrays, seeded generators and the SPKT tensor file format.

Arrays are plain ``numpy.ndarray`` objects with dtype float64 in C order.
Random streams come from numpy's PCG64 bit generator; child streams for
parallel workers are derived through ``SeedSequence.spawn``.
"""

import struct

import numpy as np

MAGIC = b"SPKT"


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


def as_tensor(a):
    """Return ``a`` as a C-contiguous float64 array (no copy when possible)."""
    # ascontiguousarray would promote 0-d input to 1-d
    return np.asarray(a, dtype=np.float64, order="C")


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"inner extents differ: {a.shape} vs {b.shape}")
    return a @ b


def make_rng(seed):
    """Seeded PCG64 generator. Identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn(rng, n):
    """Derive ``n`` independent child generators from ``rng``."""
    seeds = rng.bit_generator.seed_seq.spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in seeds]


def uniform(rng, shape, lo=0.0, hi=1.0):
    if lo > hi:
        raise ContractError(f"uniform: lo={lo} > hi={hi}")
    if lo == hi:
        # still advance the stream so call sequences stay aligned
        rng.random(shape)
        return np.full(shape, float(lo))
    return lo + (hi - lo) * rng.random(shape)


def save_tensor(path, a):
    """Write ``a`` as: magic, u32 rank, u64 extents, little-endian f64 payload."""
    a = as_tensor(a)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.astype("<f8", copy=False).tobytes(order="C"))


def load_tensor(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ContractError(f"{path}: not an SPKT tensor file")
    (rank,) = struct.unpack_from("<I", raw, 4)
    shape = struct.unpack_from(f"<{rank}Q", raw, 8)
    offset = 8 + 8 * rank
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = raw[offset:]
    if len(payload) != 8 * count:
        raise ContractError(f"{path}: payload holds {len(payload)} bytes, expected {8 * count}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
