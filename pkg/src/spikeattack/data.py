"""Synthetic Gaussian-cluster datasets and IDX image ingestion.

Class means sit at distance ``separation * sigma`` from the centre of the
unit cube along mutually orthogonal random directions; samples add
isotropic noise of scale ``sigma`` and are clipped to ``[0, 1]``.
"""

import gzip
import os
import struct

import numpy as np

from .numerics import ContractError, load_tensor, make_rng, save_tensor


def make_clusters(n, d=64, classes=2, separation=4.0, sigma=0.1, seed=0, center=0.5):
    """Return the shared class means and ``n`` balanced labelled samples."""
    if classes < 2:
        raise ContractError("need at least two classes")
    if classes > d:
        raise ContractError("classes must not exceed the dimension")
    rng = make_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, classes)))
    means = center + separation * sigma * q.T
    return means, rng


def gen_data(n_train=2000, n_test=500, d=64, classes=2, separation=4.0, sigma=0.1, seed=0):
    """Train/test splits as ``(x_train, y_train, x_test, y_test)``."""
    means, rng = make_clusters(0, d, classes, separation, sigma, seed)
    out = []
    for n in (n_train, n_test):
        y = np.arange(n) % classes
        y = y[rng.permutation(n)]
        x = means[y] + sigma * rng.standard_normal((n, d))
        out += [np.clip(x, 0.0, 1.0), y.astype(np.int64)]
    return tuple(out)


def write_dataset(directory, x_train, y_train, x_test, y_test):
    """Tensor files for inputs, with labels in a float64 sidecar tensor."""
    os.makedirs(directory, exist_ok=True)
    for name, arr in (("train_x", x_train), ("train_y", y_train),
                      ("test_x", x_test), ("test_y", y_test)):
        save_tensor(os.path.join(directory, f"{name}.spkt"), np.asarray(arr, dtype=np.float64))


def read_dataset(directory):
    def get(name):
        return load_tensor(os.path.join(directory, f"{name}.spkt"))
    return (get("train_x"), get("train_y").astype(np.int64),
            get("test_x"), get("test_y").astype(np.int64))


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ContractError(f"{path}: not an IDX file")
    dtype = _IDX_TYPES.get(raw[2])
    if dtype is None:
        raise ContractError(f"{path}: unsupported IDX element type {raw[2]:#x}")
    ndim = raw[3]
    shape = struct.unpack_from(f">{ndim}I", raw, 4)
    return np.frombuffer(raw, dtype=dtype, offset=4 + 4 * ndim).reshape(shape)


def ingest_idx(images_path, labels_path, side=8, limit=None):
    """Images block-averaged to ``side x side`` and scaled to ``[0, 1]``."""
    imgs = read_idx(images_path).astype(np.float64)
    labels = read_idx(labels_path).astype(np.int64)
    if imgs.ndim != 3 or len(imgs) != len(labels):
        raise ContractError("IDX images must be (n, rows, cols) and match the labels")
    if limit is not None:
        imgs, labels = imgs[:limit], labels[:limit]
    n, rows, cols = imgs.shape
    br, bc = rows // side, cols // side
    if br == 0 or bc == 0:
        raise ContractError(f"cannot downsample {rows}x{cols} images to {side}x{side}")
    imgs = imgs[:, :br * side, :bc * side].reshape(n, side, br, side, bc).mean(axis=(2, 4))
    hi = imgs.max()
    x = imgs / hi if hi > 0 else imgs
    return x.reshape(n, side * side), labels
