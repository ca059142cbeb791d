import gzip
import struct

import numpy as np
import pytest

from spikeattack.data import gen_data, ingest_idx, read_dataset, read_idx, write_dataset
from spikeattack.numerics import ContractError


def _linear_accuracy(x, y, xt, yt):
    """Least-squares linear classifier with a bias column."""
    A = np.hstack([x, np.ones((len(x), 1))])
    w, *_ = np.linalg.lstsq(A, np.where(y == 1, 1.0, -1.0), rcond=None)
    pred = (np.hstack([xt, np.ones((len(xt), 1))]) @ w > 0).astype(int)
    return float(np.mean(pred == yt))


def test_separable_two_class():
    x, y, xt, yt = gen_data(2000, 500, 64, 2, 4.0, 0.1, seed=0)
    assert _linear_accuracy(x, y, xt, yt) >= 0.99
    assert x.min() >= 0 and x.max() <= 1
    assert np.bincount(y).tolist() == [1000, 1000]


def test_zero_separation_is_chance():
    x, y, xt, yt = gen_data(2000, 2000, 64, 2, 0.0, 0.1, seed=1)
    assert abs(_linear_accuracy(x, y, xt, yt) - 0.5) <= 0.05


def test_class_count_contract():
    with pytest.raises(ContractError):
        gen_data(10, 10, 8, 1)


def test_files_byte_identical(tmp_path):
    for name in ("a", "b"):
        write_dataset(tmp_path / name, *gen_data(50, 20, 8, 3, seed=7))
    for f in ("train_x", "train_y", "test_x", "test_y"):
        assert (tmp_path / "a" / f"{f}.spkt").read_bytes() == (tmp_path / "b" / f"{f}.spkt").read_bytes()
    back = read_dataset(tmp_path / "a")
    np.testing.assert_array_equal(back[1], gen_data(50, 20, 8, 3, seed=7)[1])


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        write_dataset(blocker / "sub", *gen_data(4, 4, 4, 2))


def _write_idx(path, arr, code):
    arr = np.asarray(arr)
    dt = {0x08: ">u1", 0x0C: ">i4"}[code]
    header = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    data = header + arr.astype(dt).tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(data)


@pytest.mark.parametrize("suffix", ["", ".gz"])
def test_idx_ingest(tmp_path, suffix):
    imgs = np.zeros((3, 4, 4), dtype=np.uint8)
    imgs[0, :2, :2] = 200
    imgs[1] = 100
    imgs[2, 2:, 2:] = 40
    _write_idx(tmp_path / f"img{suffix}", imgs, 0x08)
    _write_idx(tmp_path / f"lab{suffix}", [3, 1, 4], 0x08)
    assert read_idx(tmp_path / f"img{suffix}").shape == (3, 4, 4)
    x, y = ingest_idx(tmp_path / f"img{suffix}", tmp_path / f"lab{suffix}", side=2)
    np.testing.assert_allclose(x[0], [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(x[1], [0.5] * 4)
    np.testing.assert_allclose(x[2], [0.0, 0.0, 0.0, 0.2])
    np.testing.assert_array_equal(y, [3, 1, 4])


def test_idx_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(b"\x01\x02\x08\x01\x00\x00\x00\x01\x00")
    with pytest.raises(ContractError):
        read_idx(tmp_path / "bad")
