import struct

import numpy as np
import pytest

from otxgrad.instances import (Image, PointCloud, cost_grid_l1, downsample,
                               foreground_side, gen_point_clouds,
                               gen_synthetic, load_mnist_pair,
                               read_idx_images, synthetic_image)


def write_idx(path, images):
    count, rows, cols = images.shape
    blob = struct.pack(">IIII", 0x00000803, count, rows, cols) + images.tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


@pytest.fixture
def idx_file(tmp_path):
    rng = np.random.default_rng(3)
    images = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    path = tmp_path / "images.idx"
    write_idx(path, images)
    return path, images


# --- grid cost ---

def test_grid_cost_small():
    assert np.array_equal(cost_grid_l1(1), [[0.0]])
    W2 = cost_grid_l1(2)
    assert W2.max() == 2.0
    assert W2[0, 3] == 2.0                 # (0,0) to (1,1)
    assert np.array_equal(W2, W2.T)
    assert np.all(np.diag(W2) == 0.0)


def test_grid_cost_matches_double_loop():
    m = 3
    expect = np.empty((9, 9))
    for a in range(m):
        for b in range(m):
            for a2 in range(m):
                for b2 in range(m):
                    expect[a * m + b, a2 * m + b2] = abs(a - a2) + abs(b - b2)
    assert np.array_equal(cost_grid_l1(m), expect)


def test_grid_cost_triangle_inequality():
    for m in range(1, 6):
        W = cost_grid_l1(m)
        tri = W[:, :, None] + W[None, :, :]   # tri[i,k,j] = W[i,k] + W[k,j]
        assert np.all(W <= tri.min(axis=1) + 1e-12)


# --- synthetic images ---

def test_foreground_side_rule():
    assert foreground_side(8) == 6          # 36/64 is the closest square to 50%
    assert foreground_side(2) == 1
    assert foreground_side(4) == 3


def test_synthetic_shapes_and_reproducibility():
    inst = gen_synthetic(8, 7)
    assert inst.n == 64
    assert inst.r.sum() == pytest.approx(1.0, abs=1e-12)
    assert inst.c.sum() == pytest.approx(1.0, abs=1e-12)
    again = gen_synthetic(8, 7)
    assert np.array_equal(inst.W, again.W)
    assert np.array_equal(inst.r, again.r)
    assert np.array_equal(inst.c, again.c)
    other = gen_synthetic(8, 8)
    assert not np.array_equal(inst.r, other.r)
    with pytest.raises(ValueError):
        gen_synthetic(1, 0)


def test_synthetic_foreground_dominates():
    # foreground pixels are U[0,10] vs background U[0,1]: the image total
    # is dominated by the square, so the top side^2 pixels hold most mass
    rng = np.random.default_rng(0)
    img = synthetic_image(8, rng)
    assert img.pixels.shape == (8, 8)
    assert np.all(img.pixels >= 0)
    side = foreground_side(8)
    top = np.sort(img.pixels.ravel())[-side * side:]
    assert top.sum() / img.pixels.sum() > 0.8


def test_image_validation():
    with pytest.raises(ValueError):
        Image(2, np.array([[1.0, -0.5], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        Image(2, np.ones((3, 3)))
    with pytest.raises(ValueError):
        Image(2, np.zeros((2, 2))).marginal()   # zero mass


# --- point clouds ---

def test_point_clouds_match_recomputation():
    inst = gen_point_clouds(4, 11)
    rng = np.random.default_rng(11)
    X = rng.normal(size=(4, 2))
    Y = rng.normal(size=(4, 2))
    expect = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1))
    assert np.abs(inst.W - expect).max() < 1e-12
    assert np.array_equal(inst.r, np.full(4, 0.25))
    sq = gen_point_clouds(4, 11, squared=True)
    assert np.abs(sq.W - expect ** 2).max() < 1e-12


def test_coincident_clouds_zero_cost():
    from otxgrad.core import OTInstance
    from otxgrad.oracle import exact_ot
    rng = np.random.default_rng(1)
    X = rng.normal(size=(5, 2))
    W = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
    u = np.full(5, 0.2)
    assert exact_ot(OTInstance.make(W, u, u)).value == 0.0


def test_point_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(np.ones((3, 3)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        gen_point_clouds(0, 1)


# --- IDX / MNIST ---

def test_idx_roundtrip(idx_file):
    path, images = idx_file
    assert np.array_equal(read_idx_images(path), images)


def test_idx_errors(tmp_path, idx_file):
    path, images = idx_file
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0x00000801, 1, 2, 2) + b"\0" * 4)
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(bad)
    trunc = tmp_path / "trunc.idx"
    trunc.write_bytes(path.read_bytes()[:100])
    with pytest.raises(ValueError, match="truncated"):
        read_idx_images(trunc)
    tiny = tmp_path / "tiny.idx"
    tiny.write_bytes(b"\x00\x00")
    with pytest.raises(ValueError, match="truncated"):
        read_idx_images(tiny)
    with pytest.raises(IndexError):
        load_mnist_pair(path, 0, 3, 14)


def test_mnist_pair_properties(idx_file):
    path, _ = idx_file
    inst = load_mnist_pair(path, 0, 2, 14)
    assert inst.n == 196
    assert inst.r.min() > 0                 # +0.01 offset
    assert inst.r.sum() == pytest.approx(1.0, abs=1e-12)
    assert inst.W.max() == 2 * 13.0
    again = load_mnist_pair(path, 0, 2, 14)
    assert np.array_equal(inst.r, again.r)


def test_all_zero_images_give_uniform(tmp_path):
    path = tmp_path / "zeros.idx"
    write_idx(path, np.zeros((2, 28, 28), dtype=np.uint8))
    inst = load_mnist_pair(path, 0, 1, 14)
    assert np.abs(inst.r - 1.0 / 196).max() < 1e-15


def test_downsample_pooling():
    const = np.full((28, 28), 0.4)
    assert np.allclose(downsample(const, 14), 0.4)     # 28 % 14 == 0: pooling
    assert np.allclose(downsample(const, 9), 0.4)      # bilinear path
    blocks = np.kron(np.arange(4.0).reshape(2, 2), np.ones((14, 14)))
    pooled = downsample(blocks, 2)
    assert np.array_equal(pooled, [[0.0, 1.0], [2.0, 3.0]])
    # bilinear keeps a horizontal ramp monotone with constant rows
    ramp = np.tile(np.arange(28.0), (28, 1))
    d = downsample(ramp, 9)
    assert np.allclose(d, d[0])
    assert np.all(np.diff(d[0]) > 0)
    with pytest.raises(ValueError):
        downsample(const, 0)
    with pytest.raises(ValueError):
        downsample(const, 29)
