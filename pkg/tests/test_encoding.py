"""Coordinate encodings: normalization, Fourier features, embeddings."""

import numpy as np
import pytest

from cips.autodiff import Tensor, backward, mean, square, tensor_sum
from cips.encoding import (
    CoordEmbeddingTable, CoordGrid, EncoderFlags, FourierFeatureMap,
    embed_lookup, encode, fourier_encode, normalize_coords, raw_channels,
)
from cips.gradcheck import finite_diff_check


def grid_of(points, H=8, W=8, kind="cartesian"):
    return CoordGrid(kind=kind, H=H, W=W, points=np.asarray(points, dtype=np.float64))


# ---------------------------------------------------------------------------
# normalization

def test_normalize_corners():
    assert normalize_coords(0, 0, 256, 256) == (-1.0, -1.0)
    assert normalize_coords(255, 255, 256, 256) == (1.0, 1.0)


def test_normalize_midpoint_odd_extent():
    xn, yn = normalize_coords(128, 0, 256, 257)
    assert xn == 0.0
    assert yn == -1.0


def test_normalize_degenerate_extent_errors():
    with pytest.raises(ValueError):
        normalize_coords(0, 0, 1, 5)
    with pytest.raises(ValueError):
        CoordGrid(kind="cartesian", H=1, W=5, points=np.zeros((1, 2)))


def test_grid_validates_domain():
    with pytest.raises(ValueError):
        grid_of([(9.0, 0.0)], H=8, W=8)
    with pytest.raises(ValueError):
        grid_of([(0.0, -0.5)], H=8, W=8)


def test_cylindrical_wrap_at_construction():
    g = grid_of([(10.0, 1.0), (-2.0, 1.0)], H=4, W=8, kind="cylindrical")
    np.testing.assert_array_equal(g.points[:, 0], [2.0, 6.0])


# ---------------------------------------------------------------------------
# Fourier features

def test_fourier_zero_matrix_gives_zeros():
    g = grid_of([(0, 0), (3, 4), (7, 7)])
    fmap = FourierFeatureMap(B_fo=Tensor(np.zeros((2, 6)), requires_grad=True))
    out = fourier_encode(g, fmap)
    np.testing.assert_array_equal(out.data, np.zeros((3, 6)))


def test_fourier_single_column_sin_pi_over_2():
    # B_fo column (pi/2, 0) at point with x'=1, y'=0: sin(pi/2) = 1
    g = grid_of([(7.0, 3.5)], H=8, W=8)
    fmap = FourierFeatureMap(B_fo=Tensor(np.array([[np.pi / 2], [0.0]])))
    out = fourier_encode(g, fmap)
    np.testing.assert_allclose(out.data, [[1.0]], rtol=1e-15)


def test_fourier_bounded():
    rng = np.random.default_rng(0)
    g = grid_of(rng.uniform(0, 7, size=(50, 2)))
    fmap = FourierFeatureMap.init(n_features=64, std=10.0, seed=1)
    out = fourier_encode(g, fmap).data
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_fourier_cylindrical_wrap_bit_exact():
    W = 16
    ga = CoordGrid(kind="cylindrical", H=4, W=W, points=np.array([[0.0, 1.0]]))
    gb = CoordGrid(kind="cylindrical", H=4, W=W, points=np.array([[float(W), 1.0]]))
    fmap = FourierFeatureMap.init(n_features=32, kind="cylindrical", seed=2)
    a = fourier_encode(ga, fmap).data
    b = fourier_encode(gb, fmap).data
    assert a.tobytes() == b.tobytes()


def test_fourier_kind_mismatch_errors():
    g = grid_of([(0, 0)], kind="cartesian")
    fmap = FourierFeatureMap.init(n_features=8, kind="cylindrical")
    with pytest.raises(ValueError):
        fourier_encode(g, fmap)


def test_raw_channels_cylindrical_shape():
    g = CoordGrid(kind="cylindrical", H=4, W=8, points=np.array([[2.0, 1.0]]))
    raw = raw_channels(g)
    assert raw.shape == (1, 3)
    theta = 2 * np.pi * 2.0 / 8
    np.testing.assert_allclose(raw[0], [np.cos(theta), np.sin(theta), -1 / 3], rtol=1e-15)


# ---------------------------------------------------------------------------
# embeddings

def test_embed_integer_lookup_exact():
    table = CoordEmbeddingTable.init(H=8, W=8, d=4, seed=3)
    g = grid_of([(3.0, 5.0)])
    out = embed_lookup(g, table)
    expected = table.table.data[5 * 8 + 3]
    assert out.data[0].tobytes() == expected.tobytes()


def test_embed_midpoint_is_mean_of_neighbors():
    table = CoordEmbeddingTable.init(H=8, W=8, d=4, seed=4)
    g = grid_of([(3.5, 5.0)])
    out = embed_lookup(g, table)
    a = table.table.data[5 * 8 + 3]
    b = table.table.data[5 * 8 + 4]
    np.testing.assert_array_equal(out.data[0], 0.5 * a + 0.5 * b)


def test_embed_bilinear_four_corner_blend():
    table = CoordEmbeddingTable.init(H=8, W=8, d=3, seed=5)
    x, y = 2.25, 6.75
    g = grid_of([(x, y)])
    out = embed_lookup(g, table)
    t = table.table.data
    fx, fy = 0.25, 0.75
    expected = ((1 - fx) * (1 - fy) * t[6 * 8 + 2] + fx * (1 - fy) * t[6 * 8 + 3]
                + (1 - fx) * fy * t[7 * 8 + 2] + fx * fy * t[7 * 8 + 3])
    np.testing.assert_allclose(out.data[0], expected, rtol=1e-15)


def test_embed_cylindrical_wrap_lookup():
    table = CoordEmbeddingTable.init(H=4, W=8, d=4, wrap_x=True, seed=6)
    g = CoordGrid(kind="cylindrical", H=4, W=8, points=np.array([[10.0, 2.0]]))
    out = embed_lookup(g, table)
    assert out.data[0].tobytes() == table.table.data[2 * 8 + 2].tobytes()


def test_embed_fractional_wrap_blends_across_seam():
    table = CoordEmbeddingTable.init(H=4, W=8, d=4, wrap_x=True, seed=7)
    g = CoordGrid(kind="cylindrical", H=4, W=8, points=np.array([[7.5, 1.0]]))
    out = embed_lookup(g, table)
    a = table.table.data[1 * 8 + 7]
    b = table.table.data[1 * 8 + 0]
    np.testing.assert_array_equal(out.data[0], 0.5 * a + 0.5 * b)


def test_embed_out_of_domain_errors():
    table = CoordEmbeddingTable.init(H=8, W=8, d=4)
    bad = CoordGrid.__new__(CoordGrid)  # bypass grid validation to hit lookup's
    bad.kind = "cartesian"
    bad.H, bad.W = 8, 8
    bad.points = np.array([[0.0, 9.0]])
    with pytest.raises(ValueError):
        embed_lookup(bad, table)


def test_embed_locality():
    table = CoordEmbeddingTable.init(H=8, W=8, d=4, seed=8)
    pts = [(1.0, 1.0), (6.5, 6.5), (2.0, 2.0)]
    g = grid_of(pts)
    before = embed_lookup(g, table).data.copy()
    table.table.data[1 * 8 + 1] += 100.0  # row (x=1, y=1)
    after = embed_lookup(g, table).data
    assert not np.array_equal(before[0], after[0])      # support includes (1,1)
    np.testing.assert_array_equal(before[1], after[1])  # far away
    np.testing.assert_array_equal(before[2], after[2])  # integer (2,2) unaffected


# ---------------------------------------------------------------------------
# combined encode

def test_encode_concatenation_and_flags():
    g = grid_of([(0, 0), (3, 4)])
    fmap = FourierFeatureMap.init(n_features=6, seed=9)
    table = CoordEmbeddingTable.init(H=8, W=8, d=4, seed=10)
    full = encode(g, fmap, table).data
    assert full.shape == (2, 10)
    e_fo = fourier_encode(g, fmap).data
    e_co = embed_lookup(g, table).data
    np.testing.assert_array_equal(full, np.concatenate([e_fo, e_co], axis=1))

    z_emb = encode(g, fmap, table, EncoderFlags(zero_embeddings=True)).data
    np.testing.assert_array_equal(z_emb[:, 6:], 0.0)
    np.testing.assert_array_equal(z_emb[:, :6], e_fo)

    z_fo = encode(g, fmap, table, EncoderFlags(zero_fourier=True)).data
    np.testing.assert_array_equal(z_fo[:, :6], 0.0)
    np.testing.assert_array_equal(z_fo[:, 6:], e_co)


def test_encode_single_branch_variants():
    g = grid_of([(1, 2)])
    fmap = FourierFeatureMap.init(n_features=6, seed=11)
    table = CoordEmbeddingTable.init(H=8, W=8, d=4, seed=12)
    assert encode(g, fmap, None).shape == (1, 6)
    assert encode(g, None, table).shape == (1, 4)
    with pytest.raises(ValueError):
        encode(g, None, None)


def test_encode_gradients_flow_to_both_branches():
    rng = np.random.default_rng(13)
    pts = np.column_stack([rng.uniform(0, 7, 5), rng.uniform(0, 7, 5)])
    g = grid_of(pts)
    fmap = FourierFeatureMap.init(n_features=5, std=1.0, seed=14)
    table = CoordEmbeddingTable.init(H=8, W=8, d=3, seed=15)

    def build():
        return mean(square(encode(g, fmap, table)))

    report = finite_diff_check(
        build, {"B_fo": fmap.B_fo, "table": table.table},
        max_entries_per_param=40)
    assert report.passed, report.summary()
    assert report.max_rel_err < 1e-4
