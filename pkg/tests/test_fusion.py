import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panokit.errors import ChannelMismatch, HeadDivisibility, ShapeMismatch
from panokit.fusion import (
    MODALITY_ORDER,
    MipfWeights,
    VjcWeights,
    bev_to_voxel_logits,
    conv1d,
    grid_sample_bilinear,
    identity_grid,
    mipf_forward,
    vjc_forward,
    vjc_offset,
    voxel_logits_to_bev,
    width_mean,
)


def zero_vjc(C=1, hidden=2, **overrides):
    base = dict(conv1_w=np.zeros((hidden, C, 3)), conv1_b=np.zeros(hidden),
                conv2_w=np.zeros((hidden, hidden, 3)), conv2_b=np.zeros(hidden),
                linear_w=np.zeros(hidden), linear_b=0.0)
    base.update(overrides)
    return VjcWeights(**base)


def random_vjc(rng, C=4, hidden=6):
    return VjcWeights(conv1_w=rng.normal(size=(hidden, C, 3)),
                      conv1_b=rng.normal(size=hidden),
                      conv2_w=rng.normal(size=(hidden, hidden, 3)),
                      conv2_b=rng.normal(size=hidden),
                      linear_w=rng.normal(size=hidden),
                      linear_b=float(rng.normal()))


def test_width_mean():
    F = np.arange(24, dtype=float).reshape(2, 3, 4)
    np.testing.assert_array_equal(width_mean(F), F.mean(axis=2))


def test_conv1d_shift_kernels():
    x = np.array([[1.0, 2.0, 3.0]])
    left = conv1d(x, np.array([[[1.0, 0.0, 0.0]]]), np.zeros(1))
    np.testing.assert_array_equal(left, [[0.0, 1.0, 2.0]])
    center = conv1d(x, np.array([[[0.0, 1.0, 0.0]]]), np.zeros(1))
    np.testing.assert_array_equal(center, x)
    right = conv1d(x, np.array([[[0.0, 0.0, 1.0]]]), np.zeros(1))
    np.testing.assert_array_equal(right, [[2.0, 3.0, 0.0]])


def test_conv1d_bias():
    x = np.zeros((2, 5))
    out = conv1d(x, np.zeros((3, 2, 3)), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_array_equal(out, np.tile([[1.0], [-2.0], [0.5]], (1, 5)))


def test_offset_bias_only_hand_case():
    # with zero conv weights the biases pass straight through both ReLUs:
    # h1 = (0.3, 0), h2 = (0.5, 0.1), pooled likewise, so the read-out is
    # 2*0.5 - 1*0.1 + 0.25 = 1.15
    w = zero_vjc(conv1_b=np.array([0.3, -0.2]), conv2_b=np.array([0.5, 0.1]),
                 linear_w=np.array([2.0, -1.0]), linear_b=0.25)
    F = np.ones((1, 4, 2))
    raw, dh = vjc_offset(F, w)
    assert abs(raw - 1.15) < 1e-15
    assert abs(dh - 2.0 * 1.15 / 4) < 1e-15


def test_offset_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        vjc_offset(np.ones((3, 4, 4)), zero_vjc(C=1))


def test_identity_grid_values():
    g = identity_grid(2, 4)
    np.testing.assert_allclose(g[0, :, 0], [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(g[:, 0, 1], [-0.5, 0.5])


def test_grid_sample_identity_is_exact():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(3, 8, 16))
    out = grid_sample_bilinear(F, identity_grid(8, 16))
    assert np.array_equal(out, F)


def test_grid_sample_half_pixel():
    F = np.array([[[0.0, 1.0]]])
    grid = identity_grid(1, 2)
    grid[:, :, 0] = 0.0  # halfway between the two samples
    out = grid_sample_bilinear(F, grid)
    np.testing.assert_allclose(out, [[[0.5, 0.5]]])


def test_grid_sample_border_clamp():
    F = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    grid = identity_grid(2, 2)
    grid[:, :, 0] += 10.0  # far off the right edge
    out = grid_sample_bilinear(F, grid)
    np.testing.assert_array_equal(out, [[[2.0, 2.0], [4.0, 4.0]]])


def test_grid_sample_integer_shift_rows():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(2, 8, 5))
    H = 8
    for k in range(-3, 4):
        grid = identity_grid(H, 5)
        grid[:, :, 1] += 2.0 * k / H
        out = grid_sample_bilinear(F, grid)
        rows = np.clip(np.arange(H) + k, 0, H - 1)
        assert np.array_equal(out, F[:, rows, :]), k


def test_forward_zero_offset_is_copy():
    rng = np.random.default_rng(2)
    F = rng.normal(size=(3, 6, 6))
    out, raw = vjc_forward(F, zero_vjc(C=3))
    assert raw == 0.0
    assert np.array_equal(out, F)
    assert out is not F


def test_forward_unit_shift():
    # raw offset of exactly 1 pixel: rows sample one step down, border clamped
    rng = np.random.default_rng(3)
    F = rng.normal(size=(2, 6, 4))
    w = zero_vjc(C=2, linear_b=1.0)
    out, raw = vjc_forward(F, w)
    assert raw == 1.0
    rows = np.clip(np.arange(6) + 1, 0, 5)
    assert np.array_equal(out, F[:, rows, :])


def test_vjc_bundle_round_trip():
    rng = np.random.default_rng(4)
    w = random_vjc(rng)
    back = VjcWeights.from_bundle(w.to_bundle())
    F = rng.normal(size=(4, 8, 8))
    assert vjc_offset(F, w) == vjc_offset(F, back)


def test_vjc_bundle_missing_key():
    bundle = zero_vjc().to_bundle()
    del bundle["conv2_b"]
    with pytest.raises(ShapeMismatch):
        VjcWeights.from_bundle(bundle)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_forward_preserves_shape_and_finiteness(seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(4, 8, 8))
    out, raw = vjc_forward(F, random_vjc(rng))
    assert out.shape == F.shape
    assert np.all(np.isfinite(out))
    assert out.min() >= F.min() - 1e-12 and out.max() <= F.max() + 1e-12


# ----------------------------------------------------------------- MIPF


def identity_mipf(g=1.0, b=0.0):
    one = np.array([[1.0]])
    proj = {m: (one, np.zeros(1)) for m in ("lidar",) + MODALITY_ORDER}
    mlp = {m: (one, np.zeros(1), one, np.zeros(1)) for m in MODALITY_ORDER}
    return MipfWeights(proj=proj, prompt_mlp=mlp, key_w=one, value_w=one,
                       gate_w=np.array([[g]]), gate_b=np.array([b]),
                       heads=1)


def random_mipf(rng, D=8, heads=2, hidden=5, cam_channels=(3, 1, 2),
                lidar_channels=6, **overrides):
    channels = dict(zip(MODALITY_ORDER, cam_channels))
    channels["lidar"] = lidar_channels
    proj = {m: (rng.normal(size=(D, c)), rng.normal(size=D))
            for m, c in channels.items()}
    mlp = {m: (rng.normal(size=(hidden, D)), rng.normal(size=hidden),
               rng.normal(size=(D, hidden)), rng.normal(size=D))
           for m in MODALITY_ORDER}
    base = dict(proj=proj, prompt_mlp=mlp,
                key_w=rng.normal(size=(D, D)), value_w=rng.normal(size=(D, D)),
                gate_w=rng.normal(size=(D, D)) * 0.3,
                gate_b=rng.normal(size=D), heads=heads)
    base.update(overrides)
    return MipfWeights(**base)


def random_maps(rng, H=4, W=5, cam_channels=(3, 1, 2), lidar_channels=6):
    F_l = rng.normal(size=(lidar_channels, H, W))
    cams = [rng.normal(size=(c, H, W)) for c in cam_channels]
    return F_l, cams


def test_scalar_hand_case():
    w = identity_mipf(g=0.7, b=-0.2)
    F_l = np.array([[[2.0]]])
    cams = [np.array([[[v]]]) for v in (1.0, 0.5, 3.0)]
    fused, internals = mipf_forward(F_l, *cams, w, return_internals=True)

    # every map is a single positive value, so the prompt MLPs are identity
    prompts = [1.0, 0.5, 3.0]
    scores = [2.0 * p for p in prompts]
    exps = [math.exp(s - max(scores)) for s in scores]
    attn = [e / sum(exps) for e in exps]
    attended = sum(a * p for a, p in zip(attn, prompts))
    gate = 1.0 / (1.0 + math.exp(-(0.7 * attended - 0.2)))
    expect = 2.0 + gate * 2.0

    assert abs(float(fused[0, 0, 0]) - expect) < 1e-10
    np.testing.assert_allclose(internals["attention"][0, 0], attn, atol=1e-12)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(5)
    F_l, cams = random_maps(rng)
    _, internals = mipf_forward(F_l, *cams, random_mipf(rng),
                                return_internals=True)
    sums = internals["attention"].sum(axis=2)
    assert np.max(np.abs(sums - 1.0)) < 1e-12
    assert internals["attention"].shape == (4 * 5, 2, 3)


def test_gate_saturation_bounds():
    rng = np.random.default_rng(6)
    F_l, cams = random_maps(rng)
    open_gate = random_mipf(rng, gate_b=np.full(8, 50.0),
                            gate_w=np.zeros((8, 8)))
    fused, internals = mipf_forward(F_l, *cams, open_gate,
                                    return_internals=True)
    emb = internals["lidar_embedding"]
    scale = np.max(np.abs(emb))
    assert np.max(np.abs(fused - 2.0 * emb)) <= 1e-6 * scale

    closed_gate = random_mipf(rng, gate_b=np.full(8, -50.0),
                              gate_w=np.zeros((8, 8)))
    fused, internals = mipf_forward(F_l, *cams, closed_gate,
                                    return_internals=True)
    emb = internals["lidar_embedding"]
    assert np.max(np.abs(fused - emb)) <= 1e-6 * np.max(np.abs(emb))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_fused_magnitude_bounds(seed):
    rng = np.random.default_rng(seed)
    F_l, cams = random_maps(rng)
    fused, internals = mipf_forward(F_l, *cams, random_mipf(rng),
                                    return_internals=True)
    emb = internals["lidar_embedding"]
    assert np.all(np.abs(fused) >= np.abs(emb) - 1e-12)
    assert np.all(np.abs(fused) <= 2.0 * np.abs(emb) + 1e-12)
    assert np.all(np.sign(fused) == np.sign(emb))


def test_prompts_ignore_spatial_permutation():
    # prompts are built from a global pool, so shuffling camera pixels
    # must not change the output
    rng = np.random.default_rng(7)
    F_l, cams = random_maps(rng)
    w = random_mipf(rng)
    base = mipf_forward(F_l, *cams, w)
    perm = rng.permutation(4 * 5)
    shuffled = [c.reshape(c.shape[0], -1)[:, perm].reshape(c.shape)
                for c in cams]
    np.testing.assert_allclose(mipf_forward(F_l, *shuffled, w), base,
                               atol=1e-12)


def test_head_divisibility_rejected():
    rng = np.random.default_rng(8)
    with pytest.raises(HeadDivisibility):
        random_mipf(rng, D=6, heads=4)


def test_camera_shape_mismatch_rejected():
    rng = np.random.default_rng(9)
    F_l, cams = random_maps(rng)
    cams[1] = rng.normal(size=(1, 3, 3))
    with pytest.raises(ShapeMismatch):
        mipf_forward(F_l, *cams, random_mipf(rng))


def test_projection_channel_mismatch_rejected():
    rng = np.random.default_rng(10)
    F_l, cams = random_maps(rng)
    with pytest.raises(ChannelMismatch):
        mipf_forward(F_l, *cams, random_mipf(rng, lidar_channels=2))


def test_mipf_bundle_round_trip():
    rng = np.random.default_rng(11)
    w = random_mipf(rng, heads=4)
    back = MipfWeights.from_bundle(w.to_bundle(), heads=4)
    F_l, cams = random_maps(rng)
    np.testing.assert_array_equal(mipf_forward(F_l, *cams, w),
                                  mipf_forward(F_l, *cams, back))


# ---------------------------------------------------------------- reshape


def test_bev_reshape_matches_index_arithmetic():
    rng = np.random.default_rng(12)
    z_bins, classes, X, Y = 3, 4, 5, 6
    F = rng.normal(size=(z_bins * classes, X, Y))
    logits = bev_to_voxel_logits(F, z_bins, classes)
    assert logits.shape == (X, Y, z_bins, classes)
    for c in range(z_bins * classes):
        np.testing.assert_array_equal(logits[:, :, c // classes, c % classes],
                                      F[c])


def test_bev_reshape_round_trip():
    rng = np.random.default_rng(13)
    F = rng.normal(size=(12, 4, 4))
    assert np.array_equal(voxel_logits_to_bev(bev_to_voxel_logits(F, 3, 4)), F)


def test_bev_reshape_channel_mismatch():
    with pytest.raises(ChannelMismatch):
        bev_to_voxel_logits(np.zeros((10, 4, 4)), 3, 4)
