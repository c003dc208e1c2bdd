"""Reference forward passes for the fusion operators: vertical jitter
compensation (VJC), multimodal prompt fusion (MIPF), and the BEV-channel
to voxel-logit reshape.

Everything is plain numpy with fixed accumulation order so outputs are
reproducible bit for bit; no training, no autograd. Feature maps are
(C, H, W) float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, HeadDivisibility, InvariantViolation, ShapeMismatch

# Sampling coordinates this close to an integer pixel (in pixel units) are
# snapped onto it, which keeps the identity grid and whole-pixel shifts exact
# instead of leaking one-ulp interpolation error.
_SNAP_EPS = 1e-9


def _check_map(F, name="feature map") -> np.ndarray:
    a = np.asarray(F, dtype=float)
    if a.ndim != 3 or min(a.shape) < 1:
        raise ShapeMismatch(f"{name} must be (C, H, W), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvariantViolation(f"{name} contains non-finite values")
    return a


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ------------------------------------------------------------------ VJC

@dataclass(frozen=True)
class VjcWeights:
    """Offset-regressor weights: two kernel-3 Conv1D layers over the height
    axis (C -> hidden -> hidden) and a linear read-out to one scalar."""

    conv1_w: np.ndarray  # (hidden, C, 3)
    conv1_b: np.ndarray  # (hidden,)
    conv2_w: np.ndarray  # (hidden, hidden, 3)
    conv2_b: np.ndarray  # (hidden,)
    linear_w: np.ndarray  # (hidden,)
    linear_b: float

    def __post_init__(self):
        c1 = np.asarray(self.conv1_w, dtype=float)
        c2 = np.asarray(self.conv2_w, dtype=float)
        b1 = np.asarray(self.conv1_b, dtype=float)
        b2 = np.asarray(self.conv2_b, dtype=float)
        lw = np.asarray(self.linear_w, dtype=float)
        if c1.ndim != 3 or c1.shape[2] != 3:
            raise ShapeMismatch(f"conv1_w must be (hidden, C, 3), got {c1.shape}")
        hidden = c1.shape[0]
        if c2.shape != (hidden, hidden, 3):
            raise ShapeMismatch(f"conv2_w must be ({hidden}, {hidden}, 3), "
                                f"got {c2.shape}")
        if b1.shape != (hidden,) or b2.shape != (hidden,):
            raise ShapeMismatch("conv biases must match hidden width")
        if lw.shape != (hidden,):
            raise ShapeMismatch("linear_w must match hidden width")
        object.__setattr__(self, "conv1_w", c1)
        object.__setattr__(self, "conv1_b", b1)
        object.__setattr__(self, "conv2_w", c2)
        object.__setattr__(self, "conv2_b", b2)
        object.__setattr__(self, "linear_w", lw)
        object.__setattr__(self, "linear_b", float(self.linear_b))

    @property
    def in_channels(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def hidden(self) -> int:
        return self.conv1_w.shape[0]

    @staticmethod
    def from_bundle(tensors: dict) -> "VjcWeights":
        try:
            return VjcWeights(conv1_w=tensors["conv1_w"], conv1_b=tensors["conv1_b"],
                              conv2_w=tensors["conv2_w"], conv2_b=tensors["conv2_b"],
                              linear_w=tensors["linear_w"],
                              linear_b=float(np.asarray(tensors["linear_b"]).ravel()[0]))
        except KeyError as e:
            raise ShapeMismatch(f"weight bundle is missing tensor {e}") from e

    def to_bundle(self) -> dict:
        return {"conv1_w": self.conv1_w, "conv1_b": self.conv1_b,
                "conv2_w": self.conv2_w, "conv2_b": self.conv2_b,
                "linear_w": self.linear_w,
                "linear_b": np.array([self.linear_b])}


def width_mean(F) -> np.ndarray:
    """Collapse the width axis: (C, H, W) -> (C, H) arithmetic mean."""
    return _check_map(F).mean(axis=2)


def conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel-3, zero-padding-1 convolution along the last axis of (C_in, L)."""
    cin, L = x.shape
    xp = np.zeros((cin, L + 2))
    xp[:, 1:-1] = x
    out = np.tile(b[:, None], (1, L))
    for k in range(3):
        out = out + w[:, :, k] @ xp[:, k:k + L]
    return out


def vjc_offset(F, w: VjcWeights) -> tuple[float, float]:
    """Predict the vertical offset: returns (raw offset in pixels,
    normalized offset 2*raw/H)."""
    F = _check_map(F)
    if F.shape[0] != w.in_channels:
        raise ShapeMismatch(f"feature map has {F.shape[0]} channels, weights "
                            f"expect {w.in_channels}")
    v = F.mean(axis=2)  # (C, H)
    h1 = relu(conv1d(v, w.conv1_w, w.conv1_b))
    h2 = relu(conv1d(h1, w.conv2_w, w.conv2_b))
    pooled = h2.mean(axis=1)  # (hidden,)
    raw = float(w.linear_w @ pooled + w.linear_b)
    return raw, 2.0 * raw / F.shape[1]


def identity_grid(H: int, W: int) -> np.ndarray:
    """(H, W, 2) normalized coordinates, x then y, under the convention
    that pixel p maps to (2p + 1)/size - 1 (so a normalized step of 2/size
    is exactly one pixel)."""
    xs = (2.0 * np.arange(W) + 1.0) / W - 1.0
    ys = (2.0 * np.arange(H) + 1.0) / H - 1.0
    grid = np.empty((H, W, 2))
    grid[:, :, 0] = xs[None, :]
    grid[:, :, 1] = ys[:, None]
    return grid


def _to_pixels(g: np.ndarray, size: int) -> np.ndarray:
    p = ((g + 1.0) * size - 1.0) / 2.0
    nearest = np.round(p)
    snap = np.abs(p - nearest) < _SNAP_EPS
    return np.where(snap, nearest, p)


def grid_sample_bilinear(F, grid) -> np.ndarray:
    """Bilinear sampling of (C, H, W) at an (H', W', 2) normalized grid;
    samples outside the map clamp to the border value."""
    F = _check_map(F)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 3 or grid.shape[2] != 2:
        raise ShapeMismatch(f"grid must be (H, W, 2), got {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise InvariantViolation("grid contains non-finite coordinates")
    C, H, W = F.shape
    px = _to_pixels(grid[:, :, 0], W)
    py = _to_pixels(grid[:, :, 1], H)
    x0 = np.floor(px)
    y0 = np.floor(py)
    wx = px - x0
    wy = py - y0
    x0i = np.clip(x0.astype(np.int64), 0, W - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, W - 1)
    y0i = np.clip(y0.astype(np.int64), 0, H - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, H - 1)
    out = np.empty((C,) + grid.shape[:2])
    for c in range(C):
        f = F[c]
        top = (1.0 - wx) * f[y0i, x0i] + wx * f[y0i, x1i]
        bot = (1.0 - wx) * f[y1i, x0i] + wx * f[y1i, x1i]
        out[c] = (1.0 - wy) * top + wy * bot
    return out


def vjc_forward(F, w: VjcWeights) -> tuple[np.ndarray, float]:
    """Offset regression + vertical resampling: returns (compensated map,
    raw offset). A zero offset returns the input unchanged."""
    F = _check_map(F)
    raw, dh = vjc_offset(F, w)
    if raw == 0.0:
        # resampling at the identity grid is already exact; skipping it makes
        # the no-op case obviously bit-identical
        return F.copy(), raw
    grid = identity_grid(F.shape[1], F.shape[2])
    grid[:, :, 1] += dh
    return grid_sample_bilinear(F, grid), raw


# ----------------------------------------------------------------- MIPF

MODALITY_ORDER = ("pal", "thermal", "polar")


@dataclass(frozen=True)
class MipfWeights:
    """Projections, prompt MLPs, attention maps and gate for prompt fusion.

    proj maps modality name -> (weight (D, C_m), bias (D,)) for the 1x1
    projections; LiDAR under key "lidar", camera modalities per
    MODALITY_ORDER. prompt_mlp maps camera modality -> (W1 (hidden, D),
    b1, W2 (D, hidden), b2).
    """

    proj: dict
    prompt_mlp: dict
    key_w: np.ndarray    # (D, D)
    value_w: np.ndarray  # (D, D)
    gate_w: np.ndarray   # (D, D)
    gate_b: np.ndarray   # (D,)
    heads: int = 8

    def __post_init__(self):
        kw = np.asarray(self.key_w, dtype=float)
        D = kw.shape[0]
        if kw.shape != (D, D):
            raise ShapeMismatch("key_w must be square (D, D)")
        if np.asarray(self.value_w).shape != (D, D):
            raise ShapeMismatch("value_w must match key_w shape")
        if np.asarray(self.gate_w).shape != (D, D):
            raise ShapeMismatch("gate_w must be (D, D)")
        if np.asarray(self.gate_b).shape != (D,):
            raise ShapeMismatch("gate_b must be (D,)")
        if self.heads < 1 or D % self.heads != 0:
            raise HeadDivisibility(
                f"embedding width {D} is not divisible by {self.heads} heads")
        for m in ("lidar",) + MODALITY_ORDER:
            if m not in self.proj:
                raise ShapeMismatch(f"missing projection for modality {m!r}")
            w, b = self.proj[m]
            if np.asarray(w).shape[0] != D or np.asarray(b).shape != (D,):
                raise ShapeMismatch(f"projection for {m!r} must map to width {D}")
        for m in MODALITY_ORDER:
            if m not in self.prompt_mlp:
                raise ShapeMismatch(f"missing prompt MLP for modality {m!r}")
            w1, b1, w2, b2 = self.prompt_mlp[m]
            hid = np.asarray(w1).shape[0]
            if (np.asarray(w1).shape != (hid, D) or np.asarray(b1).shape != (hid,)
                    or np.asarray(w2).shape != (D, hid)
                    or np.asarray(b2).shape != (D,)):
                raise ShapeMismatch(f"prompt MLP for {m!r} has inconsistent shapes")

    @property
    def dim(self) -> int:
        return np.asarray(self.key_w).shape[0]

    @staticmethod
    def from_bundle(tensors: dict, heads: int = 8) -> "MipfWeights":
        try:
            proj = {m: (tensors[f"proj_{m}_w"], tensors[f"proj_{m}_b"])
                    for m in ("lidar",) + MODALITY_ORDER}
            mlp = {m: (tensors[f"prompt_{m}_w1"], tensors[f"prompt_{m}_b1"],
                       tensors[f"prompt_{m}_w2"], tensors[f"prompt_{m}_b2"])
                   for m in MODALITY_ORDER}
            return MipfWeights(proj=proj, prompt_mlp=mlp,
                               key_w=tensors["key_w"], value_w=tensors["value_w"],
                               gate_w=tensors["gate_w"], gate_b=tensors["gate_b"],
                               heads=heads)
        except KeyError as e:
            raise ShapeMismatch(f"weight bundle is missing tensor {e}") from e

    def to_bundle(self) -> dict:
        out = {"key_w": self.key_w, "value_w": self.value_w,
               "gate_w": self.gate_w, "gate_b": self.gate_b}
        for m, (w, b) in self.proj.items():
            out[f"proj_{m}_w"] = w
            out[f"proj_{m}_b"] = b
        for m, (w1, b1, w2, b2) in self.prompt_mlp.items():
            out[f"prompt_{m}_w1"] = w1
            out[f"prompt_{m}_b1"] = b1
            out[f"prompt_{m}_w2"] = w2
            out[f"prompt_{m}_b2"] = b2
        return out


def _project_1x1(F: np.ndarray, w, b) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    if F.shape[0] != w.shape[1]:
        raise ChannelMismatch(f"map has {F.shape[0]} channels, projection "
                              f"expects {w.shape[1]}")
    return np.einsum("dc,chw->dhw", w, F) + b[:, None, None]


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def mipf_forward(F_l, F_pal, F_th, F_pol, w: MipfWeights,
                 return_internals: bool = False):
    """Prompt fusion: project every modality to width D, pool the camera
    modalities into one prompt vector each, attend from each LiDAR BEV cell
    to the three prompts (multi-head, scaled dot product), then gate the
    LiDAR features residually: F_f = F_l' + sigmoid(gate(attn)) * F_l'.
    """
    maps = {"lidar": _check_map(F_l, "lidar map"),
            "pal": _check_map(F_pal, "pal map"),
            "thermal": _check_map(F_th, "thermal map"),
            "polar": _check_map(F_pol, "polar map")}
    hw = maps["lidar"].shape[1:]
    for m in MODALITY_ORDER:
        if maps[m].shape[1:] != hw:
            raise ShapeMismatch(f"{m} map is {maps[m].shape[1:]}, expected {hw}")

    emb = {m: _project_1x1(maps[m], *w.proj[m]) for m in maps}
    D = w.dim
    H, W = hw

    prompts = np.empty((len(MODALITY_ORDER), D))
    for i, m in enumerate(MODALITY_ORDER):
        g = emb[m].mean(axis=(1, 2))  # global average pool
        w1, b1, w2, b2 = (np.asarray(a, dtype=float) for a in w.prompt_mlp[m])
        prompts[i] = w2 @ relu(w1 @ g + b1) + b2

    keys = prompts @ np.asarray(w.key_w, dtype=float).T     # (3, D)
    values = prompts @ np.asarray(w.value_w, dtype=float).T  # (3, D)

    h = w.heads
    dh = D // h
    Q = emb["lidar"].reshape(D, H * W).T.reshape(H * W, h, dh)
    Kh = keys.reshape(len(MODALITY_ORDER), h, dh)
    Vh = values.reshape(len(MODALITY_ORDER), h, dh)
    scores = np.einsum("qhd,phd->qhp", Q, Kh) / np.sqrt(dh)
    attn = _softmax(scores, axis=2)                # (HW, h, 3)
    out = np.einsum("qhp,phd->qhd", attn, Vh)      # (HW, h, dh)
    F_attn = out.reshape(H * W, D).T.reshape(D, H, W)

    gate = np.einsum("dc,chw->dhw", np.asarray(w.gate_w, dtype=float), F_attn)
    gate = gate + np.asarray(w.gate_b, dtype=float)[:, None, None]
    M = sigmoid(gate)
    fused = emb["lidar"] + M * emb["lidar"]
    if return_internals:
        return fused, {"attention": attn, "lidar_embedding": emb["lidar"],
                       "gate": M, "prompts": prompts, "attended": F_attn}
    return fused


# ---------------------------------------------------------------- reshape

def bev_to_voxel_logits(F, z_bins: int, num_classes: int) -> np.ndarray:
    """(Z*classes, X, Y) BEV channels -> (X, Y, Z, classes) logits; channel
    c holds (z = c // classes, class = c % classes)."""
    F = _check_map(F)
    C = F.shape[0]
    if C != z_bins * num_classes:
        raise ChannelMismatch(
            f"{C} channels cannot split into {z_bins} z-bins x "
            f"{num_classes} classes")
    return F.reshape(z_bins, num_classes, F.shape[1], F.shape[2]) \
            .transpose(2, 3, 0, 1).copy()


def voxel_logits_to_bev(logits) -> np.ndarray:
    """Inverse of bev_to_voxel_logits."""
    a = np.asarray(logits, dtype=float)
    if a.ndim != 4:
        raise ShapeMismatch(f"logits must be (X, Y, Z, classes), got {a.shape}")
    X, Y, Z, C = a.shape
    return a.transpose(2, 3, 0, 1).reshape(Z * C, X, Y).copy()
