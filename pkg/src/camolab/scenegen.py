"""Procedural miniature scene generator with articulated puppet targets.

Renders 256x256 RGB scenes containing a 2D articulated "person" puppet
(8 quadrilateral parts: head, torso, 2 arms, 2 thighs, 2 shins), a few
decoy objects of other classes, and a procedurally textured background.
Every image comes with ground-truth boxes and, for a chosen pattern
scheme, the per-region homographies that map crops of a camouflage
pattern sheet onto body parts.

Rendering is a pure function of (SceneSpec, CameraPose, PatternScheme,
pattern, embedded seeds): identical inputs give bit-identical images.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from .imageops import bilinear_sample

IMAGE_SIZE = 256
SHEET_SIZE = 128

LIGHT_GAINS = {"L1": 0.45, "L2": 0.70, "L3": 1.00}
POSES = ("standing", "walking", "sitting")
ENVIRONMENTS = ("indoor", "outdoor")

TARGET_CLASS = "person-puppet"
DECOY_CLASSES = ("dog-decoy", "bird-decoy", "car-decoy", "chair-decoy")
CLASS_NAMES = ("background", TARGET_CLASS) + DECOY_CLASSES

# Model-space scale: 72 px per puppet torso-height unit at distance 1.
_BASE_SCALE_PX = 72.0
_GROUND_Y = 204.0


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class SceneSpec:
    """Parametric description of one scene (background + target)."""

    scene_id: int
    environment: str  # 'indoor' | 'outdoor'
    texture_seed: int
    light_level: str  # 'L1' | 'L2' | 'L3'
    pose: str  # 'standing' | 'walking' | 'sitting'
    size_scale: float = 1.0
    color_seed: int = 0

    def __post_init__(self):
        if self.light_level not in LIGHT_GAINS:
            raise ValueError(f"unknown light level {self.light_level!r}")
        if self.pose not in POSES:
            raise ValueError(f"unknown pose {self.pose!r}")
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")


@dataclass(frozen=True)
class CameraPose:
    yaw_deg: float  # in [-45, 45]
    height: float  # scene units
    distance: float  # > 0

    def __post_init__(self):
        if not -45.0 <= self.yaw_deg <= 45.0:
            raise ValueError("yaw out of [-45, 45]")
        if self.distance <= 0:
            raise ValueError("distance must be > 0")


@dataclass(frozen=True)
class PatternRegion:
    """One paintable region: a sub-rect of a body part bound to a sheet crop.

    quad is (x0, y0, x1, y1) in part-local [0,1]^2 coordinates; window is
    (x0, y0, w, h) in pattern-sheet texel coordinates.
    """

    part: str
    quad: tuple[float, float, float, float]
    window: tuple[int, int, int, int]


@dataclass(frozen=True)
class PatternScheme:
    name: str
    regions: tuple[PatternRegion, ...]

    @property
    def region_count(self) -> int:
        return len(self.regions)


@dataclass
class RegionGeometry:
    """A region realized in one rendered image."""

    part: str
    window: tuple[int, int, int, int]
    homography: np.ndarray  # 3x3, sheet-window coords -> image px
    mask: np.ndarray  # (H, W) bool, visible pixels

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.homography)


@dataclass
class SceneImage:
    pixels: np.ndarray  # (H, W, 3) float64 in [0, 1]
    ground_truth: list  # [(label, np.ndarray cx cy w h), ...]
    regions: list  # [RegionGeometry, ...]
    spec: SceneSpec
    cam: CameraPose
    scheme_name: str
    gain: float


# ---------------------------------------------------------------------------
# Pattern schemes

_REGION_TABLE = {
    "torso_front": PatternRegion("torso", (0.10, 0.10, 0.90, 0.92), (0, 0, 64, 80)),
    "torso_strip": PatternRegion("torso", (0.90, 0.10, 1.00, 0.92), (112, 0, 16, 64)),
    "head_mask": PatternRegion("head", (0.15, 0.35, 0.85, 0.95), (64, 0, 48, 48)),
    "thigh_l": PatternRegion("thigh_l", (0.12, 0.10, 0.88, 0.90), (0, 80, 28, 48)),
    "thigh_r": PatternRegion("thigh_r", (0.12, 0.10, 0.88, 0.90), (28, 80, 28, 48)),
    "arm_l": PatternRegion("arm_l", (0.15, 0.15, 0.85, 0.85), (56, 80, 24, 48)),
    "arm_r": PatternRegion("arm_r", (0.15, 0.15, 0.85, 0.85), (80, 80, 24, 48)),
    "shin_band": PatternRegion("shin_l", (0.10, 0.30, 0.90, 0.70), (104, 80, 24, 24)),
}

_SCHEME_PARTS = {
    "none": (),
    "3p": ("torso_front", "thigh_l", "thigh_r"),
    "7p": ("torso_front", "thigh_l", "thigh_r", "arm_l", "arm_r", "head_mask", "torso_strip"),
    "8p": ("torso_front", "thigh_l", "thigh_r", "arm_l", "arm_r", "head_mask", "torso_strip", "shin_band"),
}


def pattern_scheme(name: str) -> PatternScheme:
    """Look up a named scheme: 'none' (0), '3p', '7p' or '8p' regions."""
    if name not in _SCHEME_PARTS:
        raise ValueError(f"unknown pattern scheme {name!r}")
    return PatternScheme(name, tuple(_REGION_TABLE[k] for k in _SCHEME_PARTS[name]))


# ---------------------------------------------------------------------------
# Puppet geometry

# Part sizes in model units (torso height = 1.0).
_TORSO_W, _TORSO_L = 0.62, 1.00
_HEAD_W, _HEAD_L = 0.36, 0.38
_ARM_W, _ARM_L = 0.16, 0.78
_THIGH_W, _THIGH_L = 0.20, 0.52
_SHIN_W, _SHIN_L = 0.17, 0.50

# Joint-angle presets per pose. Angles in degrees; 0 points straight down
# (limbs) and the torso/head chain points up. Knee angles are relative to
# the thigh.
_POSE_TABLE = {
    #            tilt  pelvis  armL  armR  thighL thighR kneeL  kneeR
    "standing": (0.0, 1.02, 8.0, -8.0, 4.0, -4.0, 0.0, 0.0),
    "walking": (4.0, 1.00, 30.0, -24.0, 24.0, -16.0, -14.0, 22.0),
    "sitting": (-4.0, 0.62, 14.0, -14.0, 62.0, -62.0, -118.0, 118.0),
}


@dataclass(frozen=True)
class _Part:
    name: str
    joint: tuple[float, float]  # model coords
    angle_deg: float  # absolute; 0 = down, positive swings toward +x
    width: float
    length: float

    def local_to_model(self) -> np.ndarray:
        """2x3 affine mapping part-local (u, v) in [0,1]^2 to model coords."""
        th = math.radians(self.angle_deg)
        dx, dy = math.sin(th), -math.cos(th)  # along the part
        px, py = math.cos(th), math.sin(th)  # across the part
        jx, jy = self.joint
        return np.array(
            [
                [px * self.width, dx * self.length, jx - 0.5 * px * self.width],
                [py * self.width, dy * self.length, jy - 0.5 * py * self.width],
            ]
        )


def _direction(angle_deg: float) -> np.ndarray:
    th = math.radians(angle_deg)
    return np.array([math.sin(th), -math.cos(th)])


def puppet_parts(pose: str) -> list[_Part]:
    """Build the 8 puppet parts in back-to-front draw order."""
    tilt, pelvis_y, arm_l, arm_r, th_l, th_r, kn_l, kn_r = _POSE_TABLE[pose]
    pelvis = np.array([0.0, pelvis_y])
    up = 180.0 + tilt
    torso_dir = _direction(up)
    torso_perp = np.array([math.cos(math.radians(up)), math.sin(math.radians(up))])

    neck = pelvis + torso_dir * _TORSO_L
    shoulder_l = pelvis + torso_dir * 0.92 - torso_perp * 0.27
    shoulder_r = pelvis + torso_dir * 0.92 + torso_perp * 0.27
    hip_l = pelvis + np.array([-0.15, 0.0])
    hip_r = pelvis + np.array([0.15, 0.0])
    knee_l = hip_l + _direction(th_l) * _THIGH_L
    knee_r = hip_r + _direction(th_r) * _THIGH_L

    return [
        _Part("arm_l", tuple(shoulder_l), arm_l, _ARM_W, _ARM_L),
        _Part("arm_r", tuple(shoulder_r), arm_r, _ARM_W, _ARM_L),
        _Part("shin_l", tuple(knee_l), th_l + kn_l, _SHIN_W, _SHIN_L),
        _Part("shin_r", tuple(knee_r), th_r + kn_r, _SHIN_W, _SHIN_L),
        _Part("thigh_l", tuple(hip_l), th_l, _THIGH_W, _THIGH_L),
        _Part("thigh_r", tuple(hip_r), th_r, _THIGH_W, _THIGH_L),
        _Part("torso", tuple(pelvis), up, _TORSO_W, _TORSO_L),
        _Part("head", tuple(neck + torso_dir * 0.04), up, _HEAD_W, _HEAD_L),
    ]


def camera_grid(spec: SceneSpec) -> list[CameraPose]:
    """The standard 18-pose grid: 3 yaw x 3 height x 2 distance."""
    poses = []
    for yaw in (-30.0, 0.0, 30.0):
        for height in (0.8, 1.4, 2.0):
            for distance in (1.0, 1.45):
                poses.append(CameraPose(yaw, height, distance))
    return poses


def view_affine(cam: CameraPose, size_scale: float, x_jitter: float = 0.0) -> np.ndarray:
    """2x3 affine mapping model coords (y up) to image pixel coords (y down)."""
    s = _BASE_SCALE_PX * size_scale / cam.distance
    yaw = math.radians(cam.yaw_deg)
    fx = math.cos(yaw)
    skew = 0.18 * math.sin(yaw)
    tx = IMAGE_SIZE / 2.0 + x_jitter
    ty = _GROUND_Y + (cam.height - 1.4) * 25.0
    return np.array([[s * fx, s * skew, tx], [0.0, -s, ty]])


def _invert_affine(m: np.ndarray) -> np.ndarray:
    a, b, tx = m[0]
    c, d, ty = m[1]
    det = a * d - b * c
    inv = np.array([[d, -b], [-c, a]]) / det
    t = -inv @ np.array([tx, ty])
    return np.hstack([inv, t[:, None]])


def _affine_to_h(m: np.ndarray) -> np.ndarray:
    return np.vstack([m, [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# Rasterization helpers (numpy, pixel centers at integer + 0.5)


def _pixel_grid() -> tuple[np.ndarray, np.ndarray]:
    xs = np.arange(IMAGE_SIZE, dtype=np.float64) + 0.5
    ys = np.arange(IMAGE_SIZE, dtype=np.float64) + 0.5
    return np.meshgrid(xs, ys)


def _part_mask_and_local(part: _Part, view: np.ndarray, gx: np.ndarray, gy: np.ndarray):
    """Return (mask, u, v): which pixels fall in the part, with local coords."""
    m = _compose_affine(view, part.local_to_model())
    inv = _invert_affine(m)
    u = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    v = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    mask = (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (v <= 1.0)
    return mask, u, v


def _compose_affine(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """outer(inner(p)) for 2x3 affines."""
    lin = outer[:, :2] @ inner[:, :2]
    t = outer[:, :2] @ inner[:, 2] + outer[:, 2]
    return np.hstack([lin, t[:, None]])


def _ellipse_mask(cx, cy, rx, ry, view, gx, gy):
    inv = _invert_affine(view)
    mx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    my = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    return ((mx - cx) / rx) ** 2 + ((my - cy) / ry) ** 2 <= 1.0


def _rect_mask(x0, y0, x1, y1, view, gx, gy):
    inv = _invert_affine(view)
    mx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    my = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    return (mx >= x0) & (mx <= x1) & (my >= y0) & (my <= y1)


def _mask_bbox(mask: np.ndarray) -> Optional[np.ndarray]:
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None
    x0, x1 = float(xs.min()), float(xs.max() + 1)
    y0, y1 = float(ys.min()), float(ys.max() + 1)
    return np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0])


# ---------------------------------------------------------------------------
# Backgrounds, colors, decoys


def _smooth_noise(rng: np.random.Generator, cells: int, amplitude: float) -> np.ndarray:
    """Coarse random field bilinearly upsampled to the image size."""
    coarse = rng.uniform(-amplitude, amplitude, size=(cells, cells))
    xs = np.linspace(0, cells - 1, IMAGE_SIZE)
    x0 = np.clip(xs.astype(int), 0, cells - 2)
    t = xs - x0
    rows = coarse[:, x0] * (1 - t) + coarse[:, x0 + 1] * t
    full = rows[x0] * (1 - t)[:, None] + rows[x0 + 1] * t[:, None]
    return full


def _background(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([spec.texture_seed, 11]))
    img = np.zeros((IMAGE_SIZE, IMAGE_SIZE, 3))
    ys = np.linspace(0.0, 1.0, IMAGE_SIZE)[:, None]
    if spec.environment == "indoor":
        wall = rng.uniform(0.45, 0.75, size=3)
        floor = wall * rng.uniform(0.55, 0.8)
        split = rng.uniform(0.7, 0.85)
    else:
        wall = np.array([rng.uniform(0.5, 0.8), rng.uniform(0.6, 0.85), rng.uniform(0.75, 0.95)])
        floor = np.array([rng.uniform(0.25, 0.5), rng.uniform(0.35, 0.6), rng.uniform(0.15, 0.4)])
        split = rng.uniform(0.72, 0.82)
    blend = 1.0 / (1.0 + np.exp(-(ys - split) * 60.0))
    img[:] = wall[None, None, :] * (1 - blend[..., None]) + floor[None, None, :] * blend[..., None]

    # Clutter: a few muted rectangles/ellipses behind everything.
    gx, gy = _pixel_grid()
    n_clutter = rng.integers(3, 7)
    for _ in range(n_clutter):
        cx = rng.uniform(10, IMAGE_SIZE - 10)
        cy = rng.uniform(10, IMAGE_SIZE - 10)
        w = rng.uniform(15, 70)
        h = rng.uniform(15, 70)
        color = rng.uniform(0.2, 0.8, size=3)
        if rng.random() < 0.5:
            m = (np.abs(gx - cx) <= w / 2) & (np.abs(gy - cy) <= h / 2)
        else:
            m = ((gx - cx) / (w / 2)) ** 2 + ((gy - cy) / (h / 2)) ** 2 <= 1.0
        img[m] = 0.65 * img[m] + 0.35 * color

    for c in range(3):
        img[:, :, c] += _smooth_noise(rng, 9, 0.04)
    return np.clip(img, 0.0, 1.0)


def _puppet_colors(spec: SceneSpec) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([spec.color_seed, 23]))
    skin = np.array([0.85, 0.65, 0.5]) * rng.uniform(0.75, 1.1)
    shirt = rng.uniform(0.15, 0.9, size=3)
    pants = rng.uniform(0.1, 0.7, size=3)
    return {
        "head": skin,
        "torso": shirt,
        "arm_l": shirt * 0.92,
        "arm_r": shirt * 0.88,
        "thigh_l": pants,
        "thigh_r": pants * 0.95,
        "shin_l": pants * 0.8,
        "shin_r": pants * 0.76,
    }


_DECOY_SHAPES = {
    # name -> list of ('ellipse', cx, cy, rx, ry) | ('rect', x0, y0, x1, y1)
    "dog-decoy": [
        ("rect", -0.18, 0.05, -0.08, 0.3), ("rect", 0.08, 0.05, 0.18, 0.3),
        ("ellipse", 0.0, 0.38, 0.34, 0.16), ("ellipse", 0.34, 0.5, 0.12, 0.1),
    ],
    "bird-decoy": [
        ("ellipse", 0.0, 0.5, 0.16, 0.1), ("ellipse", 0.1, 0.62, 0.07, 0.06),
        ("rect", 0.16, 0.6, 0.24, 0.64), ("ellipse", -0.04, 0.52, 0.1, 0.05),
    ],
    "car-decoy": [
        ("rect", -0.45, 0.12, 0.45, 0.34), ("rect", -0.22, 0.34, 0.22, 0.5),
        ("ellipse", -0.28, 0.12, 0.09, 0.09), ("ellipse", 0.28, 0.12, 0.09, 0.09),
    ],
    "chair-decoy": [
        ("rect", -0.2, 0.32, 0.2, 0.4), ("rect", 0.14, 0.0, 0.2, 0.32),
        ("rect", -0.2, 0.0, -0.14, 0.32), ("rect", -0.2, 0.4, -0.12, 0.95),
    ],
}

_DECOY_COLOR_BASE = {
    "dog-decoy": np.array([0.55, 0.38, 0.2]),
    "bird-decoy": np.array([0.25, 0.3, 0.55]),
    "car-decoy": np.array([0.7, 0.15, 0.15]),
    "chair-decoy": np.array([0.45, 0.3, 0.15]),
}


def _scene_decoys(spec: SceneSpec) -> list:
    """Pick 1-2 decoys with deterministic placement left/right of the puppet."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.texture_seed, spec.color_seed, 37]))
    n = int(rng.integers(1, 3))
    sides = rng.permutation([-1.0, 1.0])[:n]
    decoys = []
    for side in sides:
        name = DECOY_CLASSES[int(rng.integers(0, len(DECOY_CLASSES)))]
        off_x = side * rng.uniform(1.15, 1.55)
        scale = rng.uniform(0.8, 1.15)
        base_y = rng.uniform(1.0, 1.5) if name == "bird-decoy" else 0.0
        color = np.clip(_DECOY_COLOR_BASE[name] * rng.uniform(0.8, 1.2), 0.05, 0.95)
        decoys.append((name, off_x, base_y, scale, color))
    return decoys


# ---------------------------------------------------------------------------
# Pattern painting (shared by render, transforms and evaluation)


def paint_regions(
    pixels: torch.Tensor,
    sheet: torch.Tensor,
    regions: list,
    gain: float = 1.0,
) -> torch.Tensor:
    """Composite pattern-sheet crops into region pixels via their homographies.

    pixels: (H, W, 3) tensor; sheet: (Hs, Ws, 3) tensor. Painted values are
    gain * bilinear(sheet) so a pattern can be inserted into an image that
    already has the global light gain applied. Differentiable w.r.t. sheet.
    Bilinear lookups at window edges may read adjacent sheet texels; the
    visible masks keep sample positions inside the window interior.
    """
    out = pixels
    for reg in regions:
        idx = np.nonzero(reg.mask)
        if len(idx[0]) == 0:
            continue
        iyx = torch.from_numpy(np.stack(idx))
        px = iyx[1].to(pixels.dtype) + 0.5
        py = iyx[0].to(pixels.dtype) + 0.5
        hinv = torch.from_numpy(reg.inverse()).to(pixels.dtype)
        u = hinv[0, 0] * px + hinv[0, 1] * py + hinv[0, 2]
        v = hinv[1, 0] * px + hinv[1, 1] * py + hinv[1, 2]
        wx0, wy0 = float(reg.window[0]), float(reg.window[1])
        vals = bilinear_sample(sheet, u + wx0, v + wy0)
        if gain != 1.0:
            vals = vals * gain
        out = out.index_put((iyx[0], iyx[1]), vals)
    return out


def region_geometry(spec: SceneSpec, cam: CameraPose, scheme: PatternScheme) -> list:
    """Compute homographies and visibility masks for a scheme's regions."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.texture_seed, 5]))
    x_jitter = rng.uniform(-10.0, 10.0)
    view = view_affine(cam, spec.size_scale, x_jitter)
    parts = puppet_parts(spec.pose)
    gx, gy = _pixel_grid()

    part_masks = {}
    part_locals = {}
    top_index = np.full((IMAGE_SIZE, IMAGE_SIZE), -1, dtype=np.int16)
    for k, part in enumerate(parts):
        mask, u, v = _part_mask_and_local(part, view, gx, gy)
        part_masks[part.name] = mask
        part_locals[part.name] = (u, v)
        top_index[mask] = k

    order = {p.name: k for k, p in enumerate(parts)}
    part_affine = {p.name: _compose_affine(view, p.local_to_model()) for p in parts}

    out = []
    for reg in scheme.regions:
        u, v = part_locals[reg.part]
        qx0, qy0, qx1, qy1 = reg.quad
        quad_mask = (u >= qx0) & (u <= qx1) & (v >= qy0) & (v <= qy1)
        visible = quad_mask & (top_index == order[reg.part])
        # window (texel) -> part-local -> image
        wx0, wy0, ww, wh = reg.window
        win_to_local = np.array(
            [[(qx1 - qx0) / ww, 0.0, qx0], [0.0, (qy1 - qy0) / wh, qy0]]
        )
        h = _affine_to_h(_compose_affine(part_affine[reg.part], win_to_local))
        out.append(RegionGeometry(reg.part, reg.window, h, visible))
    return out


# ---------------------------------------------------------------------------
# Rendering


def render(
    spec: SceneSpec,
    cam: CameraPose,
    scheme: PatternScheme,
    pattern: Optional[np.ndarray] = None,
) -> SceneImage:
    """Render one scene; optionally paint a pattern sheet into the scheme regions.

    The pattern is composited before the global light gain, so painted pixels
    scale with the scene illumination exactly like every other surface.
    """
    if scheme.region_count > 0 and pattern is None and scheme.name != "none":
        raise ValueError("scheme has pattern regions but no pattern was given")

    rng = np.random.default_rng(np.random.SeedSequence([spec.texture_seed, 5]))
    x_jitter = rng.uniform(-10.0, 10.0)
    view = view_affine(cam, spec.size_scale, x_jitter)
    gx, gy = _pixel_grid()

    img = _background(spec).copy()

    # Decoys (behind the puppet).
    ground_truth = []
    for name, off_x, base_y, dscale, color in _scene_decoys(spec):
        dview = view.copy()
        dview[:, :2] *= dscale
        dview[:, 2] += view[:, :2] @ np.array([off_x, base_y])
        union = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
        for i, shape in enumerate(_DECOY_SHAPES[name]):
            if shape[0] == "ellipse":
                m = _ellipse_mask(*shape[1:], dview, gx, gy)
            else:
                m = _rect_mask(*shape[1:], dview, gx, gy)
            img[m] = color * (0.85 + 0.08 * i)
            union |= m
        box = _mask_bbox(union)
        if box is not None:
            ground_truth.append((name, box))

    # Puppet parts, back to front, with a lengthwise shading gradient.
    colors = _puppet_colors(spec)
    parts = puppet_parts(spec.pose)
    union = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    for part in parts:
        mask, u, v = _part_mask_and_local(part, view, gx, gy)
        shade = (0.88 + 0.16 * (1.0 - v[mask]))[:, None]
        img[mask] = np.clip(colors[part.name][None, :] * shade, 0.0, 1.0)
        union |= mask
    box = _mask_bbox(union)
    if box is None:
        raise ValueError("puppet fell fully outside the image")
    ground_truth.append((TARGET_CLASS, box))

    regions = region_geometry(spec, cam, scheme) if scheme.region_count else []
    if pattern is not None and regions:
        t = paint_regions(
            torch.from_numpy(img),
            torch.from_numpy(np.ascontiguousarray(pattern, dtype=np.float64)),
            regions,
            gain=1.0,
        )
        img = t.numpy()

    gain = LIGHT_GAINS[spec.light_level]
    img = np.clip(img * gain, 0.0, 1.0)
    return SceneImage(img, ground_truth, regions, spec, cam, scheme.name, gain)


def training_targets(img: SceneImage) -> list:
    """Ground truth in detector-training format: [(label, box cx cy w h)]."""
    if img.spec is None:
        raise ValueError("image has no provenance")
    return [(label, np.asarray(box, dtype=np.float64)) for label, box in img.ground_truth]


# ---------------------------------------------------------------------------
# Procedural "natural" sheets (pattern anchors and training textures)


def natural_sheet(seed: int, size: int = SHEET_SIZE) -> np.ndarray:
    """A smooth, colorful sheet standing in for a natural anchor image."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    img = np.zeros((size, size, 3))
    palette = rng.uniform(0.15, 0.85, size=(2, 3))
    for c in range(3):
        fld = np.zeros((size, size))
        for cells, amp in ((3, 0.5), (6, 0.25), (12, 0.12)):
            coarse = rng.uniform(-amp, amp, size=(cells, cells))
            xs = np.linspace(0, cells - 1, size)
            x0 = np.clip(xs.astype(int), 0, cells - 2)
            t = xs - x0
            rows = coarse[:, x0] * (1 - t) + coarse[:, x0 + 1] * t
            fld += rows[x0] * (1 - t)[:, None] + rows[x0 + 1] * t[:, None]
        w = 1.0 / (1.0 + np.exp(-fld * 4.0))
        img[:, :, c] = palette[0, c] * (1 - w) + palette[1, c] * w
    return np.clip(img, 0.02, 0.98)


# ---------------------------------------------------------------------------
# Dataset building


@dataclass
class DatasetConfig:
    n_scenes: int
    seed: int = 0
    schemes: tuple[str, ...] = ("8p",)
    poses: tuple[str, ...] = POSES
    lights: tuple[str, ...] = ("L1", "L2", "L3")
    cameras: Optional[tuple] = None  # None -> standard 18-pose grid
    train_fraction: float = 0.8
    texture_fraction: float = 0.0  # fraction of train scenes with random body textures
    texture_scheme: str = "8p"
    scene_id_offset: int = 0


@dataclass
class DatasetEntry:
    spec: SceneSpec
    cam: CameraPose
    scheme_name: str
    split: str  # 'train' | 'test'
    gain: float
    ground_truth: list
    body_texture: Optional[int]  # seed of a random body texture painted in (train only)
    pixels_u8: Optional[np.ndarray] = None
    path: Optional[str] = None

    def pixels(self) -> np.ndarray:
        """Image as float64 in [0, 1] (8-bit quantized, same as the PNG form)."""
        if self.pixels_u8 is None:
            if self.path is None:
                raise ValueError("entry has neither pixels nor a file path")
            self.pixels_u8 = np.asarray(Image.open(self.path).convert("RGB"))
        return self.pixels_u8.astype(np.float64) / 255.0

    def regions(self) -> list:
        return region_geometry(self.spec, self.cam, pattern_scheme(self.scheme_name))

    def person_box(self) -> np.ndarray:
        for label, box in self.ground_truth:
            if label == TARGET_CLASS:
                return np.asarray(box)
        raise ValueError("no target-class box in ground truth")


@dataclass
class SceneDataset:
    entries: list
    config: DatasetConfig
    config_hash: str

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]


def _config_hash(obj) -> str:
    payload = json.dumps(dataclasses.asdict(obj), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_dataset(config: DatasetConfig) -> SceneDataset:
    """Generate scene specs, render every (scene, light, camera, scheme) image.

    Scenes are split train/test by scene id; the standard evaluation grid is
    n_scenes x 3 lights x 18 cameras per scheme.
    """
    if config.n_scenes <= 0:
        raise ValueError("dataset needs at least one scene")
    master = np.random.default_rng(np.random.SeedSequence([config.seed, 301]))
    ids = np.arange(config.n_scenes)
    perm = master.permutation(ids)
    n_train = int(round(config.train_fraction * config.n_scenes))
    train_ids = set(int(i) for i in perm[:n_train])

    entries = []
    for i in range(config.n_scenes):
        sid = config.scene_id_offset + i
        ss = np.random.SeedSequence([config.seed, sid, 977])
        tex_seed, col_seed = (int(x) for x in ss.generate_state(2))
        scene_rng = np.random.default_rng(np.random.SeedSequence([config.seed, sid, 979]))
        split = "train" if i in train_ids else "test"
        body_texture = None
        if split == "train" and scene_rng.random() < config.texture_fraction:
            body_texture = int(scene_rng.integers(0, 2**31))
        spec_base = dict(
            scene_id=sid,
            environment=ENVIRONMENTS[i % 2],
            texture_seed=tex_seed,
            pose=config.poses[i % len(config.poses)],
            size_scale=float(scene_rng.uniform(0.9, 1.1)),
            color_seed=col_seed,
        )
        cams = config.cameras or camera_grid(None)
        tex = natural_sheet(body_texture) if body_texture is not None else None
        for light in config.lights:
            spec = SceneSpec(light_level=light, **spec_base)
            for cam in cams:
                # Training scenes may carry a random body texture; evaluation
                # images are stored clean and patterns are painted on later.
                if tex is not None:
                    si = render(spec, cam, pattern_scheme(config.texture_scheme), tex)
                else:
                    si = render(spec, cam, pattern_scheme("none"), None)
                u8 = np.clip(np.round(si.pixels * 255.0), 0, 255).astype(np.uint8)
                for scheme_name in config.schemes:
                    entries.append(
                        DatasetEntry(
                            spec=spec,
                            cam=cam,
                            scheme_name=scheme_name,
                            split=split,
                            gain=si.gain,
                            ground_truth=si.ground_truth,
                            body_texture=body_texture,
                            pixels_u8=u8,
                        )
                    )
    return SceneDataset(entries, config, _config_hash(config))


# ---------------------------------------------------------------------------
# Disk format: PNG images + JSON manifest


def save_dataset(ds: SceneDataset, out_dir: str) -> str:
    """Write images/ PNGs plus manifest.json; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    items = []
    seen_files = {}
    for k, e in enumerate(ds.entries):
        key = (e.spec.scene_id, e.spec.light_level, e.cam.yaw_deg, e.cam.height, e.cam.distance, e.body_texture)
        if key in seen_files:
            fname = seen_files[key]
        else:
            fname = f"images/img_{e.spec.scene_id:04d}_{e.spec.light_level}_{len(seen_files):03d}.png"
            Image.fromarray(e.pixels_u8).save(out / fname)
            seen_files[key] = fname
        regions = e.regions()
        items.append(
            {
                "file": fname,
                "split": e.split,
                "scene_id": e.spec.scene_id,
                "environment": e.spec.environment,
                "texture_seed": e.spec.texture_seed,
                "light_level": e.spec.light_level,
                "pose": e.spec.pose,
                "size_scale": e.spec.size_scale,
                "color_seed": e.spec.color_seed,
                "camera": {"yaw_deg": e.cam.yaw_deg, "height": e.cam.height, "distance": e.cam.distance},
                "scheme": e.scheme_name,
                "gain": e.gain,
                "body_texture_seed": e.body_texture,
                "ground_truth": [[label, [float(v) for v in box]] for label, box in e.ground_truth],
                "regions": [
                    {
                        "part": r.part,
                        "window": list(r.window),
                        "homography": [float(v) for v in r.homography.reshape(-1)],
                    }
                    for r in regions
                ],
            }
        )
    manifest = {
        "format": "camolab-dataset-v1",
        "config_hash": ds.config_hash,
        "seed": ds.config.seed,
        "n_entries": len(items),
        "entries": items,
    }
    path = out / "manifest.json"
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, path)
    return str(path)


def load_dataset(in_dir: str) -> SceneDataset:
    """Load a dataset directory written by save_dataset."""
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("format") != "camolab-dataset-v1":
        raise ValueError(f"not a camolab dataset: {in_dir}")
    entries = []
    for it in manifest["entries"]:
        spec = SceneSpec(
            scene_id=it["scene_id"],
            environment=it["environment"],
            texture_seed=it["texture_seed"],
            light_level=it["light_level"],
            pose=it["pose"],
            size_scale=it["size_scale"],
            color_seed=it["color_seed"],
        )
        cam = CameraPose(**it["camera"])
        entries.append(
            DatasetEntry(
                spec=spec,
                cam=cam,
                scheme_name=it["scheme"],
                split=it["split"],
                gain=it["gain"],
                ground_truth=[(label, np.array(box)) for label, box in it["ground_truth"]],
                body_texture=it.get("body_texture_seed"),
                path=str(root / it["file"]),
            )
        )
    cfg = DatasetConfig(n_scenes=0, seed=manifest["seed"])
    ds = SceneDataset(entries, cfg, manifest["config_hash"])
    return ds
