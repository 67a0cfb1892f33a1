"""Low-level differentiable image sampling (torch).

All sampling here uses the lerp form of bilinear interpolation so that a
constant field is reproduced bit-exactly, and every output value is an
affine function of the input texels (dense gradients).

Coordinate convention: texel (row i, col j) covers the unit square
[j, j+1) x [i, i+1) and has its center at (j + 0.5, i + 0.5).
"""

from __future__ import annotations

import torch


def bilinear_sample(img: torch.Tensor, xs: torch.Tensor, ys: torch.Tensor) -> torch.Tensor:
    """Sample an (H, W, C) image at float positions with clamp-to-edge.

    xs/ys may have any broadcastable shape S; returns shape S + (C,).
    """
    h, w = img.shape[0], img.shape[1]
    fx = xs - 0.5
    fy = ys - 0.5
    x0 = torch.floor(fx)
    y0 = torch.floor(fy)
    tx = (fx - x0).unsqueeze(-1)
    ty = (fy - y0).unsqueeze(-1)
    x0 = x0.long()
    y0 = y0.long()
    x0c = x0.clamp(0, w - 1)
    x1c = (x0 + 1).clamp(0, w - 1)
    y0c = y0.clamp(0, h - 1)
    y1c = (y0 + 1).clamp(0, h - 1)
    a = img[y0c, x0c]
    b = img[y0c, x1c]
    c = img[y1c, x0c]
    d = img[y1c, x1c]
    top = a + (b - a) * tx
    bot = c + (d - c) * tx
    return top + (bot - top) * ty


def pixel_center_grid(h: int, w: int, dtype: torch.dtype) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (xs, ys) grids of pixel-center coordinates, each (h, w)."""
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype) + 0.5,
        torch.arange(w, dtype=dtype) + 0.5,
        indexing="ij",
    )
    return xs, ys


def warp_affine(img: torch.Tensor, m: torch.Tensor, out_hw: tuple[int, int] | None = None) -> torch.Tensor:
    """Backward-warp an (H, W, C) image by a 2x3 sampling matrix.

    Output pixel with center p reads the input at m @ (p, 1). The identity
    matrix reproduces the input bit-exactly.
    """
    h, w = out_hw if out_hw is not None else (img.shape[0], img.shape[1])
    xs, ys = pixel_center_grid(h, w, img.dtype)
    xin = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
    yin = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
    return bilinear_sample(img, xin, yin)


def centered_affine(b: torch.Tensor, offset: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Build the 2x3 sampling matrix for p_in = b @ (p - c) + c + offset.

    c is the image center in pixel coordinates; b is the 2x2 linear part.
    """
    cx = torch.tensor(w / 2.0, dtype=b.dtype)
    cy = torch.tensor(h / 2.0, dtype=b.dtype)
    c = torch.stack([cx, cy])
    t = c + offset - b @ c
    return torch.cat([b, t.unsqueeze(1)], dim=1)
