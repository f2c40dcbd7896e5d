"""Global affine registration of a view pair.

Coordinates are ``(x, y) = (column, row)`` with the origin at the centre of
the top-left pixel.  A warp samples ``output(p) = input(A @ p + t)``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from ..errors import AlignmentError, DimensionError

__all__ = ["AffineParams", "warp_affine", "estimate_affine", "luminance"]


@dataclass(frozen=True)
class AffineParams:
    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, a, t):
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 0]), float(a[1, 1]),
                   float(t[0]), float(t[1]))

    @classmethod
    def from_similarity(cls, scale=1.0, angle_deg=0.0, tx=0.0, ty=0.0, center=(0.0, 0.0)):
        """Rotation + isotropic scale about ``center`` followed by a translation."""
        th = np.deg2rad(angle_deg)
        a = scale * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        c = np.asarray(center, dtype=np.float64)
        return cls.from_matrix(a, c - a @ c + np.array([tx, ty]))

    @property
    def matrix(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self):
        return np.array([self.tx, self.ty])

    @property
    def determinant(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    def apply(self, points):
        """Map ``[..., 2]`` points ``(x, y)`` through ``A @ p + t``."""
        return np.asarray(points) @ self.matrix.T + self.translation

    def then(self, other):
        """Params equivalent to warping by ``self`` and then by ``other``.

        ``warp(warp(I, self), other) == warp(I, self.then(other))``.
        """
        a, b = self.matrix, other.matrix
        return AffineParams.from_matrix(a @ b, a @ other.translation + self.translation)

    def inverse(self):
        inv = np.linalg.inv(self.matrix)
        return AffineParams.from_matrix(inv, -inv @ self.translation)

    def displacement_error(self, other, shape):
        """Largest distance between the two maps over a pixel grid."""
        ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
        pts = np.stack([xs, ys], axis=-1).astype(np.float64)
        return float(np.linalg.norm(self.apply(pts) - other.apply(pts), axis=-1).max())

    def as_tuple(self):
        return (self.a11, self.a12, self.a21, self.a22, self.tx, self.ty)


def luminance(image):
    image = np.asarray(image, dtype=np.float64)
    return image.mean(axis=-1) if image.ndim == 3 else image


def _bilinear(image, sx, sy):
    h, w = image.shape[:2]
    valid = (sx >= -1e-9) & (sx <= w - 1 + 1e-9) & (sy >= -1e-9) & (sy <= h - 1 + 1e-9)
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        vmask = valid[..., None]
    else:
        vmask = valid
    out = ((1 - fx) * (1 - fy) * image[y0, x0] + fx * (1 - fy) * image[y0, x1]
           + (1 - fx) * fy * image[y1, x0] + fx * fy * image[y1, x1])
    return np.where(vmask, out, 0.0), valid


def warp_affine(image, params, order=3):
    """Inverse-warp ``image`` (H×W or H×W×C).

    ``order=3`` samples a cubic B-spline, ``order=1`` is bilinear.  Returns
    ``(warped, valid_mask)``; samples falling outside the source are zero
    and flagged False in the mask.  The identity map returns an exact copy.
    """
    if order not in (1, 3):
        raise ValueError("order must be 1 (bilinear) or 3 (cubic spline)")
    image = np.asarray(image)
    h, w = image.shape[:2]
    dtype = image.dtype if image.dtype.kind == "f" else np.float64
    if params.as_tuple() == AffineParams.identity().as_tuple():
        return image.astype(dtype, copy=True), np.ones((h, w), dtype=bool)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = params.a11 * xs + params.a12 * ys + params.tx
    sy = params.a21 * xs + params.a22 * ys + params.ty
    src = image.astype(np.float64)
    if order == 1:
        out, valid = _bilinear(src, sx, sy)
        return out.astype(dtype), valid
    valid = (sx >= -1e-9) & (sx <= w - 1 + 1e-9) & (sy >= -1e-9) & (sy <= h - 1 + 1e-9)
    planes = src[..., None] if src.ndim == 2 else src
    out = np.stack([map_coordinates(planes[..., c], [sy, sx], order=3, mode="mirror")
                    for c in range(planes.shape[-1])], axis=-1)
    out = np.where(valid[..., None], out, 0.0)
    if src.ndim == 2:
        out = out[..., 0]
    return out.astype(dtype), valid


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        prev = pyr[-1]
        h, w = (prev.shape[0] // 2) * 2, (prev.shape[1] // 2) * 2
        if h < 16 or w < 16:
            break
        p = prev[:h, :w]
        pyr.append(0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2]))
    return pyr


def _sample_norm(image, a, t, u, v, scale, center):
    # warp expressed in normalised, centred coordinates
    su = a[0, 0] * u + a[0, 1] * v + t[0]
    sv = a[1, 0] * u + a[1, 1] * v + t[1]
    return _bilinear(image, su * scale + center[0], sv * scale + center[1])


def _align_level(ref, mov, a, t, max_iters, tol, smooth):
    ref = gaussian_filter(ref, smooth) if smooth else ref
    mov = gaussian_filter(mov, smooth) if smooth else mov
    h, w = ref.shape
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    scale = max(h, w) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    u = (xs - center[0]) / scale
    v = (ys - center[1]) / scale
    gy, gx = np.gradient(mov)
    # derivatives with respect to normalised source coordinates
    gx = gx * scale
    gy = gy * scale

    def residual(a, t):
        warped, valid = _sample_norm(mov, a, t, u, v, scale, center)
        r = (warped - ref)[valid]
        return r, valid, (float(r @ r) / max(r.size, 1))

    r, valid, cost = residual(a, t)
    for _ in range(max_iters):
        if valid.sum() < 12:
            raise AlignmentError("warp left too few overlapping pixels", condition="no-overlap")
        wx, _ = _sample_norm(gx, a, t, u, v, scale, center)
        wy, _ = _sample_norm(gy, a, t, u, v, scale, center)
        uu, vv, wx, wy = u[valid], v[valid], wx[valid], wy[valid]
        jac = np.stack([wx * uu, wx * vv, wy * uu, wy * vv, wx, wy], axis=1)
        hess = jac.T @ jac
        eig = np.linalg.eigvalsh(hess)
        if eig[-1] <= 1e-10 * valid.sum() or eig[0] <= 1e-9 * eig[-1]:
            raise AlignmentError(
                "normal equations are singular (no usable image gradient)",
                condition=float(eig[0] / eig[-1]) if eig[-1] > 0 else float("inf"))
        step = -np.linalg.solve(hess, jac.T @ r)
        accepted = False
        for _ in range(6):
            na = a + step[:4].reshape(2, 2)
            nt = t + step[4:]
            nr, nvalid, ncost = residual(na, nt)
            if ncost <= cost:
                accepted = True
                break
            step = step / 2
        if not accepted:
            break
        a, t, r, valid, cost = na, nt, nr, nvalid, ncost
        if np.linalg.norm(step) * scale < tol:
            break
    return a, t


def estimate_affine(reference, moving, levels=3, max_iters=50, tol=1e-4, smooth=0.0):
    """Affine map registering ``moving`` onto ``reference``.

    Forward-additive Gauss-Newton on the photometric sum of squared
    differences, coarse to fine over a ``levels``-deep 2x pyramid.  The
    result satisfies ``warp_affine(moving, params) ≈ reference``.

    Raises
    ------
    AlignmentError
        When the normal equations are degenerate (e.g. a flat image).
    """
    ref = luminance(reference)
    mov = luminance(moving)
    if ref.shape != mov.shape:
        raise DimensionError(f"image shapes differ: {ref.shape} vs {mov.shape}")
    if min(ref.shape) < 16:
        raise DimensionError(f"images must be at least 16x16, got {ref.shape}")
    ref_pyr = _pyramid(ref, levels)
    mov_pyr = _pyramid(mov, levels)
    a = np.eye(2)
    t = np.zeros(2)
    for lvl in range(len(ref_pyr) - 1, -1, -1):
        a, t = _align_level(ref_pyr[lvl], mov_pyr[lvl], a, t, max_iters, tol, smooth)
    h, w = ref.shape
    center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    scale = max(h, w) / 2.0
    params = AffineParams.from_matrix(a, t * scale + center - a @ center)
    if params.determinant <= 0:
        raise AlignmentError("estimated map is not orientation preserving",
                             condition=params.determinant)
    return params
