"""Landmark geometry: thin-plate-spline fitting/warping, mining, alignment.

Landmark sets are (K, 2) float64 arrays of (x, y) pixel coordinates, index
order semantically stable (index i always names the same facial point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# standard 68-point anchor groups used for similarity alignment
LEFT_EYE_IDX = tuple(range(36, 42))
RIGHT_EYE_IDX = tuple(range(42, 48))
MOUTH_IDX = tuple(range(48, 68))


def _as_landmarks(lms):
    arr = np.asarray(lms, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"landmark set must be (K, 2), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("landmark coordinates must be finite")
    return arr


def _tps_kernel(r2):
    # U(r) = r^2 log(r^2) with U(0) = 0
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


def _kernel_matrix(pts_a, pts_b):
    d = pts_a[:, None, :] - pts_b[None, :, :]
    return _tps_kernel((d * d).sum(axis=2))


@dataclass
class TpsTransform:
    """Fitted thin-plate spline mapping the control points to their targets."""

    control_points: np.ndarray  # (K, 2)
    affine: np.ndarray          # (2, 3): per-axis (bias, x, y) coefficients
    kernel_weights: np.ndarray  # (K, 2)
    regularization: float = 0.0


def tps_fit(source, target, lam=0.0) -> TpsTransform:
    """Solve the TPS linear system mapping ``source`` onto ``target``.

    Uses the radial kernel U(r) = r^2 log(r^2); ``lam`` regularizes the
    kernel block.  Raises ValueError on singular systems (collinear or
    duplicate control points).
    """
    src = _as_landmarks(source)
    tgt = _as_landmarks(target)
    k = src.shape[0]
    if tgt.shape[0] != k:
        raise ValueError("source and target must have the same number of points")
    if k < 3:
        raise ValueError("TPS needs at least 3 control points")
    kernel = _kernel_matrix(src, src) + lam * np.eye(k)
    p = np.hstack([np.ones((k, 1)), src])
    lhs = np.zeros((k + 3, k + 3))
    lhs[:k, :k] = kernel
    lhs[:k, k:] = p
    lhs[k:, :k] = p.T
    rhs = np.zeros((k + 3, 2))
    rhs[:k] = tgt
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as err:
        raise ValueError(f"singular TPS system (collinear or duplicate points): {err}")
    fit = TpsTransform(control_points=src, affine=sol[k:].T.copy(),
                       kernel_weights=sol[:k].copy(), regularization=lam)
    if lam == 0.0:
        resid = np.abs(tps_apply(fit, src) - tgt).max()
        if resid > 1e-3:
            raise ValueError(
                f"numerically singular TPS system (residual {resid:.2e} px)")
    return fit


def tps_apply(t: TpsTransform, p):
    """Map a point (2,) or point array (M, 2) through a fitted transform."""
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    u = _kernel_matrix(pts, t.control_points)
    out = t.affine[:, 0] + pts @ t.affine[:, 1:].T + u @ t.kernel_weights
    return out[0] if single else out


def _bilinear_sample(image, coords):
    """Sample (H, W, C) image at (M, 2) float (x, y) coords with edge clamp."""
    h, w = image.shape[:2]
    x = np.clip(coords[:, 0], 0.0, w - 1.0)
    y = np.clip(coords[:, 1], 0.0, h - 1.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0i = x0.astype(np.int64)
    x1i = np.minimum(x0i + 1, w - 1)
    y0i = y0.astype(np.int64)
    y1i = np.minimum(y0i + 1, h - 1)
    fx = fx[:, None]
    fy = fy[:, None]
    top = image[y0i, x0i] * (1 - fx) + image[y0i, x1i] * fx
    bot = image[y1i, x0i] * (1 - fx) + image[y1i, x1i] * fx
    return top * (1 - fy) + bot * fy


def warp_image(image, source_lms, target_lms, delta=None, lam=0.0):
    """Warp ``image`` so features at ``source_lms`` move to ``target_lms + delta``.

    Inverse-mapped: fits a TPS from (target + delta) back to source and
    bilinearly samples the input at each output pixel, clamping out-of-bounds
    samples to the edge.
    """
    img = np.asarray(image, dtype=np.float64)
    src = _as_landmarks(source_lms)
    tgt = _as_landmarks(target_lms)
    if delta is not None:
        tgt = tgt + _as_landmarks(delta)
    fit = tps_fit(tgt, src, lam=lam)
    h, w = img.shape[:2]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1)
    sampled = _bilinear_sample(img, tps_apply(fit, grid))
    return sampled.reshape(img.shape)


def sample_perturbation(rng, variance=3.0, k=68):
    """Draw (k, 2) i.i.d. zero-mean Gaussian landmark offsets.

    ``variance`` is the distribution's variance (std = sqrt(variance));
    0 gives exact zeros.
    """
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if variance == 0:
        return np.zeros((k, 2))
    return rng.normal(0.0, np.sqrt(variance), size=(k, 2))


def nearest_neighbor(query, pool, exclude_class, norm="l2"):
    """Index of the pool entry with closest landmarks, skipping one class.

    ``pool`` is a sequence of (landmarks, class) tuples; distance is taken on
    the flattened coordinate difference in the chosen norm ("l2" or "linf").
    Ties resolve to the lowest index.
    """
    q = _as_landmarks(query).ravel()
    if norm not in ("l2", "linf"):
        raise ValueError(f"unknown norm '{norm}'")
    best_idx = -1
    best_dist = np.inf
    for idx, (lms, cls) in enumerate(pool):
        if cls == exclude_class:
            continue
        d = _as_landmarks(lms).ravel() - q
        dist = np.abs(d).max() if norm == "linf" else np.sqrt((d * d).sum())
        if dist < best_dist:
            best_dist = dist
            best_idx = idx
    if best_idx < 0:
        raise ValueError(f"no pool entry outside class {exclude_class!r}")
    return best_idx


def phi_g(l, l_prime):
    """Normalized landmark displacement: ||l - l'|| / ||l - centroid(l)||."""
    a = _as_landmarks(l)
    b = _as_landmarks(l_prime)
    if a.shape != b.shape:
        raise ValueError("landmark sets must have equal K")
    denom = np.linalg.norm(a - a.mean(axis=0))
    if denom == 0:
        raise ValueError("degenerate landmarks: all points coincide")
    return float(np.linalg.norm(a - b) / denom)


def _similarity_fit(src, dst):
    """Least-squares similarity (rotation, uniform scale, translation)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    var_s = (sc * sc).sum() / src.shape[0]
    if var_s == 0:
        raise ValueError("degenerate landmark configuration for alignment")
    cov = dc.T @ sc / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    sign = np.eye(2)
    if np.linalg.det(u @ vt) < 0:
        sign[1, 1] = -1.0
    rot = u @ sign @ vt
    scale = (d * np.diag(sign)).sum() / var_s
    shift = mu_d - scale * rot @ mu_s
    return scale, rot, shift


def _anchor_points(lms):
    if lms.shape[0] == 68:
        return np.stack([lms[list(LEFT_EYE_IDX)].mean(axis=0),
                         lms[list(RIGHT_EYE_IDX)].mean(axis=0),
                         lms[list(MOUTH_IDX)].mean(axis=0)])
    return lms


def align_face(image, landmarks, template, anchors=None):
    """Similarity-align a face so eye/mouth centers match the template.

    ``anchors`` optionally overrides the anchor index groups as a sequence of
    index tuples; by default the standard 68-point eye/mouth groups are used
    (all points when K != 68).  Returns (aligned image, aligned landmarks).
    """
    lms = _as_landmarks(landmarks)
    tpl = _as_landmarks(template)
    if anchors is not None:
        src_a = np.stack([lms[list(g)].mean(axis=0) for g in anchors])
        dst_a = np.stack([tpl[list(g)].mean(axis=0) for g in anchors])
    else:
        src_a = _anchor_points(lms)
        dst_a = _anchor_points(tpl)
    scale, rot, shift = _similarity_fit(src_a, dst_a)
    out_lms = (scale * (rot @ lms.T)).T + shift
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    grid = np.stack([xs.ravel(), ys.ravel()], axis=1)
    # inverse map: output pixel -> input coords
    inv = (rot.T @ ((grid - shift) / scale).T).T
    out_img = _bilinear_sample(img, inv).reshape(img.shape)
    return out_img, out_lms


def save_landmarks(path, lms):
    """Write one 'x y' line per landmark with exact float round-trip."""
    arr = _as_landmarks(lms)
    with open(path, "w") as f:
        for x, y in arr:
            f.write(f"{float(x)!r} {float(y)!r}\n")


def load_landmarks(path):
    pts = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            x, y = line.split()
            pts.append((float(x), float(y)))
    return _as_landmarks(pts)
