"""Face segmentation: HSV color thresholding, normal-based region growing,
quadrilateral outline fitting and dimension-based region-of-interest gating."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .camera import CameraIntrinsics, DepthImage, MaskImage, sample_depth_window
from .errors import (
    InvalidDepth,
    MissingNormals,
    NoComponent,
    NoRoiMatch,
    NotQuadrilateralLike,
)
from .geometry import Obb, PointCloud, centroid, fit_obb

# Depth for the axis endpoints is sampled slightly inside the outline so the
# averaging window cannot straddle the face boundary. The symmetric shift of
# both endpoints cancels in the midpoint and leaves the direction unchanged.
_INWARD_PIXELS = 2.0
_DEPTH_WINDOW = 5


@dataclass(frozen=True)
class HsvRange:
    """Hue in degrees [0, 360) with wrap-around allowed; s, v in [0, 1]."""

    h_lo: float
    h_hi: float
    s_lo: float = 0.0
    s_hi: float = 1.0
    v_lo: float = 0.0
    v_hi: float = 1.0

    def __post_init__(self):
        for h in (self.h_lo, self.h_hi):
            if not (0.0 <= h < 360.0):
                raise ValueError("hue bounds must lie in [0, 360)")
        for s in (self.s_lo, self.s_hi, self.v_lo, self.v_hi):
            if not (0.0 <= s <= 1.0):
                raise ValueError("saturation and value bounds must lie in [0, 1]")


@dataclass
class RoiSpec:
    """Expected face dimensions in meters with a relative tolerance."""

    width: float
    height: float
    depth: float
    tolerance: float = 0.15

    def __post_init__(self):
        if not (self.width >= self.height >= self.depth > 0):
            raise ValueError("dimensions must satisfy width >= height >= depth > 0")
        if not (0.0 < self.tolerance < 0.5):
            raise ValueError("tolerance must lie in (0, 0.5)")


@dataclass
class Quadrilateral2D:
    """Convex quadrilateral in pixel coordinates, counter-clockwise, starting
    at the corner nearest the image origin."""

    corners: np.ndarray

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(4, 2)
        if _shoelace(self.corners) <= 0:
            raise ValueError("corners must be counter-clockwise with positive area")

    @property
    def edge_lengths(self) -> np.ndarray:
        d = np.roll(self.corners, -1, axis=0) - self.corners
        return np.linalg.norm(d, axis=1)

    @property
    def area(self) -> float:
        return _shoelace(self.corners)


def rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hexcone HSV from an (h, w, 3) uint8 image: h in degrees, s and v in [0, 1]."""
    f = rgb.astype(np.float64) / 255.0
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    v = f.max(axis=-1)
    c = v - f.min(axis=-1)
    h = np.zeros_like(v)
    nz = c > 0
    rmax = nz & (v == r)
    gmax = nz & ~rmax & (v == g)
    bmax = nz & ~rmax & ~gmax
    h[rmax] = np.mod((g[rmax] - b[rmax]) / c[rmax], 6.0)
    h[gmax] = (b[gmax] - r[gmax]) / c[gmax] + 2.0
    h[bmax] = (r[bmax] - g[bmax]) / c[bmax] + 4.0
    h *= 60.0
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return h, s, v


def hsv_threshold(rgb: np.ndarray, rng: HsvRange) -> MaskImage:
    """Binary mask of pixels inside the HSV box; hue wraps when h_lo > h_hi."""
    h, s, v = rgb_to_hsv(rgb)
    if rng.h_lo <= rng.h_hi:
        hue_ok = (h >= rng.h_lo) & (h <= rng.h_hi)
    else:
        hue_ok = (h >= rng.h_lo) | (h <= rng.h_hi)
    ok = hue_ok & (s >= rng.s_lo) & (s <= rng.s_hi) & (v >= rng.v_lo) & (v <= rng.v_hi)
    return MaskImage(np.where(ok, 255, 0).astype(np.uint8))


def region_growing(
    cloud: PointCloud,
    angle_thresh_deg: float = 5.0,
    curvature_thresh: float = 0.03,
    min_cluster: int = 200,
    neighbors: int = 30,
) -> list[np.ndarray]:
    """Cluster a cloud into smooth regions.

    Seeds are taken in ascending curvature order (ties by index). A neighbor
    joins a cluster when its normal is within `angle_thresh_deg` of the point
    it is grown from, and itself continues the growth only when its curvature
    is at most `curvature_thresh`. Clusters below `min_cluster` points are
    discarded. Returns sorted index arrays, mutually disjoint.
    """
    if cloud.normals is None or cloud.curvatures is None:
        raise MissingNormals("region growing needs normals and curvatures")
    pts = cloud.points
    n = len(pts)
    valid = np.all(np.isfinite(cloud.normals), axis=1) & np.isfinite(cloud.curvatures)
    k = min(neighbors + 1, n)
    tree = cKDTree(pts)
    _, nbrs = tree.query(pts, k=k)
    if k == 1:
        nbrs = nbrs[:, None]
    cos_thresh = np.cos(np.radians(angle_thresh_deg))
    labels = np.full(n, -1, dtype=np.int64)
    curv = np.where(valid, cloud.curvatures, np.inf)
    order = np.argsort(curv, kind="stable")
    clusters: list[list[int]] = []
    for seed in order:
        if labels[seed] != -1 or not valid[seed]:
            continue
        cid = len(clusters)
        labels[seed] = cid
        members = [int(seed)]
        queue = deque([int(seed)])
        while queue:
            p = queue.popleft()
            np_normal = cloud.normals[p]
            for q in nbrs[p]:
                q = int(q)
                if labels[q] != -1 or not valid[q]:
                    continue
                if np_normal @ cloud.normals[q] >= cos_thresh:
                    labels[q] = cid
                    members.append(q)
                    if cloud.curvatures[q] <= curvature_thresh:
                        queue.append(q)
        clusters.append(members)
    return [np.array(sorted(m)) for m in clusters if len(m) >= min_cluster]


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _merge_least_area_edge(poly: np.ndarray) -> np.ndarray | None:
    """Remove one edge of a convex CCW polygon by extending its neighbors to
    their intersection, choosing the removal that adds the least area."""
    n = len(poly)
    best_area = np.inf
    best = None
    for i in range(n):
        a_prev, a = poly[i - 1], poly[i]
        b, b_next = poly[(i + 1) % n], poly[(i + 2) % n]
        u = a - a_prev
        v = b - b_next
        denom = u[0] * v[1] - u[1] * v[0]
        if abs(denom) < 1e-12:
            continue
        d = b - a
        s = (d[0] * v[1] - d[1] * v[0]) / denom
        t = (d[0] * u[1] - d[1] * u[0]) / denom
        if s <= 0 or t <= 0:
            continue
        w = a + s * u
        added = 0.5 * abs((b - a)[0] * (w - a)[1] - (b - a)[1] * (w - a)[0])
        if added < best_area:
            best_area = added
            best = (i, w)
    if best is None:
        return None
    i, w = best
    merged = []
    for j in range(n):
        if j == i:
            merged.append(w)
            continue
        if j == (i + 1) % n:
            continue
        merged.append(poly[j])
    return np.array(merged)


def _refine_quad(poly: np.ndarray, boundary: np.ndarray) -> np.ndarray | None:
    """Subpixel polish: refit each quadrilateral edge as a least-squares line
    over nearby outline pixels, then intersect adjacent lines.

    The raw edges sit on the outer staircase envelope of the rasterized
    outline, whose phase wanders by up to a pixel. Fitted lines run through
    the staircase instead; the residual half-pixel inset is equal on opposite
    edges, so centers and edge midpoints lose their rasterization bias.
    Returns None (caller keeps the raw corners) when any edge lacks support.
    """
    lines = []
    for i in range(4):
        a, b = poly[i], poly[(i + 1) % 4]
        edge = b - a
        length = float(np.linalg.norm(edge))
        if length < 1e-9:
            return None
        u = edge / length
        rel = boundary - a
        along = rel @ u
        perp = rel @ np.array([-u[1], u[0]])
        sel = (
            (np.abs(perp) <= 1.5)
            & (along >= 0.1 * length)
            & (along <= 0.9 * length)
        )
        pts = boundary[sel]
        if len(pts) < 8:
            return None
        mean = pts.mean(axis=0)
        cov = (pts - mean).T @ (pts - mean)
        _, evecs = np.linalg.eigh(cov)
        lines.append((mean, evecs[:, 1]))
    corners = np.empty((4, 2))
    for j in range(4):
        p1, d1 = lines[j - 1]
        p2, d2 = lines[j]
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-9:
            return None
        rel = p2 - p1
        s = (rel[0] * d2[1] - rel[1] * d2[0]) / denom
        corners[j] = p1 + s * d1
    if _shoelace(corners) < 0:
        corners = corners[::-1]
    e1 = np.roll(corners, -1, axis=0) - corners
    e2 = np.roll(corners, -2, axis=0) - np.roll(corners, -1, axis=0)
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(cross <= 0):
        return None
    return corners


def fit_quadrilateral(
    mask: MaskImage, min_area: int = 100, refine: bool = True
) -> Quadrilateral2D:
    """Quadrilateral enclosing the largest connected mask component.

    The convex hull of the component's pixels is reduced to 4 vertices by
    repeatedly replacing the edge whose removal grows the area least, then
    optionally polished to subpixel edges. Fails when no component reaches
    `min_area` pixels or when the reduction changes the hull area by more
    than 15 percent.
    """
    binary = mask.data != 0
    labeled, ncomp = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if ncomp == 0:
        raise NoComponent("mask is empty")
    sizes = np.bincount(labeled.ravel())[1:]
    biggest = int(np.argmax(sizes)) + 1
    if sizes[biggest - 1] < min_area:
        raise NoComponent(
            f"largest component has {sizes[biggest - 1]} px, need {min_area}"
        )
    ys, xs = np.nonzero(labeled == biggest)
    pts = np.column_stack([xs, ys]).astype(np.float64)
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise NotQuadrilateralLike(f"degenerate outline: {exc}") from exc
    poly = pts[hull.vertices]
    if _shoelace(poly) < 0:
        poly = poly[::-1]
    hull_area = abs(_shoelace(poly))
    if len(poly) < 4:
        raise NotQuadrilateralLike(f"outline has only {len(poly)} hull vertices")
    while len(poly) > 4:
        reduced = _merge_least_area_edge(poly)
        if reduced is None:
            raise NotQuadrilateralLike("could not merge hull edges")
        poly = reduced
    quad_area = abs(_shoelace(poly))
    if quad_area > hull_area * 1.15:
        raise NotQuadrilateralLike(
            f"reduction changed area by {quad_area / hull_area - 1:.1%}"
        )
    if _shoelace(poly) < 0:
        poly = poly[::-1]
    if refine:
        component = labeled == biggest
        interior = ndimage.binary_erosion(component)
        by, bx = np.nonzero(component & ~interior)
        polished = _refine_quad(poly, np.column_stack([bx, by]).astype(np.float64))
        if polished is not None:
            poly = polished
    # start at the corner nearest the image origin, ties by row then column
    key = np.lexsort((poly[:, 0], poly[:, 1], (poly ** 2).sum(axis=1)))
    poly = np.roll(poly, -int(key[0]), axis=0)
    return Quadrilateral2D(poly)


def roi_filter(
    segments: list[PointCloud], spec: RoiSpec
) -> tuple[PointCloud, Obb]:
    """Pick the segment whose bounding box best matches the expected face.

    A segment is accepted when its two largest box extents match the expected
    width and height within the relative tolerance and its smallest extent
    does not exceed the expected depth. Among accepted segments the one with
    the smallest Euclidean extent error wins.
    """
    best = None
    best_err = np.inf
    for seg in segments:
        if len(seg) < 3:
            continue
        try:
            obb = fit_obb(seg)
        except Exception:
            continue
        dims = 2.0 * obb.half_extents
        if abs(dims[0] - spec.width) > spec.tolerance * spec.width:
            continue
        if abs(dims[1] - spec.height) > spec.tolerance * spec.height:
            continue
        if dims[2] > spec.depth:
            continue
        err = float(np.hypot(dims[0] - spec.width, dims[1] - spec.height))
        if err < best_err:
            best_err = err
            best = (seg, obb)
    if best is None:
        raise NoRoiMatch(
            f"no segment within {spec.tolerance:.0%} of "
            f"{spec.width:.3f}x{spec.height:.3f} m"
        )
    return best


def _edge_midpoint_sample(intr, depth, mid, toward, window):
    """Inverse-project a continuous pixel using window-averaged depth sampled
    slightly toward `toward` (the outline interior)."""
    direction = np.asarray(toward, dtype=np.float64) - mid
    norm = np.linalg.norm(direction)
    center = mid + direction / norm * _INWARD_PIXELS if norm > 1e-9 else mid
    z = sample_depth_window(depth, center, window)
    return np.array(
        [(mid[0] - intr.cx) * z / intr.fx, (mid[1] - intr.cy) * z / intr.fy, z]
    )


def target_axis_points(
    quad: Quadrilateral2D, intr: CameraIntrinsics, depth: DepthImage
) -> tuple[np.ndarray, np.ndarray]:
    """Two 3D points spanning the face along its long direction.

    The midpoints of the two shorter outline edges are inverse-projected with
    window-averaged depth. The first returned point has the smaller image x
    (ties: smaller y). When only one midpoint has depth, the other is mirrored
    through the outline centroid; when neither has depth, InvalidDepth.
    """
    lengths = quad.edge_lengths
    pair = (0, 2) if lengths[0] + lengths[2] <= lengths[1] + lengths[3] else (1, 3)
    corners = quad.corners
    mids = [(corners[i] + corners[(i + 1) % 4]) / 2.0 for i in pair]
    center_px = corners.mean(axis=0)
    pts: list[np.ndarray | None] = []
    for mid in mids:
        try:
            pts.append(_edge_midpoint_sample(intr, depth, mid, center_px, _DEPTH_WINDOW))
        except InvalidDepth:
            pts.append(None)
    if pts[0] is None and pts[1] is None:
        raise InvalidDepth("no valid depth at either short-edge midpoint")
    if pts[0] is None or pts[1] is None:
        have = 0 if pts[0] is not None else 1
        center3d = _edge_midpoint_sample(intr, depth, center_px, center_px, _DEPTH_WINDOW)
        pts[1 - have] = 2.0 * center3d - pts[have]
    first = 0
    if (mids[1][0], mids[1][1]) < (mids[0][0], mids[0][1]):
        first = 1
    return pts[first], pts[1 - first]


def axis_points_from_cloud(segment: PointCloud) -> tuple[np.ndarray, np.ndarray]:
    """Axis endpoints from the segment's bounding box, for scenes without a
    color mask: centroid +- half of the major half-extent along the major axis.

    The first point has the smaller viewing-direction-normalized x, matching
    the image-x ordering used by the outline route.
    """
    c = centroid(segment)
    obb = fit_obb(segment)
    offset = obb.axes[0] * (obb.half_extents[0] / 2.0)
    a, b = c - offset, c + offset
    if (a[0] / a[2], a[1] / a[2]) <= (b[0] / b[2], b[1] / b[2]):
        return a, b
    return b, a
