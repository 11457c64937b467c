"""Synthetic character generation from boundary control points.

Pipeline: align a class of binary glyphs into a prototype, sample control
points along the prototype boundary, migrate the points onto each real glyph
by snapping along a sequence of interpolated signed-distance shapes, fit a
multivariate normal over the migrated point sets, and rasterize fresh samples
into new binary glyphs.

Binary images are boolean arrays indexed [row, col]; control points are float
(x, y) = (col, row) coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage


@dataclass
class ShapeModel:
    """Control points plus the edges connecting them into closed cycles."""

    points: np.ndarray                  # (n, 2) float, (x, y)
    edges: np.ndarray                   # (m, 2) int, index pairs
    converged: bool = False
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)

    def validate_cycles(self):
        """Every point must appear in exactly two edges (closed cycles)."""
        counts = np.zeros(len(self.points), dtype=int)
        for i, j in self.edges:
            counts[i] += 1
            counts[j] += 1
        if len(self.points) and not (counts == 2).all():
            bad = int(np.flatnonzero(counts != 2)[0])
            raise ValueError(f"edges do not form closed cycles: point {bad} has "
                             f"degree {counts[bad]}")

    def cycles(self) -> list:
        """Ordered point-index cycles recovered from the edge list."""
        self.validate_cycles()
        neigh = {i: [] for i in range(len(self.points))}
        for i, j in self.edges:
            neigh[int(i)].append(int(j))
            neigh[int(j)].append(int(i))
        seen = set()
        out = []
        for start in range(len(self.points)):
            if start in seen:
                continue
            cycle = [start]
            seen.add(start)
            prev, cur = None, start
            while True:
                nxt = [p for p in neigh[cur] if p != prev]
                if not nxt:
                    raise ValueError("open cycle in shape edges")
                step = nxt[0]
                if step == start:
                    break
                cycle.append(step)
                seen.add(step)
                prev, cur = cur, step
            out.append(cycle)
        return out


def check_binary(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != bool:
        uniq = np.unique(img)
        if not np.isin(uniq, (0, 1)).all():
            raise ValueError("binary image must contain only 0/1 values")
        img = img.astype(bool)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D binary image, got shape {img.shape}")
    return img


def binarize(img, threshold: float = 0.0, mode: str = "signed") -> np.ndarray:
    """Threshold a real matrix into a binary image.

    mode "signed": foreground where value <= threshold (interior of a signed
    distance field). mode "intensity": foreground where value >= threshold.
    """
    img = np.asarray(img, dtype=float)
    if mode == "signed":
        return img <= threshold
    if mode == "intensity":
        return img >= threshold
    raise ValueError(f"unknown binarize mode {mode!r}")


def boundary_mask(img) -> np.ndarray:
    """Foreground pixels with at least one 4-neighbor outside the foreground;
    pixels on the image frame count as adjacent to background."""
    img = check_binary(img)
    padded = np.pad(img, 1, mode="constant", constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return img & ~interior


def distance_transform(img) -> np.ndarray:
    """Signed exact Euclidean distance to the foreground boundary pixels:
    negative strictly inside, zero on the boundary, positive outside."""
    img = check_binary(img)
    if not img.any():
        raise ValueError("distance transform undefined for an all-background image")
    if img.all():
        raise ValueError("distance transform undefined for an all-foreground image")
    border = boundary_mask(img)
    dist = ndimage.distance_transform_edt(~border)
    return np.where(img, -dist, dist)


# --------------------------------------------------------------------------
# contour tracing and control-point extraction

_RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
_RING_INDEX = {d: i for i, d in enumerate(_RING)}


def _trace(mask, start):
    """Clockwise Moore-neighbor (radial sweep) boundary trace from the
    topmost-leftmost pixel of a connected region."""
    h, w = mask.shape

    def fg(r, c):
        return 0 <= r < h and 0 <= c < w and mask[r, c]

    b0 = (start[0], start[1] - 1)  # entered heading east; backtrack west
    cur, b = start, b0
    contour = []
    cap = 4 * int(mask.sum()) + 8
    for _ in range(cap):
        base = _RING_INDEX[(b[0] - cur[0], b[1] - cur[1])]
        nxt = None
        for di in range(1, 9):
            idx = (base + di) % 8
            cand = (cur[0] + _RING[idx][0], cur[1] + _RING[idx][1])
            if fg(*cand):
                nxt = cand
                prev_idx = (base + di - 1) % 8
                b_new = (cur[0] + _RING[prev_idx][0], cur[1] + _RING[prev_idx][1])
                break
        if nxt is None:
            return [start]  # isolated pixel
        contour.append(cur)
        cur, b = nxt, b_new
        if cur == start and b == b0:
            break
    return contour


def trace_contours(img, include_holes: bool = True) -> list:
    """Ordered boundary pixel cycles: one per 8-connected foreground component
    followed by one per enclosed hole."""
    img = check_binary(img)
    eight = np.ones((3, 3), dtype=bool)
    labels, count = ndimage.label(img, structure=eight)
    contours = []
    for lab in range(1, count + 1):
        mask = labels == lab
        rr, cc = np.nonzero(mask)
        start = (int(rr[0]), int(cc[0]))  # row-major first = topmost-leftmost
        contours.append(_trace(mask, start))
    if include_holes:
        bg_labels, bg_count = ndimage.label(~img)  # 4-connected background
        border_labels = set(np.unique(np.concatenate([
            bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]])))
        for lab in range(1, bg_count + 1):
            if lab in border_labels:
                continue
            mask = bg_labels == lab
            rr, cc = np.nonzero(mask)
            contours.append(_trace(mask, (int(rr[0]), int(cc[0]))))
    return contours


def _resample_closed(contour, count):
    """`count` points at equal arc length along the closed pixel polyline,
    linearly interpolated, returned as float (x, y)."""
    pts = np.array([(c, r) for r, c in contour], dtype=float)
    if len(pts) == 1:
        return np.repeat(pts, count, axis=0)
    closed = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(pts[:1], count, axis=0)
    targets = np.arange(count) * (total / count)
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


def extract_control_points(proto, n: int, include_holes: bool = True) -> ShapeModel:
    """Sample n control points at equal arc-length spacing along the traced
    boundary cycles of a binary prototype; multi-cycle shapes split the budget
    proportionally to cycle length (minimum 3 points per kept cycle)."""
    proto = check_binary(proto)
    if not proto.any():
        raise ValueError("prototype has no foreground to trace")
    contours = trace_contours(proto, include_holes=include_holes)
    contours = [c for c in contours if len(c) >= 3]
    if not contours:
        raise ValueError("no traceable boundary of 3+ pixels")
    total_pixels = sum(len(c) for c in contours)
    if n > total_pixels:
        raise ValueError(f"requested {n} control points but the boundary has "
                         f"only {total_pixels} pixels")

    # Keep the longest cycles that can each receive at least 3 points.
    if n < 3 * len(contours):
        order = sorted(range(len(contours)), key=lambda i: -len(contours[i]))
        contours = [contours[i] for i in sorted(order[:max(1, n // 3)])]
    lengths = np.array([float(len(c)) for c in contours])
    alloc = np.maximum(3, np.round(n * lengths / lengths.sum()).astype(int))
    while alloc.sum() > n and (alloc > 3).any():
        alloc[int(np.argmax(alloc))] -= 1
    alloc[int(np.argmax(alloc))] += n - alloc.sum()

    points = []
    edges = []
    for contour, count in zip(contours, alloc):
        base = len(points)
        sampled = _resample_closed(contour, int(count))
        points.extend(sampled)
        edges.extend([(base + i, base + (i + 1) % int(count)) for i in range(int(count))])
    h, w = proto.shape
    return ShapeModel(points=np.array(points), edges=np.array(edges),
                      converged=False, width=w, height=h)


# --------------------------------------------------------------------------
# rasterization


def rasterize(shape: ShapeModel, width: int | None = None, height: int | None = None):
    """Scanline even-odd fill of the control-point polygon(s), with the
    boundary polyline itself drawn so edge pixels are included."""
    width = shape.width if width is None else width
    height = shape.height if height is None else height
    if width is None or height is None:
        raise ValueError("rasterize needs a canvas size")
    out = np.zeros((height, width), dtype=bool)
    cycles = shape.cycles()

    segments = []
    for cycle in cycles:
        pts = shape.points[cycle]
        for i in range(len(cycle)):
            segments.append((pts[i], pts[(i + 1) % len(cycle)]))

    # Even-odd interior fill at pixel centers.
    for y in range(height):
        xs = []
        for p, q in segments:
            y1, y2 = p[1], q[1]
            if y1 == y2:
                continue
            if (y1 <= y < y2) or (y2 <= y < y1):
                xs.append(p[0] + (y - y1) * (q[0] - p[0]) / (y2 - y1))
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            lo = max(int(np.ceil(a - 1e-9)), 0)
            hi = min(int(np.floor(b + 1e-9)), width - 1)
            if hi >= lo:
                out[y, lo:hi + 1] = True

    # Draw the boundary itself.
    for p, q in segments:
        steps = int(max(abs(q[0] - p[0]), abs(q[1] - p[1])) * 2) + 2
        t = np.linspace(0.0, 1.0, steps)
        xs = np.round(p[0] + t * (q[0] - p[0])).astype(int)
        ys = np.round(p[1] + t * (q[1] - p[1])).astype(int)
        ok = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
        out[ys[ok], xs[ok]] = True
    return out


def iou(a, b) -> float:
    """Intersection over union of two binary images; 1.0 when both empty."""
    a = check_binary(a)
    b = check_binary(b)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


# --------------------------------------------------------------------------
# control-point migration


def _snap_to_boundary(points, img, context: str = ""):
    """Move each (x, y) point to the nearest boundary pixel of a binary image;
    ties break toward the smallest (row, col)."""
    border = boundary_mask(img)
    targets = np.argwhere(border)  # row-major order = (row, col) lexicographic
    if len(targets) == 0:
        raise ValueError(f"no boundary pixels to snap to{context}")
    ty = targets[:, 0].astype(float)
    tx = targets[:, 1].astype(float)
    d2 = (tx[None, :] - points[:, :1]) ** 2 + (ty[None, :] - points[:, 1:2]) ** 2
    j = np.argmin(d2, axis=1)  # first minimum = lexicographically smallest pixel
    return np.column_stack([tx[j], ty[j]])


def optimize_control_points(U, V, S: ShapeModel, steps: int = 5) -> ShapeModel:
    """Migrate control points from the synthetic shape toward the real one.

    Interpolates the signed distance fields of V (synthetic) and U (real),
    binarizes each blend at zero, and snaps every point to the nearest
    boundary pixel; the final step is the real image itself.
    """
    U = check_binary(U)
    V = check_binary(V)
    if U.shape != V.shape:
        raise ValueError(f"image shapes differ: {U.shape} vs {V.shape}")
    DU = distance_transform(U)
    DV = distance_transform(V)
    pts = np.array(S.points, dtype=float)
    for i in range(1, steps + 1):
        t = i / steps
        blend = (1.0 - t) * DV + t * DU
        inter = binarize(blend, 0.0, mode="signed")
        if not inter.any() or inter.all():
            raise ValueError(f"degenerate intermediate shape at step {i}/{steps}")
        pts = _snap_to_boundary(pts, inter, context=f" at step {i}/{steps}")
    h, w = U.shape
    return replace(S, points=pts, converged=True, width=w, height=h)


@dataclass
class MatchResult:
    image: np.ndarray
    shape: ShapeModel
    iou: float
    converged: bool


def match_synthetic(U, S0: ShapeModel, V0=None, max_iterations: int = 20,
                    displacement_tol: float = 0.5, steps: int = 5) -> MatchResult:
    """Alternate control-point migration and re-rasterization until the points
    settle. Keeps the best-overlap iterate (the initial shape included), so the
    returned match never undercuts the starting rasterization.
    """
    U = check_binary(U)
    h, w = U.shape
    S = replace(S0, width=w, height=h)
    V = rasterize(S) if V0 is None else check_binary(V0)
    best = MatchResult(image=V, shape=S, iou=iou(V, U), converged=False)
    converged = False
    for _ in range(max_iterations):
        S_new = optimize_control_points(U, V, S, steps=steps)
        V_new = rasterize(S_new)
        score = iou(V_new, U)
        if score >= best.iou:
            best = MatchResult(image=V_new, shape=S_new, iou=score, converged=False)
        disp = float(np.max(np.linalg.norm(S_new.points - S.points, axis=1))) \
            if len(S.points) else 0.0
        S, V = S_new, V_new
        if disp < displacement_tol:
            converged = True
            break
    best.converged = converged
    return best


# --------------------------------------------------------------------------
# prototype construction (simplified joint alignment)


def _warp(img, dy, dx, theta, log_scale):
    """Affine warp about the image center with bilinear sampling."""
    h, w = img.shape
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    scale = float(np.exp(log_scale))
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    mat = scale * np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    offset = center - mat @ center - np.array([dy, dx])
    return ndimage.affine_transform(img, mat, offset=offset, order=1,
                                    mode="constant", cval=0.0)


_SEARCH_STEPS = [(2.0, 0.2, 0.10), (1.0, 0.1, 0.05), (0.5, 0.05, 0.02)]


def _align_to(img, target, params):
    """Greedy coordinate search over (dy, dx, theta, log_scale) minimizing the
    squared difference to the target."""
    params = list(params)
    best = float(np.sum((_warp(img, *params) - target) ** 2))
    for t_step, r_step, s_step in _SEARCH_STEPS:
        deltas = [t_step, t_step, r_step, s_step]
        improved = True
        while improved:
            improved = False
            for i in range(4):
                for sign in (-1.0, 1.0):
                    cand = list(params)
                    cand[i] += sign * deltas[i]
                    cost = float(np.sum((_warp(img, *cand) - target) ** 2))
                    if cost < best - 1e-12:
                        best, params, improved = cost, cand, True
    return params


def build_prototype(images, outer_iterations: int = 3):
    """Pixel-wise mean of the stack after iterative affine alignment of every
    image to the evolving mean."""
    imgs = [np.asarray(im, dtype=float) for im in images]
    if len(imgs) < 2:
        raise ValueError("need at least two images to build a prototype")
    shape = imgs[0].shape
    if any(im.shape != shape for im in imgs):
        raise ValueError("prototype images must share dimensions")
    params = [[0.0, 0.0, 0.0, 0.0] for _ in imgs]
    warped = list(imgs)
    for _ in range(outer_iterations):
        target = np.mean(warped, axis=0)
        params = [_align_to(im, target, p) for im, p in zip(imgs, params)]
        warped = [_warp(im, *p) for im, p in zip(imgs, params)]
    return np.clip(np.mean(warped, axis=0), 0.0, 1.0)


# --------------------------------------------------------------------------
# control-point distribution


@dataclass
class ShapeDistribution:
    """Multivariate normal over stacked (x, y) control-point coordinates, plus
    the shared cycle topology of the shapes it was fit on."""

    mu: np.ndarray
    sigma: np.ndarray
    edges: np.ndarray
    width: int | None = None
    height: int | None = None


def fit_mvn(shapes, ridge: float = 1e-8) -> ShapeDistribution:
    """Sample mean and covariance (n-1 denominator, symmetrized, ridged) of
    corresponding control points across migrated shapes."""
    if len(shapes) < 2:
        raise ValueError("need at least two shapes to fit a distribution")
    counts = {len(s.points) for s in shapes}
    if len(counts) != 1:
        raise ValueError(f"inconsistent control-point counts: {sorted(counts)}")
    first = shapes[0]
    for s in shapes[1:]:
        if not np.array_equal(s.edges, first.edges):
            raise ValueError("shapes do not share an edge topology")
    rows = np.array([s.points.ravel() for s in shapes])
    mu = rows.mean(axis=0)
    centered = rows - mu
    sigma = centered.T @ centered / (len(shapes) - 1)
    sigma = 0.5 * (sigma + sigma.T) + ridge * np.eye(sigma.shape[0])
    return ShapeDistribution(mu=mu, sigma=sigma, edges=first.edges.copy(),
                             width=first.width, height=first.height)


def sample_shapes(dist: ShapeDistribution, count: int, seed: int = 0) -> list:
    """Independent draws via the Cholesky factor of the covariance, edges
    copied from the fitted topology; deterministic under the seed."""
    try:
        L = np.linalg.cholesky(dist.sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite even after "
                         "ridging") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, dist.mu.size))
    draws = dist.mu + z @ L.T
    return [ShapeModel(points=row.reshape(-1, 2), edges=dist.edges.copy(),
                       converged=True, width=dist.width, height=dist.height)
            for row in draws]


# --------------------------------------------------------------------------
# plain-text serialization


def shape_to_text(shape: ShapeModel) -> str:
    lines = [f"points {len(shape.points)} width {shape.width} height {shape.height}"]
    for x, y in shape.points:
        lines.append(f"{float(x)!r} {float(y)!r}")
    lines.append(f"edges {len(shape.edges)}")
    for i, j in shape.edges:
        lines.append(f"{int(i)} {int(j)}")
    lines.append(f"converged {int(shape.converged)}")
    return "\n".join(lines) + "\n"


def shape_from_text(text: str) -> ShapeModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "points" or head[2] != "width" or head[4] != "height":
        raise ValueError(f"bad shape header: {lines[0]!r}")
    n = int(head[1])
    width = None if head[3] == "None" else int(head[3])
    height = None if head[5] == "None" else int(head[5])
    points = [tuple(float(v) for v in lines[1 + i].split()) for i in range(n)]
    edge_head = lines[1 + n].split()
    if edge_head[0] != "edges":
        raise ValueError(f"bad edge header: {lines[1 + n]!r}")
    m = int(edge_head[1])
    edges = [tuple(int(v) for v in lines[2 + n + i].split()) for i in range(m)]
    conv = lines[2 + n + m].split()
    if conv[0] != "converged":
        raise ValueError(f"bad trailer: {lines[2 + n + m]!r}")
    return ShapeModel(points=np.array(points), edges=np.array(edges),
                      converged=bool(int(conv[1])), width=width, height=height)
