"""Projection of the mesh and its fill-time field onto a 384x768 raster.

The projection plane is the least-squares plane of the vertex cloud (centroid
plus the two leading principal directions). Vertices are splatted onto pixels,
the silhouette mask is the union of rasterized triangles and vertex pixels,
and mask pixels without a splatted value take the value of the nearest valued
pixel (breadth-first fill). The vertex-to-pixel correspondence is kept so maps
predicted on the raster can be pulled back onto vertices.

Conventions (fixed so identical meshes always produce identical rasters):

* image is 384 rows by 768 columns, basis_u runs along columns;
* aspect-preserving scale with a 4 pixel margin, content centered;
* a vertex lands on pixel ``floor(continuous coordinate)``;
* plane normal and basis_u have their largest-magnitude component positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

RASTER_HEIGHT = 384
RASTER_WIDTH = 768
RASTER_MARGIN = 4
COARSE_HEIGHT = 12
COARSE_WIDTH = 24


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectionPlane:
    origin: np.ndarray  # centroid, mm
    basis_u: np.ndarray  # in-plane, along image columns
    basis_v: np.ndarray  # in-plane, along image rows
    normal: np.ndarray

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "basis_u": self.basis_u.tolist(),
            "basis_v": self.basis_v.tolist(),
            "normal": self.normal.tolist(),
        }


@dataclass
class RasterMap:
    values: np.ndarray  # (H, W) mean field value per pixel, 0 outside mask
    mask: np.ndarray  # (H, W) uint8 silhouette
    scale: float  # mm per pixel
    offset: tuple[float, float]  # (col, row) pixel offset: col = floor(u/scale + offset[0])

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def channels(self) -> np.ndarray:
        """(H, W, 2) array: field channel and mask channel."""
        return np.stack([self.values, self.mask.astype(self.values.dtype)], axis=2)


@dataclass
class Correspondence:
    rows: np.ndarray  # per-vertex pixel row
    cols: np.ndarray  # per-vertex pixel column

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        if self.rows.shape != self.cols.shape:
            raise ProjectionError("rows and cols must align")


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))  # ties resolve to the earlier axis
    return -vec if vec[i] < 0 else vec


def fit_plane(points: np.ndarray) -> ProjectionPlane:
    """Least-squares plane through a point cloud.

    The normal is the smallest-eigenvalue direction of the coordinate
    covariance; basis_u is the largest. Degenerate (collinear or coincident)
    clouds are rejected.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise ProjectionError("need at least 3 points")
    centroid = pts.mean(axis=0)
    q = pts - centroid
    cov = q.T @ q / len(pts)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[2] <= 0 or evals[1] <= 1e-12 * evals[2]:
        raise ProjectionError("degenerate point cloud: points are collinear or coincident")
    normal = _fix_sign(evecs[:, 0])
    basis_u = _fix_sign(evecs[:, 2])
    basis_v = np.cross(normal, basis_u)
    return ProjectionPlane(centroid, basis_u, basis_v, normal)


def plane_coordinates(plane: ProjectionPlane, points: np.ndarray):
    q = np.asarray(points, dtype=np.float64) - plane.origin
    return q @ plane.basis_u, q @ plane.basis_v


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _rasterize_triangles(mask, xs, ys, faces):
    h, w = mask.shape
    for f in faces:
        tx, ty = xs[f], ys[f]
        area = (tx[1] - tx[0]) * (ty[2] - ty[0]) - (tx[2] - tx[0]) * (ty[1] - ty[0])
        if area == 0.0:
            continue
        if area < 0.0:
            tx = tx[[0, 2, 1]]
            ty = ty[[0, 2, 1]]
        c0 = max(int(np.floor(tx.min() - 0.5)), 0)
        c1 = min(int(np.ceil(tx.max() - 0.5)), w - 1)
        r0 = max(int(np.floor(ty.min() - 0.5)), 0)
        r1 = min(int(np.ceil(ty.max() - 0.5)), h - 1)
        if c1 < c0 or r1 < r0:
            continue
        px = np.arange(c0, c1 + 1) + 0.5
        py = (np.arange(r0, r1 + 1) + 0.5)[:, None]
        cover = None
        for a, b in ((1, 2), (2, 0), (0, 1)):
            wab = _edge(tx[a], ty[a], tx[b], ty[b], px, py)
            # top-left rule: a pixel center exactly on an edge belongs to the
            # triangle only for top edges (horizontal, running +x) and left
            # edges (running -y), given the positive-area winding above
            top_left = (ty[b] < ty[a]) or (ty[b] == ty[a] and tx[b] > tx[a])
            edge_ok = (wab > 0) | ((wab == 0) & top_left)
            cover = edge_ok if cover is None else (cover & edge_ok)
        mask[r0:r1 + 1, c0:c1 + 1] |= cover
    return mask


def _bfs_fill(values, filled, mask):
    """Assign every unfilled mask pixel the value of the nearest filled pixel.

    Multi-source BFS over the 4-neighborhood; shift directions are scanned in
    a fixed order so equal-distance ties resolve deterministically.
    """
    h, w = values.shape
    known = filled.copy()
    todo = mask & ~known
    while todo.any():
        progressed = False
        new_known = np.zeros_like(known)
        new_vals = np.zeros_like(values)
        for shift in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            src_val = np.zeros_like(values)
            src_known = np.zeros_like(known)
            dr, dc = shift
            rs = slice(max(dr, 0), h + min(dr, 0))
            rd = slice(max(-dr, 0), h + min(-dr, 0))
            cs = slice(max(dc, 0), w + min(dc, 0))
            cd = slice(max(-dc, 0), w + min(-dc, 0))
            src_val[rd, cd] = values[rs, cs]
            src_known[rd, cd] = known[rs, cs]
            take = todo & src_known & ~new_known
            new_vals[take] = src_val[take]
            new_known |= take
        if new_known.any():
            progressed = True
            values[new_known] = new_vals[new_known]
            known |= new_known
            todo &= ~new_known
        if not progressed:
            # mask component with no valued pixel 4-connected to it: fall back
            # to nearest valued pixel by squared pixel distance
            fr, fc = np.nonzero(known)
            tr, tc = np.nonzero(todo)
            for r, c in zip(tr, tc):
                d2 = (fr - r) ** 2 + (fc - c) ** 2
                j = int(np.argmin(d2))
                values[r, c] = values[fr[j], fc[j]]
            break
    return values


def project(mesh: Mesh, field: np.ndarray, plane: ProjectionPlane):
    """Rasterize the mesh and a per-vertex field -> (RasterMap, Correspondence)."""
    field = np.asarray(field, dtype=np.float64)
    if field.shape != (mesh.n_vertices,):
        raise ProjectionError("field must have one value per vertex")
    if mesh.n_vertices == 0:
        raise ProjectionError("empty mesh")
    h, w, m = RASTER_HEIGHT, RASTER_WIDTH, RASTER_MARGIN
    pu, pv = plane_coordinates(plane, mesh.vertices)
    umin, vmin = pu.min(), pv.min()
    extent_u = pu.max() - umin
    extent_v = pv.max() - vmin
    candidates = []
    if extent_u > 0:
        candidates.append((w - 2 * m) / extent_u)
    if extent_v > 0:
        candidates.append((h - 2 * m) / extent_v)
    if not candidates:
        raise ProjectionError("mesh projects to a single point")
    s = min(candidates)  # px per mm
    off_col = (w - extent_u * s) / 2.0 - umin * s
    off_row = (h - extent_v * s) / 2.0 - vmin * s
    col_f = pu * s + off_col
    row_f = pv * s + off_row
    cols = np.floor(col_f).astype(np.int64)
    rows = np.floor(row_f).astype(np.int64)
    mask = np.zeros((h, w), dtype=bool)
    _rasterize_triangles(mask, col_f, row_f, mesh.faces)
    mask[rows, cols] = True
    sums = np.zeros((h, w))
    counts = np.zeros((h, w), dtype=np.int64)
    np.add.at(sums, (rows, cols), field)
    np.add.at(counts, (rows, cols), 1)
    values = np.zeros((h, w))
    filled = counts > 0
    values[filled] = sums[filled] / counts[filled]
    values = _bfs_fill(values, filled, mask)
    raster = RasterMap(values, mask.astype(np.uint8), scale=1.0 / s,
                       offset=(float(off_col), float(off_row)))
    return raster, Correspondence(rows, cols)


def upscale_bilinear(coarse: np.ndarray) -> np.ndarray:
    """Corner-aligned bilinear upscale of a 12x24 map to 384x768."""
    a = np.asarray(coarse)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.shape != (COARSE_HEIGHT, COARSE_WIDTH):
        raise ProjectionError(f"expected {COARSE_HEIGHT}x{COARSE_WIDTH} input, got {a.shape}")
    hi, wi = a.shape
    ho, wo = RASTER_HEIGHT, RASTER_WIDTH
    # multiply before dividing: endpoints map to source corners exactly
    sy = np.arange(ho) * (hi - 1.0) / (ho - 1.0)
    sx = np.arange(wo) * (wi - 1.0) / (wo - 1.0)
    y0 = np.minimum(sy.astype(np.int64), hi - 2)
    x0 = np.minimum(sx.astype(np.int64), wi - 2)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    tl = a[y0[:, None], x0[None, :]]
    tr = a[y0[:, None], x0[None, :] + 1]
    bl = a[y0[:, None] + 1, x0[None, :]]
    br = a[y0[:, None] + 1, x0[None, :] + 1]
    # fused form: constant inputs stay exactly constant
    top = tl + (tr - tl) * fx
    bot = bl + (br - bl) * fx
    return top + (bot - top) * fy


def reproject(image: np.ndarray, corr: Correspondence) -> np.ndarray:
    """Per-vertex values pulled from the image at each vertex's pixel."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ProjectionError("image must be 2d")
    if len(corr.rows) and (corr.rows.max() >= img.shape[0] or corr.cols.max() >= img.shape[1]
                           or corr.rows.min() < 0 or corr.cols.min() < 0):
        raise ProjectionError("correspondence outside image bounds")
    return img[corr.rows, corr.cols]


def flip2d(a: np.ndarray, flip_h: bool, flip_v: bool) -> np.ndarray:
    """Flip the first two axes of an array: flip_h mirrors columns, flip_v rows."""
    out = a
    if flip_h:
        out = out[:, ::-1]
    if flip_v:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


MIRROR_FLIPS = ((False, False), (True, False), (False, True), (True, True))


def mirror_variants(raster: RasterMap) -> list[RasterMap]:
    """The four mirror variants: identity, flip-h, flip-v, flip-both."""
    out = []
    for fh, fv in MIRROR_FLIPS:
        out.append(RasterMap(flip2d(raster.values, fh, fv), flip2d(raster.mask, fh, fv),
                             raster.scale, raster.offset))
    return out


def export_raster(raster: RasterMap, plane: ProjectionPlane, basepath: str) -> None:
    """Debug export: one 16-bit PGM per channel plus a JSON sidecar."""
    vmin = float(raster.values.min())
    vmax = float(raster.values.max())
    span = (vmax - vmin) or 1.0
    scaled = np.round((raster.values - vmin) / span * 65535).astype(np.uint16)
    _write_pgm(f"{basepath}_fill.pgm", scaled, 65535)
    _write_pgm(f"{basepath}_mask.pgm", raster.mask.astype(np.uint16), 1)
    sidecar = {
        "scale_mm_per_px": raster.scale,
        "offset_col_row": list(raster.offset),
        "value_range": [vmin, vmax],
        "plane": plane.to_dict(),
    }
    with open(f"{basepath}.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def _write_pgm(path: str, data: np.ndarray, maxval: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"P2\n{data.shape[1]} {data.shape[0]}\n{maxval}\n")
        for row in data:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
