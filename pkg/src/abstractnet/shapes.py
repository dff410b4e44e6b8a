"""Procedural generation of oriented shape datasets.

Seven families, two classes (horizontal / vertical, decided by bounding-box
aspect ratio with a hard margin).  Rendering is binary black-on-white with
no anti-aliasing, so images are bit-identical across platforms for a given
(family, class, seed, params).
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .tensor import SeededRng

__all__ = [
    "ShapeClass", "ShapeFamily", "RenderParams", "ShapeScene", "ParamError",
    "gen_scene", "rasterize", "generate_dataset", "Dataset",
    "bbox_aspect_class", "export_dataset", "load_dataset",
    "write_pgm", "read_pgm",
]


class ParamError(ValueError):
    """Render parameters are infeasible (e.g. margin leaves no room)."""


class ShapeClass(enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


class ShapeFamily(enum.Enum):
    FILLED_RECT = "filled_rect"
    FILLED_ELLIPSE = "filled_ellipse"
    RECT_OUTLINE = "rect_outline"
    ELLIPSE_OUTLINE = "ellipse_outline"
    RANDOM_OUTLINE = "random_outline"
    RANDOM_FILLED = "random_filled"
    RANDOM_TEXTURED = "random_textured"


OUTLINE_FAMILIES = {ShapeFamily.RECT_OUTLINE, ShapeFamily.ELLIPSE_OUTLINE,
                    ShapeFamily.RANDOM_OUTLINE}
RANDOM_FAMILIES = {ShapeFamily.RANDOM_OUTLINE, ShapeFamily.RANDOM_FILLED,
                   ShapeFamily.RANDOM_TEXTURED}


@dataclass(frozen=True)
class RenderParams:
    image_size: tuple[int, int] = (64, 64)  # (h, w)
    margin: int = 4
    aspect_min: float = 1.6
    outline_thickness: int = 2
    stripe_period: int = 6
    stripe_duty: float = 0.5
    contour_points: int = 16
    radial_noise: float = 0.35
    min_half: float = 7.0  # smallest half-extent of the short axis, px
    foreground: float = 0.0
    background: float = 1.0

    def __post_init__(self):
        h, w = self.image_size
        if 2 * self.margin >= min(h, w):
            raise ParamError("margin leaves no interior")
        if not self.aspect_min > 1.0:
            raise ParamError("aspect_min must be > 1")
        if self.outline_thickness < 1:
            raise ParamError("outline_thickness must be >= 1")
        if not 0.0 < self.stripe_duty < 1.0:
            raise ParamError("stripe_duty must be in (0, 1)")
        if not 0.0 < self.radial_noise < 1.0:
            raise ParamError("radial_noise must be in (0, 1)")
        if self.contour_points < 3:
            raise ParamError("contour_points must be >= 3")

    def max_half(self) -> tuple[float, float]:
        h, w = self.image_size
        return ((h - 1 - 2 * self.margin) / 2.0, (w - 1 - 2 * self.margin) / 2.0)


@dataclass(frozen=True)
class ShapeScene:
    """Resolved geometry: (family, class, seed, params) -> image is pure."""
    family: ShapeFamily
    shape_class: ShapeClass
    seed: int
    center: tuple[float, float]  # (cy, cx)
    half: tuple[float, float]  # (hy, hx)
    contour: np.ndarray  # (K, 2) columns (x, y), closed implicitly
    params: RenderParams = field(default_factory=RenderParams)


def _sample_extents(rng: SeededRng, shape_class: ShapeClass, params: RenderParams):
    max_hy, max_hx = params.max_half()
    lo = params.min_half
    if lo * params.aspect_min >= min(max_hy, max_hx):
        raise ParamError(
            f"margin {params.margin} too large for aspect {params.aspect_min} "
            f"at image size {params.image_size}")
    for _ in range(10000):
        hx = rng.uniform((), lo, max_hx)
        hy = rng.uniform((), lo, max_hy)
        if shape_class is ShapeClass.HORIZONTAL and hx / hy >= params.aspect_min:
            return float(hy), float(hx)
        if shape_class is ShapeClass.VERTICAL and hy / hx >= params.aspect_min:
            return float(hy), float(hx)
    raise ParamError("could not sample extents satisfying the class aspect")


def _sample_center(rng: SeededRng, hy: float, hx: float, params: RenderParams):
    h, w = params.image_size
    m = params.margin
    cy = rng.uniform((), m + hy, h - 1 - m - hy)
    cx = rng.uniform((), m + hx, w - 1 - m - hx)
    return float(cy), float(cx)


def _rect_contour(cy, cx, hy, hx) -> np.ndarray:
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy],
                     [cx + hx, cy + hy], [cx - hx, cy + hy]])


def _ellipse_contour(cy, cx, hy, hx, sides: int = 64) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * math.pi, sides, endpoint=False)
    return np.column_stack([cx + hx * np.cos(t), cy + hy * np.sin(t)])


def _random_contour(rng: SeededRng, cy, cx, hy, hx, params: RenderParams) -> np.ndarray:
    k = params.contour_points
    ang = np.linspace(0.0, 2.0 * math.pi, k, endpoint=False)
    radii = 1.0 + rng.uniform((k,), -params.radial_noise, params.radial_noise)
    xs = np.cos(ang) * radii
    ys = np.sin(ang) * radii
    # rescale each axis so the contour's bbox is exactly [-hx,hx] x [-hy,hy];
    # the class aspect then holds by construction
    xs = (xs - (xs.max() + xs.min()) / 2.0) * (2.0 * hx / (xs.max() - xs.min()))
    ys = (ys - (ys.max() + ys.min()) / 2.0) * (2.0 * hy / (ys.max() - ys.min()))
    return np.column_stack([cx + xs, cy + ys])


def gen_scene(family: ShapeFamily, shape_class: ShapeClass, seed: int,
              params: RenderParams | None = None) -> ShapeScene:
    params = params or RenderParams()
    rng = SeededRng(seed)
    hy, hx = _sample_extents(rng.split(0), shape_class, params)
    cy, cx = _sample_center(rng.split(1), hy, hx, params)
    if family in (ShapeFamily.FILLED_RECT, ShapeFamily.RECT_OUTLINE):
        contour = _rect_contour(cy, cx, hy, hx)
    elif family in (ShapeFamily.FILLED_ELLIPSE, ShapeFamily.ELLIPSE_OUTLINE):
        contour = _ellipse_contour(cy, cx, hy, hx)
    else:
        contour = _random_contour(rng.split(2), cy, cx, hy, hx, params)
    return ShapeScene(family, shape_class, int(seed), (cy, cx), (hy, hx),
                      contour, params)


# -- rasterization ---------------------------------------------------------

_EPS = 1e-9


def _fill_mask(contour: np.ndarray, h: int, w: int) -> np.ndarray:
    """Even-odd scanline fill at pixel centers, boundary pixels included."""
    mask = np.zeros((h, w), dtype=bool)
    k = len(contour)
    x0 = contour[:, 0]
    y0 = contour[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    ymin = max(0, int(math.floor(y0.min())))
    ymax = min(h - 1, int(math.ceil(y0.max())))
    nonflat = y0 != y1
    for r in range(ymin, ymax + 1):
        # half-open span rule avoids double counting at shared vertices
        crosses = nonflat & (((y0 <= r) & (r < y1)) | ((y1 <= r) & (r < y0)))
        if not crosses.any():
            continue
        t = (r - y0[crosses]) / (y1[crosses] - y0[crosses])
        xs = np.sort(x0[crosses] + t * (x1[crosses] - x0[crosses]))
        for a, b in zip(xs[0::2], xs[1::2]):
            ca = max(0, int(math.ceil(a - _EPS)))
            cb = min(w - 1, int(math.floor(b + _EPS)))
            if cb >= ca:
                mask[r, ca:cb + 1] = True
    # boundary inclusion: pixel centers lying exactly on an edge
    for i in range(k):
        ax, ay, bx, by = x0[i], y0[i], x1[i], y1[i]
        rlo = max(0, int(math.floor(min(ay, by))))
        rhi = min(h - 1, int(math.ceil(max(ay, by))))
        clo = max(0, int(math.floor(min(ax, bx))))
        chi = min(w - 1, int(math.ceil(max(ax, bx))))
        if rlo > rhi or clo > chi:
            continue
        rr, cc = np.meshgrid(np.arange(rlo, rhi + 1), np.arange(clo, chi + 1),
                             indexing="ij")
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom < _EPS:
            continue
        t = ((cc - ax) * dx + (rr - ay) * dy) / denom
        t = np.clip(t, 0.0, 1.0)
        dist2 = (ax + t * dx - cc) ** 2 + (ay + t * dy - rr) ** 2
        on = dist2 < 1e-14
        mask[rr[on], cc[on]] = True
    return mask


def _stroke_mask(contour: np.ndarray, thickness: int, h: int, w: int) -> np.ndarray:
    """Stamp a half-open square brush of side `thickness` along each edge."""
    mask = np.zeros((h, w), dtype=bool)
    t = thickness
    pts = []
    k = len(contour)
    for i in range(k):
        a = contour[i]
        b = contour[(i + 1) % k]
        length = float(np.hypot(*(b - a)))
        n = max(2, int(math.ceil(length / 0.25)) + 1)
        s = np.linspace(0.0, 1.0, n)
        pts.append(a[None, :] + s[:, None] * (b - a)[None, :])
    pts = np.concatenate(pts)
    # brush covers [p - t/2, p + t/2): always exactly t pixel centers per axis
    c0 = np.ceil(pts[:, 0] - t / 2.0 - _EPS).astype(int)
    r0 = np.ceil(pts[:, 1] - t / 2.0 - _EPS).astype(int)
    for dr in range(t):
        for dc in range(t):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            mask[rr[ok], cc[ok]] = True
    return mask


def rasterize(scene: ShapeScene) -> np.ndarray:
    """Render a scene to an (h, w) float64 image in [0, 1]."""
    p = scene.params
    h, w = p.image_size
    if scene.family in OUTLINE_FAMILIES:
        mask = _stroke_mask(scene.contour, p.outline_thickness, h, w)
    else:
        mask = _fill_mask(scene.contour, h, w)
        if scene.family is ShapeFamily.RANDOM_TEXTURED:
            duty = int(round(p.stripe_duty * p.stripe_period))
            if scene.shape_class is ShapeClass.HORIZONTAL:
                stripes = (np.arange(w) % p.stripe_period) < duty
                mask &= stripes[None, :]
            else:
                stripes = (np.arange(h) % p.stripe_period) < duty
                mask &= stripes[:, None]
    img = np.full((h, w), p.background, dtype=np.float64)
    img[mask] = p.foreground
    return img


def bbox_aspect_class(img: np.ndarray, params: RenderParams | None = None) -> ShapeClass:
    """Reference classifier: compare the foreground bounding box sides."""
    params = params or RenderParams()
    thresh = (params.foreground + params.background) / 2.0
    fg = img < thresh if params.foreground < params.background else img > thresh
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    if len(rows) == 0:
        raise ValueError("blank image has no orientation")
    height = rows[-1] - rows[0] + 1
    width = cols[-1] - cols[0] + 1
    return ShapeClass.HORIZONTAL if width > height else ShapeClass.VERTICAL


# -- datasets --------------------------------------------------------------

CLASS_ORDER = (ShapeClass.HORIZONTAL, ShapeClass.VERTICAL)  # labels 0, 1


@dataclass
class Dataset:
    images: np.ndarray  # (n, 1, h, w) float64
    labels: np.ndarray  # (n,) int64
    scenes: list[ShapeScene]
    params: RenderParams


def image_seed(base_seed: int, class_index: int, image_index: int) -> int:
    """Per-image seed; any image is regenerable from (base, class, index)."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(class_index, image_index))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(families, n_per_class: int, base_seed: int,
                     params: RenderParams | None = None) -> Dataset:
    """n_per_class images per class; a family mix alternates evenly."""
    params = params or RenderParams()
    if isinstance(families, ShapeFamily):
        families = [families]
    families = list(families)
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    h, w = params.image_size
    images = np.empty((2 * n_per_class, 1, h, w), dtype=np.float64)
    labels = np.empty(2 * n_per_class, dtype=np.int64)
    scenes = []
    pos = 0
    for ci, cls in enumerate(CLASS_ORDER):
        for i in range(n_per_class):
            fam = families[i % len(families)]
            scene = gen_scene(fam, cls, image_seed(base_seed, ci, i), params)
            images[pos, 0] = rasterize(scene)
            labels[pos] = ci
            scenes.append(scene)
            pos += 1
    return Dataset(images, labels, scenes, params)


# -- PGM export ------------------------------------------------------------

def write_pgm(img: np.ndarray, path) -> None:
    h, w = img.shape
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    fields = []
    i = 0
    while len(fields) < 4:
        while i < len(blob) and blob[i:i + 1].isspace():
            i += 1
        if blob[i:i + 1] == b"#":
            while i < len(blob) and blob[i:i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(blob) and not blob[j:j + 1].isspace():
            j += 1
        fields.append(blob[i:j])
        i = j
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    data = np.frombuffer(blob[i + 1:i + 1 + h * w], dtype=np.uint8)
    return data.reshape(h, w).astype(np.float64) / float(maxval)


def export_dataset(ds: Dataset, root) -> None:
    """<root>/<class>/<index>.pgm plus manifest.csv (path,label,family,seed)."""
    os.makedirs(root, exist_ok=True)
    rows = []
    counters = {0: 0, 1: 0}
    for img, label, scene in zip(ds.images, ds.labels, ds.scenes):
        cls = CLASS_ORDER[label].value
        os.makedirs(os.path.join(root, cls), exist_ok=True)
        rel = os.path.join(cls, f"{counters[int(label)]:05d}.pgm")
        counters[int(label)] += 1
        write_pgm(img[0], os.path.join(root, rel))
        rows.append((rel, int(label), scene.family.value, scene.seed))
    with open(os.path.join(root, "manifest.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "label", "family", "seed"])
        writer.writerows(rows)


def load_dataset(root) -> tuple[np.ndarray, np.ndarray]:
    """Read back an exported dataset; returns (images (n,1,h,w), labels)."""
    with open(os.path.join(root, "manifest.csv"), newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{root}: empty manifest")
    imgs = []
    labels = []
    for row in rows:
        imgs.append(read_pgm(os.path.join(root, row["path"]))[None, :, :])
        labels.append(int(row["label"]))
    return np.stack(imgs), np.asarray(labels, dtype=np.int64)
