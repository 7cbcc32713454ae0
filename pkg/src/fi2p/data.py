"""Synthetic dataset pipeline: parametric meshes, surface-sampled clouds,
fixed-camera renders, and the persisted train/val/test split.

File formats are dependency-free on purpose: binary PPM (P6) images, text
XYZ clouds headed by "P <count>", and a JSON manifest. Externally produced
pairs in the same formats can be dropped in alongside generated ones.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, DataFormatError, DatasetError

SHAPE_KINDS = ("box", "cylinder", "cone", "ellipsoid", "torus", "twobox")

SPLIT_FRACTIONS = {"train": 0.85, "val": 0.05}  # remainder is test

# fixed orthographic camera: looks at the origin along -(1,1,1), z up
_CAM_DIR = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
_CAM_UP = np.array([0.0, 0.0, 1.0])
_FRAME_HALF_EXTENT = 1.9
_LIGHT_DIR = np.array([0.3, 0.5, 0.85])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)
_AMBIENT = 0.25


@dataclass
class Mesh:
    vertices: np.ndarray  # (V,3) float64
    faces: np.ndarray     # (F,3) int64 vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise DatasetError("face index out of range")

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)


@dataclass
class Sample:
    id: str
    image: np.ndarray          # (3,S,S) float32 in [0,1]
    cloud: np.ndarray          # (P,3) float64
    category: str
    cloud_in_bounds: bool = True


@dataclass
class SampleRef:
    id: str
    category: str
    image_path: str
    cloud_path: str
    split: str


@dataclass
class DatasetManifest:
    seed: int
    categories: list
    samples: list                      # list[SampleRef]
    image_size: int = 0
    point_count: int = 0
    warnings: list = field(default_factory=list)
    root: Path = field(default=Path("."), compare=False)

    def split_refs(self, split: str) -> list:
        if split not in ("train", "val", "test"):
            raise ConfigError(f"split must be train/val/test, got {split!r}")
        return [s for s in self.samples if s.split == split]

    def to_dict(self) -> dict:
        counts = {"train": 0, "val": 0, "test": 0}
        for s in self.samples:
            counts[s.split] = counts.get(s.split, 0) + 1
        return {
            "seed": self.seed,
            "categories": list(self.categories),
            "image_size": self.image_size,
            "point_count": self.point_count,
            "counts": counts,
            "warnings": list(self.warnings),
            "samples": [
                {"id": s.id, "category": s.category, "image_path": s.image_path,
                 "cloud_path": s.cloud_path, "split": s.split}
                for s in self.samples
            ],
        }

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as f:
                d = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid manifest JSON: {exc}") from exc
        try:
            samples = [SampleRef(**s) for s in d["samples"]]
            return cls(seed=d["seed"], categories=list(d["categories"]),
                       samples=samples, image_size=d.get("image_size", 0),
                       point_count=d.get("point_count", 0),
                       warnings=list(d.get("warnings", [])), root=path.parent)
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: manifest missing field: {exc}") from exc


# ---------------------------------------------------------------------------
# parametric shape generators

def _box_mesh(center, half) -> Mesh:
    cx, cy, cz = center
    hx, hy, hz = half
    v = np.array([
        [cx - hx, cy - hy, cz - hz], [cx + hx, cy - hy, cz - hz],
        [cx + hx, cy + hy, cz - hz], [cx - hx, cy + hy, cz - hz],
        [cx - hx, cy - hy, cz + hz], [cx + hx, cy - hy, cz + hz],
        [cx + hx, cy + hy, cz + hz], [cx - hx, cy + hy, cz + hz],
    ])
    f = np.array([
        [0, 2, 1], [0, 3, 2],  # bottom
        [4, 5, 6], [4, 6, 7],  # top
        [0, 1, 5], [0, 5, 4],  # front
        [2, 3, 7], [2, 7, 6],  # back
        [1, 2, 6], [1, 6, 5],  # right
        [3, 0, 4], [3, 4, 7],  # left
    ])
    return Mesh(v, f)


def _lathe_mesh(ring_r, ring_z, n_seg, cap_bottom=None, cap_top=None) -> Mesh:
    """Surface of revolution around z from a polyline of (radius, z) rings."""
    theta = 2 * np.pi * np.arange(n_seg) / n_seg
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    verts = []
    ring_start = []
    for r, z in zip(ring_r, ring_z):
        ring_start.append(len(verts))
        for k in range(n_seg):
            verts.append([r * cos_t[k], r * sin_t[k], z])
    faces = []
    for i in range(len(ring_r) - 1):
        a, b = ring_start[i], ring_start[i + 1]
        for k in range(n_seg):
            k2 = (k + 1) % n_seg
            faces.append([a + k, a + k2, b + k2])
            faces.append([a + k, b + k2, b + k])
    for cap, ring, flip in ((cap_bottom, 0, True), (cap_top, len(ring_r) - 1, False)):
        if cap is None:
            continue
        ci = len(verts)
        verts.append([0.0, 0.0, cap])
        a = ring_start[ring]
        for k in range(n_seg):
            k2 = (k + 1) % n_seg
            tri = [ci, a + k2, a + k] if flip else [ci, a + k, a + k2]
            faces.append(tri)
    return Mesh(np.array(verts), np.array(faces))


def gen_shape(kind: str, params=None, rng=None) -> Mesh:
    """Watertight triangle mesh of one parametric shape family.

    Dimensions are drawn from per-kind ranges unless pinned via params;
    deterministic given the rng state.
    """
    if kind not in SHAPE_KINDS:
        raise ConfigError(f"unknown shape kind {kind!r}; valid: {SHAPE_KINDS}")
    params = dict(params or {})
    rng = rng or np.random.default_rng(0)

    def draw(name, lo, hi):
        if name in params:
            return float(params[name])
        return float(rng.uniform(lo, hi))

    if kind == "box":
        hx = draw("width", 0.5, 1.6) / 2
        hy = draw("depth", 0.5, 1.6) / 2
        hz = draw("height", 0.5, 1.6) / 2
        return _box_mesh((0, 0, 0), (hx, hy, hz))
    if kind == "twobox":
        hx = draw("width", 0.7, 1.4) / 2
        hy = draw("depth", 0.7, 1.4) / 2
        hz = draw("height", 0.4, 0.8) / 2
        top_s = draw("top_scale", 0.35, 0.6)
        base = _box_mesh((0, 0, -hz), (hx, hy, hz))
        top = _box_mesh((0, 0, hz * top_s), (hx * top_s, hy * top_s, hz * top_s))
        return Mesh(np.vstack([base.vertices, top.vertices]),
                    np.vstack([base.faces, top.faces + len(base.vertices)]))
    if kind == "cylinder":
        r = draw("radius", 0.3, 0.8)
        h = draw("height", 0.6, 1.8)
        return _lathe_mesh([r, r], [-h / 2, h / 2], 32,
                           cap_bottom=-h / 2, cap_top=h / 2)
    if kind == "cone":
        r = draw("radius", 0.4, 0.9)
        h = draw("height", 0.8, 1.8)
        # tiny top ring instead of an apex vertex keeps the lathe uniform
        return _lathe_mesh([r, 1e-9], [-h / 2, h / 2], 32, cap_bottom=-h / 2)
    if kind == "ellipsoid":
        a = draw("rx", 0.4, 1.0)
        b = draw("ry", 0.4, 1.0)
        c = draw("rz", 0.4, 1.0)
        n_u, n_v = 32, 16
        phi = np.pi * (np.arange(n_v + 1) / n_v - 0.5)  # -pi/2 .. pi/2
        ring_r = np.cos(phi)
        ring_z = np.sin(phi)
        mesh = _lathe_mesh(ring_r, ring_z, n_u)
        v = mesh.vertices * np.array([a, b, c])
        return Mesh(v, mesh.faces)
    # torus
    big_r = draw("ring_radius", 0.6, 1.0)
    small_r = draw("tube_radius", 0.15, 0.35)
    n_u = int(params.get("segments_u", 32))
    n_v = int(params.get("segments_v", 16))
    u = 2 * np.pi * np.arange(n_u) / n_u
    v = 2 * np.pi * np.arange(n_v) / n_v
    verts = []
    for i in range(n_u):
        for j in range(n_v):
            x = (big_r + small_r * np.cos(v[j])) * np.cos(u[i])
            y = (big_r + small_r * np.cos(v[j])) * np.sin(u[i])
            z = small_r * np.sin(v[j])
            verts.append([x, y, z])
    faces = []
    for i in range(n_u):
        i2 = (i + 1) % n_u
        for j in range(n_v):
            j2 = (j + 1) % n_v
            a0 = i * n_v + j
            a1 = i * n_v + j2
            b0 = i2 * n_v + j
            b1 = i2 * n_v + j2
            faces.append([a0, b0, b1])
            faces.append([a0, b1, a1])
    return Mesh(np.array(verts), np.array(faces))


# ---------------------------------------------------------------------------
# sampling and normalization

def sample_surface(mesh: Mesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points area-weighted over faces, uniform within each face."""
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise DatasetError("mesh has zero total surface area")
    cum = np.cumsum(areas)
    pick = np.searchsorted(cum, rng.random(n) * total, side="right")
    pick = np.minimum(pick, len(areas) - 1)
    tri = mesh.vertices[mesh.faces[pick]]  # (n,3,3)
    # square-root warp makes barycentric sampling uniform over the triangle
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    pts = (1 - r1) * tri[:, 0] + r1 * (1 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
    return pts


def cloud_frame(cloud: np.ndarray):
    """(centroid, scale) that normalize_cloud would apply."""
    centroid = cloud.mean(axis=0)
    centered = cloud - centroid
    scale = np.abs(centered).max()
    if scale < 1e-12:
        scale = 1.0
    return centroid, scale


def normalize_cloud(cloud: np.ndarray) -> np.ndarray:
    """Center the centroid at the origin and scale so max |coordinate| is 1."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or cloud.shape[0] < 1:
        raise DatasetError(f"cloud must be (P,3) nonempty, got {cloud.shape}")
    centroid, scale = cloud_frame(cloud)
    return (cloud - centroid) / scale


# ---------------------------------------------------------------------------
# rendering

def _camera_basis():
    view = -_CAM_DIR
    right = np.cross(view, _CAM_UP)
    right /= np.linalg.norm(right)
    up = np.cross(right, view)
    return right, up, view


def render(mesh: Mesh, image_size: int, color=(0.55, 0.55, 0.6)) -> np.ndarray:
    """Rasterize a mesh with the fixed orthographic camera.

    Flat Lambertian shading from a fixed light, depth-buffered, white
    background. Deterministic: the same mesh yields the same pixels.
    """
    if image_size < 1:
        raise ConfigError(f"image_size must be >= 1, got {image_size}")
    img = np.ones((3, image_size, image_size), dtype=np.float64)
    zbuf = np.full((image_size, image_size), np.inf)
    if len(mesh.faces) == 0:
        return img.astype(np.float32)
    right, up, view = _camera_basis()
    v = mesh.vertices
    f = mesh.faces
    tri = v[f]  # (F,3,3)
    half = _FRAME_HALF_EXTENT
    px = (tri @ right + half) / (2 * half) * image_size
    py = (half - tri @ up) / (2 * half) * image_size  # +up is up on screen
    xy = np.stack([px, py], axis=-1)
    depth = tri @ view  # larger = farther from camera
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm_len = np.linalg.norm(normal, axis=1, keepdims=True)
    norm_len[norm_len == 0] = 1.0
    normal = normal / norm_len
    # two-sided shading so interior-facing windings stay lit
    lambert = _AMBIENT + (1 - _AMBIENT) * np.abs(normal @ _LIGHT_DIR)
    rgb = np.clip(lambert[:, None] * np.asarray(color)[None, :], 0.0, 1.0)
    kernels.raster_triangles(
        np.ascontiguousarray(xy), np.ascontiguousarray(depth),
        np.ascontiguousarray(rgb), img, zbuf,
    )
    return img.astype(np.float32)


def quantize_image(img: np.ndarray) -> np.ndarray:
    """Float image -> the exact values an 8-bit PPM round-trip produces."""
    u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return (u8.astype(np.float32) / np.float32(255.0))


# ---------------------------------------------------------------------------
# sample and manifest I/O

def save_image_ppm(img: np.ndarray, path) -> None:
    """Write a (3,S,S) float image in [0,1] as binary PPM (P6, 8-bit)."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise DataFormatError(f"image must be (3,H,W), got {img.shape}")
    u8 = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255)
    u8 = u8.astype(np.uint8).transpose(1, 2, 0)  # HWC for PPM
    h, w = u8.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def load_image_ppm(path) -> np.ndarray:
    """Read a binary PPM back to (3,S,S) float32 in [0,1]."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        header, rest = data.split(b"\n", 1)
        if header.strip() != b"P6":
            raise DataFormatError(f"{path}: line 1: expected 'P6', got {header!r}")
        dims, rest = rest.split(b"\n", 1)
        w, h = (int(t) for t in dims.split())
        maxval, rest = rest.split(b"\n", 1)
        if int(maxval) != 255:
            raise DataFormatError(f"{path}: line 3: maxval must be 255")
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"{path}: malformed PPM header: {exc}") from exc
    expected = w * h * 3
    if len(rest) < expected:
        raise DataFormatError(
            f"{path}: pixel data truncated ({len(rest)} of {expected} bytes)"
        )
    u8 = np.frombuffer(rest[:expected], dtype=np.uint8).reshape(h, w, 3)
    return (u8.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def save_cloud_xyz(cloud: np.ndarray, path) -> None:
    """Write a point cloud as text: 'P <count>' then one 'x y z' per line."""
    cloud = np.asarray(cloud, dtype=np.float64)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"P {cloud.shape[0]}\n")
        for x, y, z in cloud:
            f.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def load_cloud_xyz(path) -> np.ndarray:
    with open(path, encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: line 1: empty cloud file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "P":
        raise DataFormatError(
            f"{path}: line 1: expected 'P <count>', got {lines[0]!r}"
        )
    try:
        count = int(head[1])
    except ValueError as exc:
        raise DataFormatError(f"{path}: line 1: bad point count {head[1]!r}") from exc
    if count < 0 or len(lines) < count + 1:
        raise DataFormatError(
            f"{path}: line 1: header promises {count} points, file has "
            f"{len(lines) - 1} data lines"
        )
    pts = np.empty((count, 3), dtype=np.float64)
    for i in range(count):
        parts = lines[i + 1].split()
        if len(parts) != 3:
            raise DataFormatError(
                f"{path}: line {i + 2}: expected 3 coordinates, got "
                f"{len(parts)}"
            )
        try:
            pts[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {i + 2}: {exc}") from exc
    return pts


def save_sample(sample: Sample, out_dir) -> SampleRef:
    out_dir = Path(out_dir)
    image_path = f"{sample.id}.ppm"
    cloud_path = f"{sample.id}.xyz"
    save_image_ppm(sample.image, out_dir / image_path)
    save_cloud_xyz(sample.cloud, out_dir / cloud_path)
    return SampleRef(id=sample.id, category=sample.category,
                     image_path=image_path, cloud_path=cloud_path, split="")


def load_sample(ref: SampleRef, root) -> Sample:
    root = Path(root)
    image = load_image_ppm(root / ref.image_path)
    cloud = load_cloud_xyz(root / ref.cloud_path)
    in_bounds = bool(np.abs(cloud).max() <= 1.0) if cloud.size else True
    return Sample(id=ref.id, image=image, cloud=cloud, category=ref.category,
                  cloud_in_bounds=in_bounds)


def _split_counts(n: int):
    n_train = int(np.floor(n * SPLIT_FRACTIONS["train"]))
    n_val = int(np.floor(n * SPLIT_FRACTIONS["val"]))
    return n_train, n_val, n - n_train - n_val


def _worker_count() -> int:
    cap = os.environ.get("FI2P_THREADS")
    if cap:
        return max(1, int(cap))
    return os.cpu_count() or 1


def generate_sample(category: str, index: int, seed: int, image_size: int,
                    point_count: int) -> Sample:
    """One (image, cloud) pair; rng stream derived from (seed, category, index)."""
    cat_code = SHAPE_KINDS.index(category)
    rng = np.random.default_rng((seed, cat_code, index))
    mesh = gen_shape(category, rng=rng)
    color = rng.uniform(0.15, 0.9, size=3)
    raw = sample_surface(mesh, point_count, rng)
    centroid, scl = cloud_frame(raw)
    cloud = (raw - centroid) / scl
    framed = Mesh((mesh.vertices - centroid) / scl, mesh.faces)
    img = quantize_image(render(framed, image_size, color=tuple(color)))
    return Sample(id=f"{category}_{index:04d}", image=img, cloud=cloud,
                  category=category)


def make_dataset(categories, per_category_count: int, image_size: int,
                 point_count: int, seed: int, out_dir) -> DatasetManifest:
    """Generate, write, and split a synthetic dataset.

    The split per category follows the 85/5/10 rule with floor rounding
    (leftovers land in test) over a seeded shuffle; the manifest records the
    seed so the whole dataset regenerates bit-exactly.
    """
    categories = list(categories)
    for c in categories:
        if c not in SHAPE_KINDS:
            raise ConfigError(f"unknown category {c!r}; valid: {SHAPE_KINDS}")
    if per_category_count < 1:
        raise ConfigError("per_category_count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    warnings = []
    if per_category_count < 20:
        warnings.append(
            f"per_category_count={per_category_count} cannot honor the "
            "85/5/10 split granularity"
        )

    def job(args):
        cat, i = args
        sample = generate_sample(cat, i, seed, image_size, point_count)
        return save_sample(sample, out_dir)

    jobs = [(cat, i) for cat in categories for i in range(per_category_count)]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        refs = list(pool.map(job, jobs))

    by_cat = {cat: [r for r in refs if r.category == cat] for cat in categories}
    samples = []
    for ci, cat in enumerate(categories):
        cat_refs = by_cat[cat]
        shuffle_rng = np.random.default_rng((seed, 7919, ci))
        order = shuffle_rng.permutation(len(cat_refs))
        n_train, n_val, _ = _split_counts(len(cat_refs))
        for pos, ref_i in enumerate(order):
            ref = cat_refs[ref_i]
            if pos < n_train:
                ref.split = "train"
            elif pos < n_train + n_val:
                ref.split = "val"
            else:
                ref.split = "test"
        samples.extend(cat_refs)

    manifest = DatasetManifest(seed=seed, categories=categories, samples=samples,
                               image_size=image_size, point_count=point_count,
                               warnings=warnings, root=out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest
