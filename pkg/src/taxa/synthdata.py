"""Procedural image dataset with traits inherited along a synthetic taxonomy.

Each tree node owns one visual trait and every descendant inherits it:
Class picks the body silhouette, Order the appendage count and placement,
Family the surface pattern, Genus the base hue, Species a small bright
marking (position + size). Two species that differ only at the Species
level therefore render identically except for the marking, which is what
makes level-specific learning measurable.

Images are rendered in [0,1]^3 over a dark background with a per-image
pose (rotation, translation, scale). Files are binary PPM (P6, maxval
255); the manifest is JSON Lines with fields image, kingdom..species,
pose_seed, split.
"""

from __future__ import annotations

import colorsys
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as R
from .errors import IOFailure, MissingLevelError, UnknownPathError
from .taxonomy import LEVEL_NAMES, TaxonomyTree, TaxonPath

SILHOUETTES = ("disc", "ellipse", "triangle")
APPENDAGE_COUNTS = (0, 2, 4)
PATTERNS = ("stripes", "spots", "plain")
N_HUE_BINS = 12
_LEVEL_TAGS = "KPCOFGS"

DEFAULT_BRANCHING = (1, 1, 2, 2, 2, 2, 3)
DEFAULT_RARE = (("S0", 2), ("S15", 2), ("S30", 2))  # one leaf in each of three genera


@dataclass(frozen=True)
class TaxaSpec:
    branching: tuple = DEFAULT_BRANCHING
    images_per_species: int = 30
    rare: tuple = DEFAULT_RARE  # ((species name, sample count), ...)
    size: int = 16
    channels: int = 3
    seed: int = 0

    def __post_init__(self):
        if len(self.branching) != 7:
            raise ValueError("branching must list 7 per-level child counts")
        if any(b < 1 for b in self.branching):
            raise ValueError("branching entries must be >= 1")
        if any(c < 1 for _, c in self.rare):
            raise ValueError("rare sample counts must be >= 1")

    @property
    def n_species(self) -> int:
        return int(np.prod(self.branching))


@dataclass
class TraitAssignment:
    """Per-node visual trait values, keyed by truncated prefix names."""

    seed: int
    size: int
    silhouette: dict = field(default_factory=dict)   # class prefix -> name
    appendages: dict = field(default_factory=dict)   # order prefix -> (count, base angle)
    pattern: dict = field(default_factory=dict)      # family prefix -> (kind, density)
    hue_bin: dict = field(default_factory=dict)      # genus prefix -> bin in [0, 12)
    marking: dict = field(default_factory=dict)      # full name -> (angle, size offset)


@dataclass(frozen=True)
class TaxaImage:
    pixels: np.ndarray        # (H, W, 3) float in [0,1]
    rotation: float
    translation: tuple
    scale: float


@dataclass(frozen=True)
class ManifestRecord:
    image: str                # path relative to the manifest file
    path: TaxonPath
    pose_seed: int
    split: str                # "train" | "eval"


def generate_taxonomy(spec: TaxaSpec) -> tuple[TaxonomyTree, TraitAssignment]:
    """Enumerate the product taxonomy and assign inherited traits.

    Sibling nodes always receive distinct trait values (offset walk through
    the option list), so every level is in principle distinguishable.
    """
    tree = TaxonomyTree(depth=7)
    paths: list[tuple] = [()]
    counters = [0] * 7
    for lvl, width in enumerate(spec.branching):
        nxt = []
        for parent in paths:
            for _ in range(width):
                nxt.append(parent + (f"{_LEVEL_TAGS[lvl]}{counters[lvl]}",))
                counters[lvl] += 1
        paths = nxt
    taxon_paths = [TaxonPath(p) for p in paths]
    for p in taxon_paths:
        tree.add(p)

    traits = TraitAssignment(seed=spec.seed, size=spec.size)

    def child_offset(parent_prefix: str, n_options: int) -> int:
        return int(R.integers(spec.seed, f"traits/offset/{parent_prefix}", 0, n_options))

    def node_children(level: int) -> dict[str, list[str]]:
        by_parent: dict[str, list[str]] = {}
        for p in taxon_paths:
            parent = p.prefix(level - 1) if level > 0 else ""
            name = p.prefix(level)
            bucket = by_parent.setdefault(parent, [])
            if name not in bucket:
                bucket.append(name)
        return by_parent

    for parent, kids in node_children(2).items():
        off = child_offset(parent or "<root>", len(SILHOUETTES))
        for k, name in enumerate(kids):
            traits.silhouette[name] = SILHOUETTES[(off + k) % len(SILHOUETTES)]

    for parent, kids in node_children(3).items():
        off = child_offset(parent, len(APPENDAGE_COUNTS))
        for k, name in enumerate(kids):
            count = APPENDAGE_COUNTS[(off + k) % len(APPENDAGE_COUNTS)]
            angle = float(R.uniform(spec.seed, f"traits/appangle/{name}")) * 2 * math.pi
            traits.appendages[name] = (count, angle)

    for parent, kids in node_children(4).items():
        off = child_offset(parent, len(PATTERNS))
        for k, name in enumerate(kids):
            kind = PATTERNS[(off + k) % len(PATTERNS)]
            density = 0.14 if R.uniform(spec.seed, f"traits/density/{name}") < 0.5 else 0.21
            traits.pattern[name] = (kind, density)

    for parent, kids in node_children(5).items():
        off = child_offset(parent, N_HUE_BINS)
        step = max(1, N_HUE_BINS // max(2, len(kids)))
        for k, name in enumerate(kids):
            traits.hue_bin[name] = (off + k * step) % N_HUE_BINS

    for parent, kids in node_children(6).items():
        off = child_offset(parent, 3)
        base = float(R.uniform(spec.seed, f"traits/markangle/{parent}")) * 2 * math.pi
        for k, name in enumerate(kids):
            j = (off + k) % 3
            angle = base + j * (2 * math.pi / 3)
            size_off = (-0.12, 0.0, 0.12)[j]
            traits.marking[name] = (angle, size_off)

    return tree, traits


# ---------------------------------------------------------------------------
# rendering

_BG = np.array([0.08, 0.09, 0.11])
_MARK_COLOR = np.array([0.97, 0.97, 0.94])
_AA = 0.55  # soft-edge width in pixels


def _hsv(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def _alpha_from_dist(dist: np.ndarray) -> np.ndarray:
    # dist > 0 inside the shape
    return np.clip(0.5 + dist / _AA, 0.0, 1.0)


def _body_distance(kind: str, u: np.ndarray, v: np.ndarray, unit: float) -> np.ndarray:
    if kind == "disc":
        return 5.0 * unit - np.sqrt(u * u + v * v)
    if kind == "ellipse":
        a, b = 6.3 * unit, 3.9 * unit
        q = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        return (1.0 - q) * b
    if kind == "triangle":
        rin = 0.5 * 7.8 * unit  # inradius of an equilateral triangle, apex up
        d = np.full_like(u, np.inf)
        for ang in (math.pi / 2 + math.pi / 3, math.pi / 2 + math.pi, math.pi / 2 + 5 * math.pi / 3):
            nx, ny = math.cos(ang), math.sin(ang)
            d = np.minimum(d, rin - (nx * u + ny * v))
        return d
    raise ValueError(f"unknown silhouette {kind!r}")


def _capsule_distance(u, v, p1, p2, width):
    dx, dy = p2[0] - p1[0], p2[1] - p1[1]
    seg2 = dx * dx + dy * dy
    t = np.clip(((u - p1[0]) * dx + (v - p1[1]) * dy) / seg2, 0.0, 1.0)
    cx, cy = p1[0] + t * dx, p1[1] + t * dy
    return width - np.sqrt((u - cx) ** 2 + (v - cy) ** 2)


def pose_params(traits: TraitAssignment, pose_seed: int):
    """Pose is a pure function of (traits seed, pose seed), independent of
    the species, so same-pose renders of siblings are directly comparable."""
    g = R.stream(traits.seed, f"pose/{pose_seed}")
    rotation = math.radians(float(g.uniform(-30.0, 30.0)))
    max_t = 0.125 * traits.size
    tx = float(g.uniform(-max_t, max_t))
    ty = float(g.uniform(-max_t, max_t))
    scale = float(g.uniform(0.8, 1.2))
    return rotation, (tx, ty), scale


def render_parts(traits: TraitAssignment, path: TaxonPath, pose_seed: int) -> dict:
    """Render one image plus the per-trait alpha masks used by tests."""
    size = traits.size
    unit = size / 16.0
    silhouette = traits.silhouette[path.prefix(2)]
    app_count, app_angle = traits.appendages[path.prefix(3)]
    pattern_kind, density = traits.pattern[path.prefix(4)]
    hue = traits.hue_bin[path.prefix(5)] / N_HUE_BINS
    mark_angle, mark_off = traits.marking[path.full]

    rotation, (tx, ty), scale = pose_params(traits, pose_seed)

    idx = np.arange(size) + 0.5 - size / 2.0
    ys, xs = np.meshgrid(idx, idx, indexing="ij")
    c, s = math.cos(rotation), math.sin(rotation)
    u = (c * (xs - tx) + s * (ys - ty)) / scale
    v = (-s * (xs - tx) + c * (ys - ty)) / scale

    body_a = _alpha_from_dist(_body_distance(silhouette, u, v, unit) * scale)

    app_a = np.zeros_like(body_a)
    for j in range(app_count):
        ang = app_angle + j * (2 * math.pi / max(1, app_count))
        p1 = (4.0 * unit * math.cos(ang), 4.0 * unit * math.sin(ang))
        p2 = (7.1 * unit * math.cos(ang), 7.1 * unit * math.sin(ang))
        app_a = np.maximum(app_a, _alpha_from_dist(_capsule_distance(u, v, p1, p2, 1.05 * unit) * scale))

    if pattern_kind == "stripes":
        wave = np.sin(2 * math.pi * density * u / unit)
        pat = np.clip(0.5 + 2.2 * wave, 0.0, 1.0)
    elif pattern_kind == "spots":
        wave = np.sin(2 * math.pi * density * u / unit) * np.sin(2 * math.pi * density * v / unit)
        pat = np.clip(4.0 * (wave - 0.35), 0.0, 1.0)
    else:
        pat = np.zeros_like(u)
    pat = pat * body_a

    mark_r = (0.75 + mark_off) * unit
    mu_ = 2.7 * unit * math.cos(mark_angle)
    mv_ = 2.7 * unit * math.sin(mark_angle)
    mark_d = mark_r - np.sqrt((u - mu_) ** 2 + (v - mv_) ** 2)
    mark_a = _alpha_from_dist(mark_d * scale) * body_a

    base_color = _hsv(hue, 0.85, 0.92)
    app_color = base_color * 0.75
    img = np.empty((size, size, 3))
    img[:] = _BG
    img = img * (1 - app_a[..., None]) + app_color * app_a[..., None]
    body_rgb = base_color[None, None, :] * (1.0 - 0.5 * pat[..., None])
    img = img * (1 - body_a[..., None]) + body_rgb * body_a[..., None]
    img = img * (1 - mark_a[..., None]) + _MARK_COLOR * mark_a[..., None]
    img = np.clip(img, 0.0, 1.0)

    return {
        "pixels": img,
        "body": body_a,
        "appendages": app_a,
        "pattern": pat,
        "marking": mark_a,
        "pose": (rotation, (tx, ty), scale),
    }


def render_species(traits: TraitAssignment, tree: TaxonomyTree, path: TaxonPath, pose_seed: int) -> TaxaImage:
    if not tree.contains(path):
        raise UnknownPathError(f"unknown path {path.full!r}")
    parts = render_parts(traits, path, pose_seed)
    rotation, translation, scale = parts["pose"]
    return TaxaImage(parts["pixels"], rotation, translation, scale)


# ---------------------------------------------------------------------------
# PPM files


def write_ppm(path, pixels: np.ndarray) -> None:
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    data = (arr * 255.0).round().astype(np.uint8)
    h, w, _ = data.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P6"):
        raise IOFailure(f"{path}: not a P6 PPM file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(x) for x in fields)
    if maxval != 255:
        raise IOFailure(f"{path}: unsupported maxval {maxval}")
    raw = blob[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise IOFailure(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# dataset build / manifest IO


def species_counts(spec: TaxaSpec, tree: TaxonomyTree) -> dict[str, int]:
    rare = dict(spec.rare)
    unknown = set(rare) - {p.species for p in tree.species_paths()}
    if unknown:
        raise UnknownPathError(f"rare species not in taxonomy: {sorted(unknown)}")
    return {p.species: rare.get(p.species, spec.images_per_species) for p in tree.species_paths()}


def _split_for(index: int, count: int) -> str:
    if count <= 4:
        return "train"  # rare species keep every sample for training
    n_eval = max(1, round(0.2 * count))
    return "train" if index < count - n_eval else "eval"


def build_dataset(spec: TaxaSpec, out_dir, force: bool = False) -> Path:
    """Render every image and write manifest.jsonl; returns the manifest path."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise IOFailure(f"output directory {out} is not empty (use force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)

    tree, traits = generate_taxonomy(spec)
    counts = species_counts(spec, tree)
    records = []
    for sp_idx, path in enumerate(tree.species_paths()):
        slug = path.species
        (out / slug).mkdir(exist_ok=True)
        for i in range(counts[slug]):
            pose_seed = sp_idx * 100_000 + i  # distinct pose stream per species
            img = render_parts(traits, path, pose_seed)["pixels"]
            rel = f"{slug}/{i}.ppm"
            write_ppm(out / rel, img)
            records.append(ManifestRecord(rel, path, pose_seed, _split_for(i, counts[slug])))

    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as f:
        for r in records:
            row = {"image": r.image, "pose_seed": r.pose_seed, "split": r.split}
            for i, lv in enumerate(LEVEL_NAMES):
                row[lv.lower()] = r.path.names[i]
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest


def load_manifest(path, check_files: bool = True) -> list[ManifestRecord]:
    """Read and validate a manifest; errors carry the offending line number."""
    path = Path(path)
    if not path.exists():
        raise IOFailure(f"manifest not found: {path}")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise IOFailure(f"{path}: malformed line {lineno}: {e}")
            names = []
            for lv in LEVEL_NAMES:
                value = str(row.get(lv.lower(), "") or "").strip()
                if not value:
                    raise MissingLevelError(f"line {lineno}", lv)
            names = tuple(str(row[lv.lower()]).strip() for lv in LEVEL_NAMES)
            for key in ("image", "pose_seed", "split"):
                if key not in row:
                    raise IOFailure(f"{path}: malformed line {lineno}: missing field {key!r}")
            rec = ManifestRecord(str(row["image"]), TaxonPath(names), int(row["pose_seed"]), str(row["split"]))
            if rec.split not in ("train", "eval"):
                raise IOFailure(f"{path}: malformed line {lineno}: bad split {rec.split!r}")
            if check_files:
                img = path.parent / rec.image
                if not img.exists():
                    raise IOFailure(f"{path}: line {lineno}: missing image file {img}")
            records.append(rec)
    return records


def manifest_tree(records: list[ManifestRecord]) -> TaxonomyTree:
    tree = TaxonomyTree(depth=7)
    for i, r in enumerate(records):
        tree.add(r.path, samples=1, record_id=f"record {i}")
    return tree


def load_images(manifest_path, records: list[ManifestRecord]) -> np.ndarray:
    """Decode every referenced PPM into an (N, H, W, 3) float array."""
    base = Path(manifest_path).parent
    return np.stack([read_ppm(base / r.image) for r in records])
