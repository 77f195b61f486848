"""Dataset ingestion and generation.

Covers the standard points-file and WFLW annotation-line formats, a
line-delimited JSON manifest for persisting datasets, and a procedural
synthetic-face generator whose structure and style factors are sampled
independently (the desk-scale ground truth for disentanglement checks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .errors import InputError, ParseError
from .geometry import (
    BoundingBox,
    LandmarkSet,
    scheme_for_count,
    scheme_from_name,
    synth_scheme,
)

ATTRIBUTE_NAMES = ("pose", "expression", "illumination", "makeup", "occlusion", "blur")

MANIFEST_FORMAT = "stylesep-manifest/1"


@dataclass(eq=False)
class Sample:
    """One annotated face: an image on disk plus its landmarks and box."""

    image_path: str
    landmarks: LandmarkSet
    bbox: BoundingBox
    attributes: frozenset = frozenset()
    synthetic: bool = False
    style_donor: int | None = None
    style_recipient: int | None = None
    checkpoint: str | None = None

    def __post_init__(self):
        self.attributes = frozenset(self.attributes)
        unknown = self.attributes - set(ATTRIBUTE_NAMES)
        if unknown:
            raise InputError(f"unknown attribute flags: {sorted(unknown)}")
        if self.synthetic != (self.style_donor is not None):
            raise InputError("style_donor must be set exactly when a sample is synthetic")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.image_path == other.image_path
            and self.landmarks == other.landmarks
            and self.bbox == other.bbox
            and self.attributes == other.attributes
            and self.synthetic == other.synthetic
            and self.style_donor == other.style_donor
            and self.style_recipient == other.style_recipient
            and self.checkpoint == other.checkpoint
        )


@dataclass(eq=False)
class Dataset:
    """An ordered, single-scheme collection of samples."""

    samples: list
    scheme: "LandmarkScheme"

    def __post_init__(self):
        for i, s in enumerate(self.samples):
            if s.landmarks.scheme != self.scheme:
                raise InputError(
                    f"sample {i} has scheme {s.landmarks.scheme.name}, dataset is {self.scheme.name}"
                )

    @property
    def n(self) -> int:
        return len(self.samples)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.scheme == other.scheme and self.samples == other.samples


# ---------------------------------------------------------------------------
# image IO


def load_image(path) -> np.ndarray:
    """Read an image as float32 RGB (H, W, C) in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise InputError(f"cannot read image {path}")
    if img.ndim == 2:
        img = img[:, :, None]
    elif img.shape[2] >= 3:
        img = cv2.cvtColor(img[:, :, :3], cv2.COLOR_BGR2RGB)
    return img.astype(np.float32) / 255.0


def save_image(path, image: np.ndarray) -> None:
    """Write a float RGB [0, 1] array as a lossless 8-bit PNG."""
    img = np.clip(np.asarray(image), 0.0, 1.0)
    img = np.round(img * 255.0).astype(np.uint8)
    if img.ndim == 3 and img.shape[2] == 3:
        img = cv2.cvtColor(img, cv2.COLOR_RGB2BGR)
    elif img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if not cv2.imwrite(str(path), img):
        raise OSError(f"failed to write image {path}")


# ---------------------------------------------------------------------------
# points files (300W / COFW-68 / AFLW-68 style)


def parse_pts(text: str) -> LandmarkSet:
    """Parse a points file: `version:` / `n_points:` headers then braced "x y" lines."""
    lines = text.splitlines()
    n_points = None
    idx = 0
    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if not line or line.startswith("version:"):
            continue
        if line.startswith("n_points:"):
            tok = line.split(":", 1)[1].strip()
            try:
                n_points = int(tok)
            except ValueError:
                raise ParseError(f"bad n_points value {tok!r}", line=idx)
            continue
        if line == "{":
            break
        raise ParseError(f"unexpected header line {line!r}", line=idx)
    else:
        raise ParseError("missing '{' opening the point list", line=len(lines))
    if n_points is None:
        raise ParseError("missing n_points header", line=idx)

    points = []
    closed = False
    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if line == "}":
            closed = True
            break
        if not line:
            continue
        toks = line.split()
        if len(toks) != 2:
            raise ParseError(f"expected 'x y', got {line!r}", line=idx)
        try:
            points.append((float(toks[0]), float(toks[1])))
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {line!r}", line=idx)
    if not closed:
        raise ParseError("point list not closed with '}'", line=idx)
    if len(points) != n_points:
        raise ParseError(
            f"header declares {n_points} points but {len(points)} were listed", line=idx
        )
    return LandmarkSet(np.array(points, dtype=np.float64), scheme_for_count(n_points))


def serialize_pts(landmarks: LandmarkSet) -> str:
    body = "\n".join(f"{repr(float(x))} {repr(float(y))}" for x, y in landmarks.points)
    return f"version: 1\nn_points: {len(landmarks)}\n{{\n{body}\n}}\n"


# ---------------------------------------------------------------------------
# WFLW annotation lines


WFLW_FIELD_COUNT = 98 * 2 + 4 + 6 + 1  # 207


def parse_wflw_line(line: str) -> Sample:
    """Parse one WFLW annotation line: 196 coords, 4 bbox values, 6 attribute bits, filename."""
    fields = line.split()
    if len(fields) != WFLW_FIELD_COUNT:
        raise ParseError(
            f"expected {WFLW_FIELD_COUNT} whitespace-separated fields, got {len(fields)}"
        )
    try:
        coords = np.array([float(v) for v in fields[:196]], dtype=np.float64)
        bbox_vals = [float(v) for v in fields[196:200]]
    except ValueError as e:
        raise ParseError(f"non-numeric value in coordinates/bbox: {e}")
    bits = fields[200:206]
    if any(b not in ("0", "1") for b in bits):
        raise ParseError(f"attribute bits must be 0/1, got {bits}")
    attributes = frozenset(
        name for name, bit in zip(ATTRIBUTE_NAMES, bits) if bit == "1"
    )
    landmarks = LandmarkSet(coords.reshape(98, 2), scheme_for_count(98))
    bbox = BoundingBox(*bbox_vals)
    return Sample(image_path=fields[206], landmarks=landmarks, bbox=bbox, attributes=attributes)


def serialize_wflw_line(sample: Sample) -> str:
    if sample.landmarks.scheme.n_points != 98:
        raise InputError("WFLW lines carry 98 landmarks")
    parts = [repr(float(v)) for v in sample.landmarks.points.reshape(-1)]
    parts += [
        repr(float(v))
        for v in (sample.bbox.x_min, sample.bbox.y_min, sample.bbox.x_max, sample.bbox.y_max)
    ]
    parts += ["1" if name in sample.attributes else "0" for name in ATTRIBUTE_NAMES]
    parts.append(sample.image_path)
    return " ".join(parts)


# ---------------------------------------------------------------------------
# manifest persistence


def _sample_record(sample: Sample, base: Path) -> dict:
    path = Path(sample.image_path)
    try:
        path_str = path.relative_to(base).as_posix()
    except ValueError:
        path_str = path.as_posix()
    rec = {
        "image_path": path_str,
        "scheme": sample.landmarks.scheme.name,
        "landmarks": [float(v) for v in sample.landmarks.points.reshape(-1)],
        "bbox": [
            float(sample.bbox.x_min),
            float(sample.bbox.y_min),
            float(sample.bbox.x_max),
            float(sample.bbox.y_max),
        ],
        "attributes": sorted(sample.attributes),
        "synthetic": sample.synthetic,
        "style_donor": sample.style_donor,
    }
    if sample.style_recipient is not None:
        rec["style_recipient"] = sample.style_recipient
    if sample.checkpoint is not None:
        rec["checkpoint"] = sample.checkpoint
    return rec


def save_manifest(dataset: Dataset, path) -> None:
    """Write a dataset as line-delimited JSON (header line + one record per sample).

    Image paths are stored relative to the manifest location when possible, so
    a run directory can be relocated or compared byte-for-byte.
    """
    path = Path(path)
    base = path.resolve().parent
    header = {"format": MANIFEST_FORMAT, "scheme": dataset.scheme.name, "n": dataset.n}
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for sample in dataset:
            f.write(json.dumps(_sample_record(sample, base)) + "\n")


def _record_to_sample(rec: dict, base: Path, index: int) -> Sample:
    try:
        scheme = scheme_from_name(rec["scheme"])
        flat = np.asarray(rec["landmarks"], dtype=np.float64)
        if flat.size != 2 * scheme.n_points:
            raise ParseError(
                f"record {index}: {scheme.name} needs {2 * scheme.n_points} coordinates, "
                f"got {flat.size}"
            )
        landmarks = LandmarkSet(flat.reshape(-1, 2), scheme)
        bbox = BoundingBox(*[float(v) for v in rec["bbox"]])
        img = Path(rec["image_path"])
        if not img.is_absolute():
            img = base / img
        return Sample(
            image_path=str(img),
            landmarks=landmarks,
            bbox=bbox,
            attributes=frozenset(rec["attributes"]),
            synthetic=bool(rec["synthetic"]),
            style_donor=rec["style_donor"],
            style_recipient=rec.get("style_recipient"),
            checkpoint=rec.get("checkpoint"),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, InputError) as e:
        raise ParseError(f"record {index}: {e}")


def load_manifest(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.resolve().parent
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty manifest (missing header line)", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(f"bad header: {e}", line=1)
    if header.get("format") != MANIFEST_FORMAT:
        raise ParseError(f"unsupported manifest format {header.get('format')!r}", line=1)
    scheme = scheme_from_name(header["scheme"])
    declared = int(header["n"])
    if len(lines) - 1 != declared:
        raise ParseError(
            f"header declares {declared} records but file has {len(lines) - 1} (truncated?)"
        )
    samples = []
    for i, ln in enumerate(lines[1:]):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise ParseError(f"record {i}: bad JSON: {e}", line=i + 2)
        samples.append(_record_to_sample(rec, base, i))
    return Dataset(samples, scheme)


# ---------------------------------------------------------------------------
# procedural synthetic faces


STRUCTURE_FACTOR_NAMES = (
    "face_center",
    "face_radius",
    "eye_spacing",
    "eye_height",
    "mouth_width",
    "mouth_curve",
)
STYLE_FACTOR_NAMES = (
    "bg_r",
    "bg_g",
    "bg_b",
    "light_angle",
    "light_strength",
    "noise_std",
    "blur_sigma",
    "occluder_pos",
)

_STRUCTURE_RANGES = np.array(
    [
        (-0.06, 0.06),   # face_center: vertical offset, fraction of image size
        (0.26, 0.36),    # face_radius: vertical half-extent, fraction of image size
        (0.32, 0.52),    # eye_spacing: eye offset from axis, fraction of rx
        (0.18, 0.38),    # eye_height: above center, fraction of ry
        (0.35, 0.60),    # mouth_width: half-width, fraction of rx
        (-0.12, 0.22),   # mouth_curve: center offset, fraction of ry
    ]
)
_STYLE_RANGES = np.array(
    [
        (0.05, 0.95),        # bg_r
        (0.05, 0.95),        # bg_g
        (0.05, 0.95),        # bg_b
        (0.0, 2.0 * np.pi),  # light_angle
        (0.0, 0.6),          # light_strength
        (0.0, 0.08),         # noise_std
        (0.0, 1.5),          # blur_sigma (in 64px-frame units, scaled to image)
        (0.0, 1.0),          # occluder_pos: angle fraction around the face
    ]
)

_FACE_COLOR = np.array([0.80, 0.66, 0.55])
_EYE_COLOR = np.array([0.13, 0.13, 0.18])
_MOUTH_COLOR = np.array([0.55, 0.16, 0.16])


@dataclass(eq=False)
class SynthFactors:
    """Ground-truth generative factors for one synthetic face."""

    structure: np.ndarray  # 6 reals, see STRUCTURE_FACTOR_NAMES
    style: np.ndarray      # 8 reals, see STYLE_FACTOR_NAMES
    occluder: bool

    def __eq__(self, other):
        if not isinstance(other, SynthFactors):
            return NotImplemented
        return (
            np.array_equal(self.structure, other.structure)
            and np.array_equal(self.style, other.style)
            and self.occluder == other.occluder
        )


def _face_geometry(structure: np.ndarray, size: int) -> dict:
    f_center, f_radius, eye_spacing, eye_height, mouth_width, mouth_curve = structure
    cx = size / 2.0
    cy = size * (0.5 + f_center)
    ry = f_radius * size
    rx = 0.78 * ry
    r_eye = 0.16 * rx
    ex = eye_spacing * rx
    ey = cy - eye_height * ry
    mw = mouth_width * rx
    my = cy + 0.48 * ry
    return {
        "cx": cx, "cy": cy, "rx": rx, "ry": ry, "r_eye": r_eye,
        "ex": ex, "ey": ey, "mw": mw, "my": my, "mcy": my + mouth_curve * ry,
    }


def landmarks_from_structure(structure: np.ndarray, size: int) -> LandmarkSet:
    """Analytic 10-point landmark set: eye centers, eye corners, mouth corners,
    mouth center, chin. Depends on the structure factors only."""
    g = _face_geometry(np.asarray(structure, dtype=np.float64), size)
    cx, cy = g["cx"], g["cy"]
    pts = np.array(
        [
            (cx - g["ex"], g["ey"]),                 # 0 left eye center
            (cx + g["ex"], g["ey"]),                 # 1 right eye center
            (cx - g["ex"] - g["r_eye"], g["ey"]),    # 2 left eye outer corner
            (cx + g["ex"] + g["r_eye"], g["ey"]),    # 3 right eye outer corner
            (cx - g["ex"] + g["r_eye"], g["ey"]),    # 4 left eye inner corner
            (cx + g["ex"] - g["r_eye"], g["ey"]),    # 5 right eye inner corner
            (cx - g["mw"], g["my"]),                 # 6 left mouth corner
            (cx + g["mw"], g["my"]),                 # 7 right mouth corner
            (cx, g["mcy"]),                          # 8 mouth center
            (cx, cy + g["ry"]),                      # 9 chin
        ],
        dtype=np.float64,
    )
    return LandmarkSet(pts, synth_scheme(10))


def _render_face(structure, style, occluder, size, noise_rng) -> np.ndarray:
    g = _face_geometry(structure, size)
    bg = style[:3]
    angle, strength, noise_std, blur_sigma, occ_pos = style[3:8]

    img = np.empty((size, size, 3), dtype=np.float32)
    img[:] = bg.astype(np.float32)

    # linear lighting gradient along `angle`
    xs = np.arange(size, dtype=np.float32)
    proj = np.float32(np.cos(angle)) * xs[None, :] + np.float32(np.sin(angle)) * xs[:, None]
    lo, hi = float(proj.min()), float(proj.max())
    if hi > lo:
        img += (strength * ((proj - lo) / (hi - lo) - 0.5))[:, :, None].astype(np.float32)

    shift = 4  # cv2 fixed-point subpixel drawing
    scale = 1 << shift

    def pt(x, y):
        return int(round(x * scale)), int(round(y * scale))

    cv2.ellipse(
        img,
        pt(g["cx"], g["cy"]),
        (int(round(g["rx"] * scale)), int(round(g["ry"] * scale))),
        0, 0, 360, _FACE_COLOR.tolist(), -1, cv2.LINE_AA, shift,
    )
    r_eye_fp = int(round(g["r_eye"] * scale))
    for sx in (-1, 1):
        cv2.circle(
            img, pt(g["cx"] + sx * g["ex"], g["ey"]), r_eye_fp,
            _EYE_COLOR.tolist(), -1, cv2.LINE_AA, shift,
        )
    # mouth: parabola through both corners and the (possibly offset) center
    ts = np.linspace(-1.0, 1.0, 17)
    mx = g["cx"] + ts * g["mw"]
    my = g["mcy"] + (g["my"] - g["mcy"]) * ts**2
    curve = np.stack([mx * scale, my * scale], axis=1).round().astype(np.int32)
    cv2.polylines(
        img, [curve.reshape(-1, 1, 2)], False, _MOUTH_COLOR.tolist(),
        max(1, size // 32), cv2.LINE_AA, shift,
    )

    if occluder:
        # gray box riding on the face edge; gray level derived from the position factor
        occ_angle = 2.0 * np.pi * occ_pos
        ox = g["cx"] + 0.55 * g["rx"] * np.cos(occ_angle)
        oy = g["cy"] + 0.55 * g["ry"] * np.sin(occ_angle)
        half_w, half_h = 0.25 * g["rx"], 0.25 * g["ry"]
        gray = 0.2 + 0.6 * occ_pos
        x0, x1 = int(round(ox - half_w)), int(round(ox + half_w))
        y0, y1 = int(round(oy - half_h)), int(round(oy + half_h))
        img[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = gray

    sigma = blur_sigma * size / 64.0
    if sigma > 0.05:
        img = cv2.GaussianBlur(img, (0, 0), sigmaX=float(sigma))
    if noise_std > 0:
        img = img + noise_rng.normal(0.0, noise_std, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0)


def _style_attributes(style: np.ndarray, occluder: bool) -> frozenset:
    flags = set()
    if occluder:
        flags.add("occlusion")
    if style[6] >= 1.0:
        flags.add("blur")
    if style[4] >= 0.45:
        flags.add("illumination")
    return frozenset(flags)


def generate_synth_dataset(n: int, image_size: int, seed: int, out_dir, channels: int = 3):
    """Render ``n`` parametric faces into ``out_dir`` and return (Dataset, factors).

    Structure factors and style factors come from independent substreams of
    ``seed``; landmarks are an exact analytic function of the structure factors,
    so style never moves them. Deterministic for a fixed (n, image_size, seed).
    """
    if n <= 0:
        raise InputError(f"need a positive sample count, got {n}")
    if channels not in (1, 3):
        raise InputError("channels must be 1 or 3")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(seed)
    struct_ss, style_ss, noise_ss = root.spawn(3)
    struct_rng = np.random.default_rng(struct_ss)
    style_rng = np.random.default_rng(style_ss)

    lo_s, hi_s = _STRUCTURE_RANGES[:, 0], _STRUCTURE_RANGES[:, 1]
    structures = struct_rng.uniform(lo_s, hi_s, size=(n, 6))
    lo_t, hi_t = _STYLE_RANGES[:, 0], _STYLE_RANGES[:, 1]
    styles = style_rng.uniform(lo_t, hi_t, size=(n, 8))
    occluders = style_rng.random(n) < 0.5

    samples = []
    factors = []
    for i, noise_child in enumerate(noise_ss.spawn(n)):
        noise_rng = np.random.default_rng(noise_child)
        img = _render_face(structures[i], styles[i], occluders[i], image_size, noise_rng)
        if channels == 1:
            img = img.mean(axis=2, keepdims=True)
        path = out_dir / f"synth_{i:05d}.png"
        save_image(path, img)
        landmarks = landmarks_from_structure(structures[i], image_size)
        samples.append(
            Sample(
                image_path=str(path),
                landmarks=landmarks,
                bbox=BoundingBox(0.0, 0.0, float(image_size), float(image_size)),
                attributes=_style_attributes(styles[i], occluders[i]),
            )
        )
        factors.append(
            SynthFactors(structure=structures[i], style=styles[i], occluder=bool(occluders[i]))
        )
    return Dataset(samples, synth_scheme(10)), factors


def save_factors(factors, path) -> None:
    """Write the factor sidecar as CSV, one row per sample."""
    cols = (
        ["index"]
        + [f"structure_{n}" for n in STRUCTURE_FACTOR_NAMES]
        + [f"style_{n}" for n in STYLE_FACTOR_NAMES]
        + ["occluder"]
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(cols) + "\n")
        for i, fac in enumerate(factors):
            row = (
                [str(i)]
                + [repr(float(v)) for v in fac.structure]
                + [repr(float(v)) for v in fac.style]
                + ["1" if fac.occluder else "0"]
            )
            f.write(",".join(row) + "\n")


def load_factors(path):
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    factors = []
    for i, ln in enumerate(lines[1:]):
        vals = ln.split(",")
        factors.append(
            SynthFactors(
                structure=np.array([float(v) for v in vals[1:7]]),
                style=np.array([float(v) for v in vals[7:15]]),
                occluder=vals[15] == "1",
            )
        )
    return factors


def normalize_dataset(dataset: Dataset, size: int, out_dir) -> Dataset:
    """Crop every sample to its bbox at size x size and rewrite it on disk.

    Produces the frame the disentangler and detector train in: full-frame
    bboxes and crop-space landmarks.
    """
    from .geometry import crop_and_resize  # local import to keep module load light

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for i, s in enumerate(dataset):
        img = load_image(s.image_path)
        crop, lms, _ = crop_and_resize(img, s.bbox, s.landmarks, size)
        path = out_dir / f"norm_{i:05d}.png"
        save_image(path, crop)
        samples.append(
            replace(
                s,
                image_path=str(path),
                landmarks=lms,
                bbox=BoundingBox(0.0, 0.0, float(size), float(size)),
            )
        )
    return Dataset(samples, dataset.scheme)
