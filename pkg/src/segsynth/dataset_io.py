"""Dataset loading and synthetic-output persistence.

Two input layouts are supported:

* ``voc-indexed``  - labels are indexed-palette PNGs whose palette index is
  the class id (PASCAL VOC convention, void = 255).
* ``binary-masks`` - labels are single-channel 0/255 rasters selecting one
  foreground class (BDD-style drivable-area / lane masks).

Synthetic images are written as lossless PNG and every label file is copied
byte-for-byte from its source, so downstream tooling sees annotations that
are bit-identical to the real dataset's.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, ManifestError
from .raster import save_rgb_png

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")
LAYOUTS = ("voc-indexed", "binary-masks")
PATH_TAGS = ("d1", "d2")

VOC_CLASS_NAMES = (
    "background", "aeroplane", "bicycle", "bird", "boat", "bottle",
    "bus", "car", "cat", "chair", "cow", "diningtable", "dog",
    "horse", "motorbike", "person", "pottedplant", "sheep", "sofa",
    "train", "tvmonitor",
)


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    class_name: str
    is_background: bool = False


@dataclass
class ClassMap:
    """Mapping between label pixel values and class names.

    void_id, when set, marks pixels excluded from every class (VOC's 255
    boundary value); it must not collide with any class id.
    """

    entries: list[ClassEntry]
    void_id: int | None = None

    def __post_init__(self) -> None:
        ids = [e.class_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ConfigError("class ids must be unique")
        backgrounds = [e for e in self.entries if e.is_background]
        if len(backgrounds) > 1:
            raise ConfigError("at most one class may be flagged background")
        if self.void_id is not None and self.void_id in ids:
            raise ConfigError(f"void id {self.void_id} collides with a class id")

    def ids(self) -> list[int]:
        return [e.class_id for e in self.entries]

    def foreground_ids(self) -> list[int]:
        return [e.class_id for e in self.entries if not e.is_background]

    @property
    def background_id(self) -> int | None:
        for e in self.entries:
            if e.is_background:
                return e.class_id
        return None

    def name_of(self, class_id: int) -> str:
        for e in self.entries:
            if e.class_id == class_id:
                return e.class_name
        raise KeyError(f"unknown class id {class_id}")


def voc_class_map() -> ClassMap:
    entries = [
        ClassEntry(i, name, is_background=(i == 0))
        for i, name in enumerate(VOC_CLASS_NAMES)
    ]
    return ClassMap(entries=entries, void_id=255)


def binary_class_map(class_name: str = "object") -> ClassMap:
    return ClassMap(
        entries=[ClassEntry(0, "background", True), ClassEntry(1, class_name)],
        void_id=None,
    )


def load_class_map(path: str | Path) -> ClassMap:
    """Read a class map from a JSON file: {"entries": [[id, name, is_bg]...], "void_id": n|null}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = [ClassEntry(int(e[0]), str(e[1]), bool(e[2])) for e in raw["entries"]]
    void = raw.get("void_id")
    return ClassMap(entries=entries, void_id=None if void is None else int(void))


@dataclass
class Sample:
    """One real image with its class-indexed label mask."""

    id: str
    image: np.ndarray
    label: np.ndarray
    classes: list[int]
    caption: str | None = None
    image_path: Path | None = None
    label_path: Path | None = None


@dataclass
class LoadError:
    sample_id: str
    message: str


@dataclass
class LoadResult:
    samples: list[Sample]
    errors: list[LoadError] = field(default_factory=list)

    def __iter__(self):
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)


def _classes_present(label: np.ndarray, class_map: ClassMap) -> list[int]:
    present = {int(v) for v in np.unique(label)}
    return sorted(present & set(class_map.foreground_ids()))


def read_label(path: Path, layout: str, class_map: ClassMap) -> np.ndarray:
    with Image.open(path) as img:
        if layout == "voc-indexed":
            if img.mode != "P":
                img = img.convert("P")
            return np.asarray(img, dtype=np.uint8)
        # binary-masks: grayscale 0/255, thresholded onto the single class id
        data = np.asarray(img.convert("L"), dtype=np.uint8)
        foreground = class_map.foreground_ids()
        if len(foreground) != 1:
            raise ConfigError(
                "binary-masks layout needs a class map with exactly one foreground class"
            )
        return np.where(data >= 128, foreground[0], 0).astype(np.uint8)


def _read_caption(image_path: Path) -> str | None:
    sidecar = image_path.with_name(image_path.stem + ".caption.txt")
    if sidecar.exists():
        text = sidecar.read_text(encoding="utf-8").strip()
        return text or None
    return None


def load_dataset(root: str | Path, layout: str, class_map: ClassMap) -> LoadResult:
    """Load image/label pairs from ``root/images`` and ``root/labels``.

    Returns samples ordered lexicographically by id; per-sample problems
    (missing counterpart, dimension mismatch) are collected, not raised.
    """
    if layout not in LAYOUTS:
        raise ConfigError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    root = Path(root)
    images_dir = root / "images"
    labels_dir = root / "labels"
    if not images_dir.is_dir() or not labels_dir.is_dir():
        raise ConfigError(f"{root} must contain images/ and labels/ directories")

    images = {
        p.stem: p
        for p in images_dir.iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES and not p.stem.endswith(".caption")
    }
    labels = {p.stem: p for p in labels_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES}

    samples: list[Sample] = []
    errors: list[LoadError] = []
    for stem in sorted(set(images) | set(labels)):
        if stem not in labels:
            errors.append(LoadError(stem, f"no label for image {images[stem].name}"))
            continue
        if stem not in images:
            errors.append(LoadError(stem, f"no image for label {labels[stem].name}"))
            continue
        with Image.open(images[stem]) as img:
            image = np.asarray(img.convert("RGB"), dtype=np.uint8)
        label = read_label(labels[stem], layout, class_map)
        if image.shape[:2] != label.shape:
            errors.append(
                LoadError(
                    stem,
                    f"image is {image.shape[1]}x{image.shape[0]} but label is "
                    f"{label.shape[1]}x{label.shape[0]}",
                )
            )
            continue
        samples.append(
            Sample(
                id=stem,
                image=image,
                label=label,
                classes=_classes_present(label, class_map),
                caption=_read_caption(images[stem]),
                image_path=images[stem],
                label_path=labels[stem],
            )
        )
    for err in errors:
        logger.warning("skipping %s: %s", err.sample_id, err.message)
    return LoadResult(samples=samples, errors=errors)


@dataclass
class Dataset:
    """A loaded dataset plus the metadata needed to re-derive its masks."""

    root: Path
    layout: str
    class_map: ClassMap
    samples: list[Sample]
    load_errors: list[LoadError] = field(default_factory=list)


def open_dataset(root: str | Path, layout: str, class_map: ClassMap) -> Dataset:
    result = load_dataset(root, layout, class_map)
    return Dataset(
        root=Path(root),
        layout=layout,
        class_map=class_map,
        samples=result.samples,
        load_errors=result.errors,
    )


@dataclass
class ManifestEntry:
    source_id: str
    synthetic_id: str
    path_tag: str
    seed: int
    image_path: str
    label_path: str
    prompt_rendered: str
    alpha: float
    backend_info: str

    def __post_init__(self) -> None:
        if self.path_tag not in PATH_TAGS:
            raise ManifestError(f"path_tag must be one of {PATH_TAGS}, got {self.path_tag!r}")


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_synthetic_sample(
    out_root: str | Path,
    sample: Sample,
    generated: np.ndarray,
    path_tag: str,
    seed: int,
    prompt_rendered: str,
    alpha: float,
    backend_info: str = "",
    variant: int = 0,
) -> ManifestEntry:
    """Persist one synthetic image and a byte-identical copy of its label."""
    if generated.shape[:2] != sample.label.shape:
        raise ConfigError(
            f"generated image {generated.shape[:2]} does not match label {sample.label.shape}"
        )
    if sample.label_path is None:
        raise ConfigError(f"sample {sample.id} has no source label file to copy")

    out_root = Path(out_root)
    synthetic_id = f"{sample.id}_{path_tag}_v{variant:02d}"
    image_rel = Path(path_tag) / "images" / f"{synthetic_id}.png"
    label_rel = Path(path_tag) / "labels" / f"{synthetic_id}{sample.label_path.suffix}"
    (out_root / image_rel).parent.mkdir(parents=True, exist_ok=True)
    (out_root / label_rel).parent.mkdir(parents=True, exist_ok=True)

    save_rgb_png(out_root / image_rel, generated)
    shutil.copyfile(sample.label_path, out_root / label_rel)

    return ManifestEntry(
        source_id=sample.id,
        synthetic_id=synthetic_id,
        path_tag=path_tag,
        seed=int(seed),
        image_path=str(image_rel),
        label_path=str(label_rel),
        prompt_rendered=prompt_rendered,
        alpha=float(alpha),
        backend_info=backend_info,
    )


MANIFEST_NAME = "manifest.jsonl"
_MANIFEST_FIELDS = (
    "source_id", "synthetic_id", "path_tag", "seed",
    "image_path", "label_path", "prompt_rendered", "alpha", "backend_info",
)


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(asdict(entry), sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a manifest; unknown keys are ignored for forward compatibility."""
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            entries.append(ManifestEntry(**{k: record[k] for k in _MANIFEST_FIELDS}))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ManifestError(f"{path}:{lineno}: bad manifest record: {exc}") from exc
    return entries
