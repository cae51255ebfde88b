"""Post-run verification, re-reading everything from disk.

Checks the guarantees the pipeline is supposed to leave behind: copied
labels are byte-identical to their sources, image dimensions match, and d2
outputs only differ from the source image inside the union of that sample's
class masks.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import (
    IMAGE_SUFFIXES,
    MANIFEST_NAME,
    ClassMap,
    read_label,
    load_manifest,
    sha256_file,
)
from .errors import ConfigError
from .mask_ops import extract_class_masks, union
from .raster import load_rgb

logger = logging.getLogger(__name__)

QA_REPORT_NAME = "qa_report.json"


@dataclass
class EntryCheck:
    synthetic_id: str
    path_tag: str
    label_digest_match: bool
    dims_match: bool
    outside_mask_unchanged: bool | None  # d2 only; None for d1
    notes: list[str] = field(default_factory=list)

    def passed(self) -> bool:
        flags = [self.label_digest_match, self.dims_match]
        if self.outside_mask_unchanged is not None:
            flags.append(self.outside_mask_unchanged)
        return all(flags)


@dataclass
class QAReport:
    entries: list[EntryCheck]
    aggregate: dict

    @property
    def failures(self) -> int:
        return sum(1 for e in self.entries if not e.passed())

    def summary(self) -> str:
        lines = [
            f"entries checked: {len(self.entries)}  failures: {self.failures}",
            f"aggregate: {json.dumps(self.aggregate, sort_keys=True)}",
        ]
        for entry in self.entries:
            if not entry.passed():
                lines.append(f"  FAIL {entry.synthetic_id}: {'; '.join(entry.notes)}")
        return "\n".join(lines)


def _find_by_stem(directory: Path, stem: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = directory / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def verify_run(
    out_root: str | Path,
    source_root: str | Path,
    layout: str,
    class_map: ClassMap,
) -> QAReport:
    """Re-verify a finished run against its source dataset."""
    out_root = Path(out_root)
    source_root = Path(source_root)
    manifest_path = out_root / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigError(f"no manifest at {manifest_path}")
    entries = load_manifest(manifest_path)

    checks: list[EntryCheck] = []
    d1_diffs: list[float] = []
    d2_changed: list[float] = []
    for entry in entries:
        notes: list[str] = []
        label_ok = dims_ok = False
        outside_ok: bool | None = None if entry.path_tag == "d1" else False

        copied_label = out_root / entry.label_path
        source_label = _find_by_stem(source_root / "labels", entry.source_id)
        source_image_path = _find_by_stem(source_root / "images", entry.source_id)
        synthetic_path = out_root / entry.image_path

        if source_label is None:
            notes.append(f"source label for {entry.source_id} not found")
        elif not copied_label.exists():
            notes.append(f"copied label {entry.label_path} missing")
        else:
            label_ok = sha256_file(copied_label) == sha256_file(source_label)
            if not label_ok:
                notes.append("label bytes differ from source")

        if not synthetic_path.exists():
            notes.append(f"synthetic image {entry.image_path} missing")
        elif source_label is not None:
            synthetic = load_rgb(synthetic_path)
            label = read_label(source_label, layout, class_map)
            dims_ok = synthetic.shape[:2] == label.shape
            if not dims_ok:
                notes.append(
                    f"dims {synthetic.shape[:2]} differ from label {label.shape}"
                )
            if source_image_path is None:
                notes.append(f"source image for {entry.source_id} not found")
            elif dims_ok:
                source = load_rgb(source_image_path)
                if entry.path_tag == "d1":
                    d1_diffs.append(
                        float(
                            np.abs(
                                synthetic.astype(np.int16) - source.astype(np.int16)
                            ).mean()
                        )
                    )
                else:
                    masks = extract_class_masks(label, class_map)
                    covered = union(masks, shape=label.shape).data.astype(bool)
                    outside_equal = (synthetic == source) | covered[..., None]
                    outside_ok = bool(outside_equal.all())
                    if not outside_ok:
                        notes.append("pixels changed outside the class-mask union")
                    changed = (synthetic != source).any(axis=2)
                    d2_changed.append(float(changed.mean()))

        checks.append(
            EntryCheck(
                synthetic_id=entry.synthetic_id,
                path_tag=entry.path_tag,
                label_digest_match=label_ok,
                dims_match=dims_ok,
                outside_mask_unchanged=outside_ok,
                notes=notes,
            )
        )

    aggregate = {
        "mean_abs_pixel_diff_d1": float(np.mean(d1_diffs)) if d1_diffs else None,
        "changed_pixel_ratio_d2": float(np.mean(d2_changed)) if d2_changed else None,
    }
    return QAReport(entries=checks, aggregate=aggregate)


def write_qa_report(report: QAReport, out_root: str | Path) -> Path:
    path = Path(out_root) / QA_REPORT_NAME
    payload = {
        "entries": [asdict(e) for e in report.entries],
        "aggregate": report.aggregate,
        "failures": report.failures,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return path
