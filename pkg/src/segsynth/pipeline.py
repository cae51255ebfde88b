"""Orchestration: one whole-image regeneration (d1) and one per-class
inpainting pass with pixel compositing (d2) per source sample.

Everything downstream of the run seed is deterministic: per-request seeds
are derived by hashing (run_seed, sample id, path, variant, class), the d2
class loop runs in ascending class-id order, and compositing uses the
original undilated masks so pixels outside labeled objects stay bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backend import Img2ImgRequest, InpaintRequest, ProtocolError, TransportError
from .dataset_io import (
    MANIFEST_NAME,
    Dataset,
    ManifestEntry,
    Sample,
    sha256_file,
    write_manifest,
    write_synthetic_sample,
)
from .errors import ConfigError
from .mask_ops import BinaryMask, composite, dilate, extract_class_masks
from .prompting import (
    DEFAULT_CLASS_WEIGHT,
    build_class_aware_prompt,
    build_inpaint_prompt,
    build_simple_prompt,
    render_weighted_syntax,
)
from .raster import bilinear_resize, resize_rgb_u8
from .visual_prior import EdgeParams, blend, edges_from_image, prior_from_label, resize_prior

logger = logging.getLogger(__name__)


@dataclass
class GenParams:
    strength: float = 0.75
    steps: int = 30
    guidance_scale: float = 7.5


@dataclass
class GenResolution:
    width: int = 1024
    height: int = 1024


@dataclass
class PathsConfig:
    d1: bool = True
    d2: bool = True


@dataclass
class PipelineConfig:
    alpha: float = 0.8
    class_weight: float = DEFAULT_CLASS_WEIGHT
    boundary_width: int = 2
    edge_params: EdgeParams = field(default_factory=EdgeParams)
    inpaint_dilation_radius: int = 8
    gen_params: GenParams = field(default_factory=GenParams)
    gen_resolution: GenResolution = field(default_factory=GenResolution)
    run_seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    parallelism: int = 2
    variants_per_image: int = 1
    negative_prompt: str = ""
    use_backend_caption: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.class_weight < 1.0:
            raise ConfigError(f"class_weight must be >= 1, got {self.class_weight}")
        if self.boundary_width < 1:
            raise ConfigError(f"boundary_width must be >= 1, got {self.boundary_width}")
        if self.inpaint_dilation_radius < 0:
            raise ConfigError(
                f"inpaint_dilation_radius must be >= 0, got {self.inpaint_dilation_radius}"
            )
        if not (self.paths.d1 or self.paths.d2):
            raise ConfigError("at least one of the d1/d2 paths must be enabled")
        if self.gen_resolution.width % 8 or self.gen_resolution.height % 8:
            raise ConfigError(
                "gen_resolution must be multiples of 8, got "
                f"{self.gen_resolution.width}x{self.gen_resolution.height}"
            )
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.variants_per_image < 1:
            raise ConfigError(f"variants_per_image must be >= 1, got {self.variants_per_image}")
        if not (0 <= self.run_seed < 2**64):
            raise ConfigError(f"run_seed must be an unsigned 64-bit integer, got {self.run_seed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        merged = asdict(cls())
        _deep_merge(merged, raw)
        return cls(
            alpha=merged["alpha"],
            class_weight=merged["class_weight"],
            boundary_width=merged["boundary_width"],
            edge_params=EdgeParams(**merged["edge_params"]),
            inpaint_dilation_radius=merged["inpaint_dilation_radius"],
            gen_params=GenParams(**merged["gen_params"]),
            gen_resolution=GenResolution(**merged["gen_resolution"]),
            run_seed=merged["run_seed"],
            paths=PathsConfig(**merged["paths"]),
            parallelism=merged["parallelism"],
            variants_per_image=merged["variants_per_image"],
            negative_prompt=merged["negative_prompt"],
            use_backend_caption=merged["use_backend_caption"],
        )

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _deep_merge(base: dict, extra: dict, prefix: str = "") -> None:
    for key, value in extra.items():
        if key not in base:
            raise ConfigError(f"unknown config field: {prefix}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _deep_merge(base[key], value, prefix=f"{prefix}{key}.")
        elif isinstance(base[key], dict):
            raise ConfigError(f"config field {prefix}{key} must be a mapping")
        else:
            base[key] = value


def derive_seed(
    run_seed: int,
    sample_id: str,
    path_tag: str,
    variant_index: int,
    class_id: int | None = None,
) -> int:
    material = f"v1|{run_seed}|{sample_id}|{path_tag}|{variant_index}|{class_id}"
    digest = hashlib.blake2b(material.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class RunError:
    sample_id: str
    path_tag: str
    message: str


@dataclass
class RunCounts:
    samples: int = 0
    d1_ok: int = 0
    d2_ok: int = 0
    failed: int = 0
    skipped: int = 0


@dataclass
class RunReport:
    counts: RunCounts
    errors: list[RunError]
    wall_clock_s: float
    config_digest: str

    def ok(self) -> bool:
        return self.counts.failed == 0 and not self.errors

    def summary(self) -> str:
        c = self.counts
        lines = [
            f"samples: {c.samples}  d1 ok: {c.d1_ok}  d2 ok: {c.d2_ok}  "
            f"failed: {c.failed}  skipped: {c.skipped}",
            f"wall clock: {self.wall_clock_s:.2f}s  config digest: {self.config_digest[:12]}",
        ]
        for err in self.errors:
            lines.append(f"  error [{err.sample_id}/{err.path_tag}]: {err.message}")
        return "\n".join(lines)


def resolve_caption(sample: Sample, backend, cfg: PipelineConfig, capabilities: list[str],
                    class_names: list[str]) -> str | None:
    if sample.caption:
        return sample.caption
    if cfg.use_backend_caption and "caption" in capabilities:
        try:
            return backend.caption(sample.image, class_names)
        except (TransportError, ProtocolError) as exc:
            logger.warning("caption fetch failed for %s, continuing without: %s", sample.id, exc)
    return None


def _blended_prior(sample: Sample, cfg: PipelineConfig, void_id: int | None):
    vi = edges_from_image(sample.image, cfg.edge_params)
    vs = prior_from_label(sample.label, cfg.boundary_width, void_id=void_id)
    return blend(vi, vs, cfg.alpha)


def _resize_mask(mask: BinaryMask, out_h: int, out_w: int) -> BinaryMask:
    resized = bilinear_resize(mask.data.astype(np.float64), out_h, out_w)
    return BinaryMask((resized >= 0.5).astype(np.uint8), class_id=mask.class_id)


def generate_d1(
    sample: Sample,
    backend,
    cfg: PipelineConfig,
    class_map,
    caption: str | None,
    variant: int = 0,
) -> tuple[np.ndarray, dict]:
    """Whole-image regeneration guided by the blended prior and the
    class-aware prompt; returns the image resized back to sample dims."""
    class_names = [class_map.name_of(c) for c in sample.classes]
    if caption:
        prompt = build_class_aware_prompt(caption, class_names, cfg.class_weight)
    else:
        prompt = build_simple_prompt(class_names, cfg.class_weight)
    if cfg.negative_prompt:
        prompt.negative_text = cfg.negative_prompt

    prior = _blended_prior(sample, cfg, class_map.void_id)
    out_w, out_h = cfg.gen_resolution.width, cfg.gen_resolution.height
    seed = derive_seed(cfg.run_seed, sample.id, "d1", variant)
    req = Img2ImgRequest(
        image=resize_rgb_u8(sample.image, out_h, out_w),
        prior=resize_prior(prior, out_h, out_w),
        prompt=prompt,
        seed=seed,
        out_width=out_w,
        out_height=out_h,
        strength=cfg.gen_params.strength,
        steps=cfg.gen_params.steps,
        guidance_scale=cfg.gen_params.guidance_scale,
    )
    resp = backend.img2img(req)
    image = resize_rgb_u8(resp.image, *sample.label.shape)
    meta = {
        "seed": seed,
        "prompt_rendered": render_weighted_syntax(prompt),
        "backend_info": resp.backend_info,
    }
    return image, meta


def generate_d2(
    sample: Sample,
    backend,
    cfg: PipelineConfig,
    class_map,
    caption: str | None,
    variant: int = 0,
) -> tuple[np.ndarray, dict, list[RunError]]:
    """Sequential per-class inpainting merged over the source image.

    Request masks are dilated for context and resized to the generation
    resolution; compositing always uses the original undilated masks, so a
    failed class simply keeps its source pixels.
    """
    masks = extract_class_masks(sample.label, class_map)
    if not masks:
        raise ConfigError(f"sample {sample.id} has no labeled classes for the d2 path")

    prior = _blended_prior(sample, cfg, class_map.void_id)
    out_w, out_h = cfg.gen_resolution.width, cfg.gen_resolution.height
    prior_resized = resize_prior(prior, out_h, out_w)
    image_resized = resize_rgb_u8(sample.image, out_h, out_w)

    patches: list[tuple[np.ndarray, BinaryMask]] = []
    class_errors: list[RunError] = []
    prompts_rendered: list[str] = []
    backend_info = ""
    for mask in masks:  # ascending class_id from extract_class_masks
        class_name = class_map.name_of(mask.class_id)
        prompt = build_inpaint_prompt(class_name, caption, cfg.class_weight)
        if cfg.negative_prompt:
            prompt.negative_text = cfg.negative_prompt
        seed = derive_seed(cfg.run_seed, sample.id, "d2", variant, mask.class_id)
        request_mask = _resize_mask(
            dilate(mask, cfg.inpaint_dilation_radius), out_h, out_w
        )
        if not request_mask.data.any():
            class_errors.append(
                RunError(sample.id, "d2", f"class {mask.class_id}: mask empty after resize")
            )
            continue
        try:
            resp = backend.inpaint(
                InpaintRequest(
                    image=image_resized,
                    prior=prior_resized,
                    prompt=prompt,
                    seed=seed,
                    out_width=out_w,
                    out_height=out_h,
                    strength=cfg.gen_params.strength,
                    steps=cfg.gen_params.steps,
                    guidance_scale=cfg.gen_params.guidance_scale,
                    mask=request_mask,
                )
            )
        except (TransportError, ProtocolError) as exc:
            class_errors.append(
                RunError(sample.id, "d2", f"class {mask.class_id}: {exc}")
            )
            continue
        patch = resize_rgb_u8(resp.image, *sample.label.shape)
        patches.append((patch, mask))
        prompts_rendered.append(render_weighted_syntax(prompt))
        backend_info = resp.backend_info

    merged = composite(sample.image, patches)
    meta = {
        "seed": derive_seed(cfg.run_seed, sample.id, "d2", variant),
        "prompt_rendered": " | ".join(prompts_rendered),
        "backend_info": backend_info,
    }
    return merged, meta, class_errors


def _process_sample(
    sample: Sample,
    backend,
    cfg: PipelineConfig,
    dataset: Dataset,
    out_root: Path,
    capabilities: list[str],
) -> tuple[list[ManifestEntry], list[RunError], int, int]:
    entries: list[ManifestEntry] = []
    errors: list[RunError] = []
    failed = 0
    skipped = 0
    class_map = dataset.class_map
    class_names = [class_map.name_of(c) for c in sample.classes]
    caption = resolve_caption(sample, backend, cfg, capabilities, class_names)

    for variant in range(cfg.variants_per_image):
        if cfg.paths.d1:
            try:
                image, meta = generate_d1(sample, backend, cfg, class_map, caption, variant)
                entries.append(
                    write_synthetic_sample(
                        out_root, sample, image, "d1", meta["seed"],
                        meta["prompt_rendered"], cfg.alpha, meta["backend_info"], variant,
                    )
                )
            except (TransportError, ProtocolError, OSError) as exc:
                failed += 1
                errors.append(RunError(sample.id, "d1", str(exc)))
        if cfg.paths.d2:
            if not sample.classes:
                skipped += 1
                logger.info("sample %s has no classes; d2 skipped", sample.id)
                continue
            try:
                image, meta, class_errors = generate_d2(
                    sample, backend, cfg, class_map, caption, variant
                )
                errors.extend(class_errors)
                entries.append(
                    write_synthetic_sample(
                        out_root, sample, image, "d2", meta["seed"],
                        meta["prompt_rendered"], cfg.alpha, meta["backend_info"], variant,
                    )
                )
            except (TransportError, ProtocolError, OSError) as exc:
                failed += 1
                errors.append(RunError(sample.id, "d2", str(exc)))
    return entries, errors, failed, skipped


def run(cfg: PipelineConfig, dataset: Dataset, backend, out_root: str | Path) -> RunReport:
    """Produce every enabled (path, variant) output for every sample, write
    the manifest, and re-verify label digests from disk."""
    started = time.monotonic()
    health = backend.health()  # TransportError propagates: startup failure
    capabilities = list(health.capabilities)
    for flag, tag, capability in (
        (cfg.paths.d1, "d1", "img2img"),
        (cfg.paths.d2, "d2", "inpaint"),
    ):
        if flag and capability not in capabilities:
            raise ConfigError(
                f"backend does not advertise {capability!r}, required by the {tag} path; "
                f"capabilities: {capabilities}"
            )

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    errors: list[RunError] = []
    counts = RunCounts(samples=len(dataset.samples))
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        futures = [
            pool.submit(
                _process_sample, sample, backend, cfg, dataset, out_root, capabilities
            )
            for sample in dataset.samples
        ]
        for future in futures:
            sample_entries, sample_errors, failed, skipped = future.result()
            entries.extend(sample_entries)
            errors.extend(sample_errors)
            counts.failed += failed
            counts.skipped += skipped

    counts.d1_ok = sum(1 for e in entries if e.path_tag == "d1")
    counts.d2_ok = sum(1 for e in entries if e.path_tag == "d2")

    # label fidelity re-check, from disk
    sources = {s.id: s.label_path for s in dataset.samples}
    for entry in entries:
        copied = out_root / entry.label_path
        original = sources.get(entry.source_id)
        if original is None or sha256_file(copied) != sha256_file(original):
            counts.failed += 1
            errors.append(
                RunError(entry.source_id, entry.path_tag, "copied label digest mismatch")
            )

    entries.sort(key=lambda e: (e.source_id, e.path_tag, e.synthetic_id))
    write_manifest(entries, out_root / MANIFEST_NAME)

    return RunReport(
        counts=counts,
        errors=errors,
        wall_clock_s=time.monotonic() - started,
        config_digest=cfg.digest(),
    )
