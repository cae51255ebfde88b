"""Command-line entry point.

Exit codes: 0 success, 1 generation/verification failures, 2 configuration
error, 3 transport error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import pipeline, qa
from .backend import HttpBackend, MockBackend
from .dataset_io import (
    binary_class_map,
    load_class_map,
    open_dataset,
    read_label,
    voc_class_map,
)
from .errors import ConfigError, SegsynthError, TransportError
from .prompting import build_class_aware_prompt, build_simple_prompt, render_weighted_syntax
from .raster import load_rgb, quantize_unit, save_gray_png
from .serve_mock import MockServer
from .visual_prior import blend, edges_from_image, prior_from_label

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3

INVOCATION_KEYS = ("data_root", "out_root", "backend", "layout", "class_map")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping at top level")
    return raw


def _resolve_class_map(layout: str, class_map_path: str | None):
    if class_map_path:
        return load_class_map(class_map_path)
    if layout == "voc-indexed":
        return voc_class_map()
    return binary_class_map()


def _make_backend(spec: str):
    if spec == "mock":
        return MockBackend()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec)
    raise ConfigError(f"--backend must be 'mock' or an http(s) URL, got {spec!r}")


def _cmd_generate(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    invocation = {k: file_cfg.pop(k) for k in INVOCATION_KEYS if k in file_cfg}

    overrides: dict = {}
    if args.seed is not None:
        overrides["run_seed"] = args.seed
    if args.variants is not None:
        overrides["variants_per_image"] = args.variants
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.paths is not None:
        overrides["paths"] = {"d1": args.paths in ("d1", "both"),
                              "d2": args.paths in ("d2", "both")}
    merged = dict(file_cfg)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    cfg = pipeline.PipelineConfig.from_dict(merged)

    data_root = args.data_root or invocation.get("data_root")
    out_root = args.out_root or invocation.get("out_root")
    if not data_root:
        raise ConfigError("data root required (--data-root or config data_root)")
    if not out_root:
        raise ConfigError("output root required (--out-root or config out_root)")
    layout = args.layout or invocation.get("layout") or "voc-indexed"
    backend = _make_backend(args.backend or invocation.get("backend") or "mock")
    class_map = _resolve_class_map(layout, args.class_map or invocation.get("class_map"))

    dataset = open_dataset(data_root, layout, class_map)
    if not dataset.samples:
        raise ConfigError(f"no usable samples under {data_root}")
    report = pipeline.run(cfg, dataset, backend, out_root)
    print(report.summary())
    return EXIT_OK if report.ok() else EXIT_FAILURES


def _cmd_verify(args: argparse.Namespace) -> int:
    class_map = _resolve_class_map(args.layout, args.class_map)
    report = qa.verify_run(args.out_root, args.source_root, args.layout, class_map)
    qa.write_qa_report(report, args.out_root)
    print(report.summary())
    return EXIT_OK if report.failures == 0 else EXIT_FAILURES


def _cmd_prior(args: argparse.Namespace) -> int:
    image_path, label_path = Path(args.image), Path(args.label)
    if not image_path.exists():
        raise ConfigError(f"image not found: {image_path}")
    if not label_path.exists():
        raise ConfigError(f"label not found: {label_path}")
    class_map = _resolve_class_map(args.layout, args.class_map)
    image = load_rgb(image_path)
    label = read_label(label_path, args.layout, class_map)

    vi = edges_from_image(image)
    vs = prior_from_label(label, args.boundary_width, void_id=class_map.void_id)
    vstar = blend(vi, vs, args.alpha)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, prior in (("vi", vi), ("vs", vs), ("vstar", vstar)):
        save_gray_png(out_dir / f"{image_path.stem}_{name}.png", quantize_unit(prior.data))
    print(f"wrote {image_path.stem}_{{vi,vs,vstar}}.png to {out_dir}")
    return EXIT_OK


def _cmd_prompt(args: argparse.Namespace) -> int:
    class_names = [c.strip() for c in args.classes.split(",") if c.strip()]
    if args.caption:
        spec = build_class_aware_prompt(args.caption, class_names, args.weight)
    else:
        spec = build_simple_prompt(class_names, args.weight)
    print(spec.plain_text())
    print(render_weighted_syntax(spec))
    return EXIT_OK


def _cmd_serve_mock(args: argparse.Namespace) -> int:
    try:
        server = MockServer(host=args.host, port=args.port)
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    print(f"mock backend listening on {server.base_url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segsynth",
        description="Generate synthetic segmentation training data from a real dataset",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the generation pipeline")
    gen.add_argument("--config", help="YAML config file")
    gen.add_argument("--data-root", help="dataset root with images/ and labels/")
    gen.add_argument("--out-root", help="output root for synthetic data")
    gen.add_argument("--backend", help="'mock' or worker base URL")
    gen.add_argument("--seed", type=int, help="run seed")
    gen.add_argument("--paths", choices=("d1", "d2", "both"), help="which paths to produce")
    gen.add_argument("--variants", type=int, help="synthetic variants per source image")
    gen.add_argument("--alpha", type=float, help="prior blending coefficient")
    gen.add_argument("--layout", choices=("voc-indexed", "binary-masks"))
    gen.add_argument("--class-map", help="JSON class map file")
    gen.set_defaults(func=_cmd_generate)

    ver = sub.add_parser("verify", help="verify a finished run from disk")
    ver.add_argument("--out-root", required=True)
    ver.add_argument("--source-root", required=True)
    ver.add_argument("--layout", choices=("voc-indexed", "binary-masks"),
                     default="voc-indexed")
    ver.add_argument("--class-map", help="JSON class map file")
    ver.set_defaults(func=_cmd_verify)

    pri = sub.add_parser("prior", help="dump visual priors for one sample")
    pri.add_argument("--image", required=True)
    pri.add_argument("--label", required=True)
    pri.add_argument("--alpha", type=float, default=0.8)
    pri.add_argument("--out", required=True)
    pri.add_argument("--layout", choices=("voc-indexed", "binary-masks"),
                     default="voc-indexed")
    pri.add_argument("--class-map", help="JSON class map file")
    pri.add_argument("--boundary-width", type=int, default=2)
    pri.set_defaults(func=_cmd_prior)

    pro = sub.add_parser("prompt", help="print prompt construction for a class list")
    pro.add_argument("--caption", default="")
    pro.add_argument("--classes", required=True, help="comma-separated class names")
    pro.add_argument("--weight", type=float, default=1.21)
    pro.set_defaults(func=_cmd_prompt)

    srv = sub.add_parser("serve-mock", help="serve the deterministic mock over HTTP")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8787)
    srv.set_defaults(func=_cmd_serve_mock)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except SegsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
