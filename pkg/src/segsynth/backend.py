"""Generation-backend contract: request/response types, a deterministic mock,
and the HTTP client for a remote worker.

The mock is a pure function of its request, so runs are byte-reproducible
and every pipeline contract can be tested without a model server. It
quantizes the prior to 8 bits before computing, exactly as the wire does,
which keeps in-process and over-HTTP outputs byte-identical.
"""

from __future__ import annotations

import hashlib
import logging
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
import requests as _requests

from .errors import ConfigError, ProtocolError, TransportError
from .mask_ops import BinaryMask
from .prompting import PromptSpec
from .raster import quantize_unit, resize_rgb_u8, round_half_up
from .visual_prior import EdgeParams, VisualPrior, edges_from_image

logger = logging.getLogger(__name__)

CAPABILITIES = ("img2img", "inpaint", "caption", "prior")


def _check_out_dims(width: int, height: int) -> None:
    if width <= 0 or height <= 0:
        raise ConfigError(f"output dimensions must be positive, got {width}x{height}")
    if width % 8 or height % 8:
        raise ConfigError(f"output dimensions must be multiples of 8, got {width}x{height}")


@dataclass
class Img2ImgRequest:
    image: np.ndarray
    prior: VisualPrior
    prompt: PromptSpec
    seed: int
    out_width: int
    out_height: int
    strength: float = 0.75
    steps: int = 30
    guidance_scale: float = 7.5

    def __post_init__(self) -> None:
        _check_out_dims(self.out_width, self.out_height)
        if self.prior.shape != (self.out_height, self.out_width):
            raise ConfigError(
                f"prior shape {self.prior.shape} != requested output "
                f"{(self.out_height, self.out_width)}"
            )
        if not (0.0 < self.strength <= 1.0):
            raise ConfigError(f"strength must be in (0, 1], got {self.strength}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.guidance_scale <= 0:
            raise ConfigError(f"guidance_scale must be > 0, got {self.guidance_scale}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class InpaintRequest(Img2ImgRequest):
    mask: BinaryMask = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.mask is None:
            raise ConfigError("inpaint request needs a mask")
        if self.mask.shape != (self.out_height, self.out_width):
            raise ConfigError(
                f"mask shape {self.mask.shape} != requested output "
                f"{(self.out_height, self.out_width)}"
            )
        if not self.mask.data.any():
            raise ProtocolError("inpaint mask selects no pixels")


@dataclass
class GenResponse:
    image: np.ndarray
    seed_used: int
    backend_info: str


@dataclass
class Health:
    status: str
    capabilities: list[str]


def _stream_rng(kind: bytes, seed: int, prompt_text: str) -> np.random.Generator:
    digest = hashlib.blake2b(
        kind + seed.to_bytes(8, "big") + prompt_text.encode("utf-8"), digest_size=16
    ).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "big")))


class MockBackend:
    """Deterministic stand-in for a diffusion worker.

    img2img blends the reference toward a seeded noise field at the request
    strength and pulls pixels under strong prior edges toward white; inpaint
    fills the masked region with a seeded per-prompt texture. Outputs differ
    visibly from inputs yet are exactly reproducible.
    """

    info = "segsynth-mock/1.0"

    def img2img(self, req: Img2ImgRequest) -> GenResponse:
        h, w = req.out_height, req.out_width
        base = resize_rgb_u8(req.image, h, w).astype(np.float64)
        prior_u8 = quantize_unit(req.prior.data)
        rng = _stream_rng(b"img2img", req.seed, req.prompt.plain_text())
        noise = rng.integers(0, 256, size=(h, w, 3)).astype(np.float64)

        s = req.strength
        out = (1.0 - s) * base + s * noise
        pull = (s * 0.25) * (prior_u8.astype(np.float64) / 255.0)[..., None]
        out = out * (1.0 - pull) + 255.0 * pull
        image = round_half_up(np.clip(out, 0.0, 255.0)).astype(np.uint8)
        return GenResponse(image=image, seed_used=req.seed, backend_info=self.info)

    def inpaint(self, req: InpaintRequest) -> GenResponse:
        if not req.mask.data.any():
            raise ProtocolError("inpaint mask selects no pixels")
        h, w = req.out_height, req.out_width
        base = resize_rgb_u8(req.image, h, w)
        prompt_text = req.prompt.plain_text()
        color = hashlib.blake2b(
            b"color" + req.seed.to_bytes(8, "big") + prompt_text.encode("utf-8"),
            digest_size=3,
        ).digest()
        rng = _stream_rng(b"inpaint", req.seed, prompt_text)
        jitter = rng.integers(-40, 41, size=(h, w, 3))
        texture = np.clip(
            np.array(list(color), dtype=np.int64)[None, None, :] + jitter, 0, 255
        ).astype(np.uint8)

        out = base.copy()
        selected = req.mask.data.astype(bool)
        out[selected] = texture[selected]
        return GenResponse(image=out, seed_used=req.seed, backend_info=self.info)

    def caption(self, image: np.ndarray, class_names: list[str]) -> str:
        if not class_names:
            return "a photo"
        if len(class_names) == 1:
            return f"a photo of {class_names[0]}"
        listed = ", ".join(class_names[:-1]) + " and " + class_names[-1]
        return f"a photo of {listed}"

    def prior(self, image: np.ndarray, kind: str = "lineart") -> VisualPrior:
        if kind != "lineart":
            raise ProtocolError(f"unsupported prior kind {kind!r}")
        return edges_from_image(image, EdgeParams())

    def health(self) -> Health:
        return Health(status="ok", capabilities=list(CAPABILITIES))


class HttpBackend:
    """Client for a worker speaking the wire protocol over HTTP.

    Transport failures are retried with exponential backoff; a 4xx/5xx
    answer is a protocol rejection and is never retried.
    """

    def __init__(
        self,
        base_url: str,
        retries: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s
        self._session = _requests.Session()

    def _exchange(self, method: str, path: str, payload: dict | None) -> dict:
        url = self.base_url + path
        request_id = str(uuid.uuid4())
        headers = {"X-Request-Id": request_id}
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                if method == "GET":
                    resp = self._session.get(url, headers=headers, timeout=self.timeout_s)
                else:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.timeout_s
                    )
            except (_requests.ConnectionError, _requests.Timeout) as exc:
                last_exc = exc
                if attempt < self.retries:
                    delay = self.backoff_s * (2**attempt)
                    logger.warning("transport error on %s, retrying in %.2fs: %s", path, delay, exc)
                    time.sleep(delay)
                continue
            echoed = resp.headers.get("X-Request-Id")
            if echoed is not None and echoed != request_id:
                raise ProtocolError(
                    f"correlation id mismatch on {path}: sent {request_id}, got {echoed}"
                )
            if resp.status_code >= 400:
                try:
                    message = resp.json().get("error", resp.text)
                except ValueError:
                    message = resp.text
                raise ProtocolError(f"{path} rejected ({resp.status_code}): {message}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{path} returned unparseable body: {exc}") from exc
        raise TransportError(f"backend unreachable at {url}: {last_exc}")

    def _check_dims(self, resp: GenResponse, req: Img2ImgRequest, path: str) -> GenResponse:
        if resp.image.shape[:2] != (req.out_height, req.out_width):
            raise ProtocolError(
                f"{path} returned {resp.image.shape[:2]}, requested "
                f"{(req.out_height, req.out_width)}"
            )
        return resp

    def img2img(self, req: Img2ImgRequest) -> GenResponse:
        from . import wire

        body = self._exchange("POST", "/v1/img2img", wire.encode_img2img_request(req))
        return self._check_dims(wire.decode_gen_response(body), req, "/v1/img2img")

    def inpaint(self, req: InpaintRequest) -> GenResponse:
        from . import wire

        body = self._exchange("POST", "/v1/inpaint", wire.encode_inpaint_request(req))
        return self._check_dims(wire.decode_gen_response(body), req, "/v1/inpaint")

    def caption(self, image: np.ndarray, class_names: list[str]) -> str:
        from . import wire

        body = self._exchange(
            "POST", "/v1/caption", {"image": wire.encode_rgb(image), "class_names": class_names}
        )
        text = body.get("caption", "")
        if not text:
            raise ProtocolError("/v1/caption returned an empty caption")
        return text

    def prior(self, image: np.ndarray, kind: str = "lineart") -> VisualPrior:
        from . import wire

        body = self._exchange(
            "POST", "/v1/prior", {"image": wire.encode_rgb(image), "kind": kind}
        )
        return wire.decode_prior(body["prior"], source="image")

    def health(self) -> Health:
        body = self._exchange("GET", "/healthz", None)
        return Health(
            status=body.get("status", "unknown"),
            capabilities=list(body.get("capabilities", [])),
        )
