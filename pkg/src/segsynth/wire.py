"""JSON wire format for the generation protocol.

Binary payloads are base64-encoded lossless PNG: RGB for images, 8-bit
grayscale for priors, 0/255 grayscale for masks. Prompt weights travel as
structured (text, weight) segments so the server chooses its own emphasis
mechanism. encode(decode(x)) == x for every message this module produces.
"""

from __future__ import annotations

import base64

import numpy as np

from .backend import GenResponse, Img2ImgRequest, InpaintRequest
from .errors import ProtocolError
from .mask_ops import BinaryMask
from .prompting import PromptSegment, PromptSpec
from .raster import decode_png, encode_png, quantize_unit
from .visual_prior import VisualPrior


def encode_rgb(image: np.ndarray) -> str:
    return base64.b64encode(encode_png(image, mode="RGB")).decode("ascii")


def decode_rgb(payload: str) -> np.ndarray:
    array = decode_png(base64.b64decode(payload))
    if array.ndim != 3 or array.shape[2] != 3 or array.dtype != np.uint8:
        raise ProtocolError(f"expected 8-bit RGB payload, got shape {array.shape}")
    return array


def encode_prior(prior: VisualPrior) -> str:
    return base64.b64encode(encode_png(quantize_unit(prior.data), mode="L")).decode("ascii")


def decode_prior(payload: str, source: str = "blended") -> VisualPrior:
    array = decode_png(base64.b64decode(payload))
    if array.ndim != 2 or array.dtype != np.uint8:
        raise ProtocolError(f"expected 8-bit grayscale payload, got shape {array.shape}")
    return VisualPrior(array.astype(np.float64) / 255.0, source=source)


def encode_mask(mask: BinaryMask) -> str:
    return base64.b64encode(encode_png(mask.data * np.uint8(255), mode="L")).decode("ascii")


def decode_mask(payload: str) -> BinaryMask:
    array = decode_png(base64.b64decode(payload))
    if array.ndim != 2 or array.dtype != np.uint8:
        raise ProtocolError(f"expected 8-bit mask payload, got shape {array.shape}")
    return BinaryMask((array >= 128).astype(np.uint8))


def encode_prompt(prompt: PromptSpec) -> dict:
    return {
        "segments": [{"text": s.text, "weight": s.weight} for s in prompt.segments],
        "negative": prompt.negative_text,
    }


def decode_prompt(payload: dict) -> PromptSpec:
    segments = [
        PromptSegment(text=str(s["text"]), weight=float(s["weight"]))
        for s in payload.get("segments", [])
    ]
    return PromptSpec(segments=segments, negative_text=payload.get("negative"))


def encode_img2img_request(req: Img2ImgRequest) -> dict:
    return {
        "image": encode_rgb(req.image),
        "prior": encode_prior(req.prior),
        "prompt": encode_prompt(req.prompt),
        "strength": req.strength,
        "steps": req.steps,
        "guidance_scale": req.guidance_scale,
        "seed": req.seed,
        "width": req.out_width,
        "height": req.out_height,
    }


def decode_img2img_request(payload: dict) -> Img2ImgRequest:
    return Img2ImgRequest(
        image=decode_rgb(payload["image"]),
        prior=decode_prior(payload["prior"]),
        prompt=decode_prompt(payload["prompt"]),
        strength=float(payload["strength"]),
        steps=int(payload["steps"]),
        guidance_scale=float(payload["guidance_scale"]),
        seed=int(payload["seed"]),
        out_width=int(payload["width"]),
        out_height=int(payload["height"]),
    )


def encode_inpaint_request(req: InpaintRequest) -> dict:
    body = encode_img2img_request(req)
    body["mask"] = encode_mask(req.mask)
    return body


def decode_inpaint_request(payload: dict) -> InpaintRequest:
    return InpaintRequest(
        image=decode_rgb(payload["image"]),
        prior=decode_prior(payload["prior"]),
        prompt=decode_prompt(payload["prompt"]),
        strength=float(payload["strength"]),
        steps=int(payload["steps"]),
        guidance_scale=float(payload["guidance_scale"]),
        seed=int(payload["seed"]),
        out_width=int(payload["width"]),
        out_height=int(payload["height"]),
        mask=decode_mask(payload["mask"]),
    )


def encode_gen_response(resp: GenResponse) -> dict:
    return {
        "image": encode_rgb(resp.image),
        "seed_used": resp.seed_used,
        "backend_info": resp.backend_info,
    }


def decode_gen_response(payload: dict) -> GenResponse:
    return GenResponse(
        image=decode_rgb(payload["image"]),
        seed_used=int(payload["seed_used"]),
        backend_info=str(payload.get("backend_info", "")),
    )
