"""Differentiable color-histogram loss, embedding similarity losses, and the
pluggable embedding backend (real encoder or deterministic test doubles)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import BackendFailure, DegenerateImage, OutOfRange, ZeroVector

HIST_BINS = 64
HIST_TAU = 0.02
HIST_BOUNDARY = 3.0
HIST_EPS = 1e-6
INTENSITY_THRESHOLD = 1e-6

CLIP_WEIGHTS_ENV = "SCENESTYLE_CLIP_WEIGHTS"


def _image_tensor(image) -> torch.Tensor:
    if isinstance(image, torch.Tensor):
        t = image
    else:
        t = torch.as_tensor(np.asarray(image, dtype=np.float64))
    if t.ndim != 3 or t.shape[-1] != 3:
        raise OutOfRange("image must have shape (h,w,3)")
    return t


# ---------------------------------------------------------------------------
# color histogram (log-chroma RGB-uv, intensity weighted)


def soft_color_histogram(
    image,
    bins: int = HIST_BINS,
    tau: float = HIST_TAU,
    boundary: float = HIST_BOUNDARY,
) -> torch.Tensor:
    """Differentiable (3, bins, bins) color histogram over log-chroma (u,v).

    Per anchor channel c with the other channels (c1, c2):
    u = log((c+eps)/(c1+eps)), v = log((c+eps)/(c2+eps)), clamped into the
    grid span, accumulated with an inverse-quadratic kernel of bandwidth tau
    and weighted by pixel intensity sqrt(r^2+g^2+b^2). Pixels with intensity
    below 1e-6 are excluded; the total mass is normalized to 1.
    """
    img = _image_tensor(image)
    pixels = img.reshape(-1, 3)
    intensity = torch.sqrt((pixels**2).sum(dim=1) + 0.0)
    include = intensity > INTENSITY_THRESHOLD
    if not bool(include.any()):
        raise DegenerateImage("all pixels excluded from the histogram")
    pixels = pixels[include]
    intensity = intensity[include]

    centers = torch.linspace(-boundary, boundary, bins, dtype=pixels.dtype)
    eps = HIST_EPS
    hist_channels = []
    order = ((0, 1, 2), (1, 0, 2), (2, 0, 1))
    for anchor, c1, c2 in order:
        u = torch.log((pixels[:, anchor] + eps) / (pixels[:, c1] + eps))
        v = torch.log((pixels[:, anchor] + eps) / (pixels[:, c2] + eps))
        u = torch.clamp(u, -boundary, boundary)
        v = torch.clamp(v, -boundary, boundary)
        ku = 1.0 / (1.0 + ((u[:, None] - centers[None, :]) / tau) ** 2)
        kv = 1.0 / (1.0 + ((v[:, None] - centers[None, :]) / tau) ** 2)
        hist_channels.append((intensity[:, None] * ku).T @ kv)
    hist = torch.stack(hist_channels)
    return hist / hist.sum()


def hist_distance(h1: torch.Tensor, h2: torch.Tensor) -> torch.Tensor:
    """L2 norm of the difference of element-wise square roots (Hellinger-style);
    in [0, sqrt(2)] for unit-mass histograms."""
    a = torch.sqrt(torch.clamp(h1, min=0.0))
    b = torch.sqrt(torch.clamp(h2, min=0.0))
    return torch.linalg.vector_norm(a - b)


def hist_loss(image, target_image) -> torch.Tensor:
    return hist_distance(soft_color_histogram(image), soft_color_histogram(target_image))


# ---------------------------------------------------------------------------
# embedding backends


class EmbeddingBackend:
    """Paired image/text encoders into one unit-comparable vector space."""

    dim: int = 0

    def embed_image(self, image) -> torch.Tensor:
        raise NotImplementedError

    def embed_text(self, text: str) -> torch.Tensor:
        raise NotImplementedError


def _normalize(vec: torch.Tensor) -> torch.Tensor:
    norm = torch.linalg.vector_norm(vec)
    return vec / torch.clamp(norm, min=1e-30)


def _masked_mean_color(image) -> torch.Tensor:
    """Mean RGB over pixels bright enough to count as content (the histogram's
    intensity rule), so black-background renders embed as the foreground mean."""
    img = _image_tensor(image)
    pixels = img.reshape(-1, 3)
    intensity = torch.sqrt((pixels.detach() ** 2).sum(dim=1))
    include = intensity > INTENSITY_THRESHOLD
    if not bool(include.any()):
        return torch.zeros(3, dtype=pixels.dtype)
    return pixels[include].mean(dim=0)


def _lookup(table: dict, text: str, default):
    """Longest table key contained in `text` wins; ties break lexicographically."""
    best_key = None
    for key in sorted(table):
        if key in text and (best_key is None or len(key) > len(best_key)):
            best_key = key
    return table[best_key] if best_key is not None else default


@dataclass
class MockOracleBackend(EmbeddingBackend):
    """Deterministic test double: images embed as their (bright-pixel) mean
    color with an appended constant 1; prompts map through a substring table.
    Unknown prompts map to gray."""

    color_table: dict = field(default_factory=dict)
    default_color: tuple = (0.5, 0.5, 0.5)
    dim: int = 4

    def embed_image(self, image) -> torch.Tensor:
        mean = _masked_mean_color(image)
        one = torch.ones(1, dtype=mean.dtype)
        return _normalize(torch.cat([mean, one]))

    def embed_text(self, text: str) -> torch.Tensor:
        color = _lookup(self.color_table, text, self.default_color)
        vec = torch.tensor([*color, 1.0], dtype=torch.float64)
        return _normalize(vec)


@dataclass
class BandOracleBackend(EmbeddingBackend):
    """Deterministic test double with vertical spatial structure.

    The foreground's pixel rows are split into `bands` equal horizontal bands
    (top first); the image embeds as the concatenated per-band mean colors
    plus a constant 1. Prompts map to per-band color lists, so optimization
    pulls geometry in different image bands toward different targets.
    """

    band_table: dict = field(default_factory=dict)
    bands: int = 2
    default_color: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        self.dim = 3 * self.bands + 1
        for key, colors in self.band_table.items():
            if len(colors) != self.bands:
                raise BackendFailure(f"band table entry {key!r} must list {self.bands} colors")

    def embed_image(self, image) -> torch.Tensor:
        img = _image_tensor(image)
        h = img.shape[0]
        intensity = torch.sqrt((img.detach() ** 2).sum(dim=-1))
        bright = intensity > INTENSITY_THRESHOLD
        rows = torch.nonzero(bright.any(dim=1)).flatten()
        parts = []
        if rows.numel() == 0:
            parts = [torch.zeros(3, dtype=img.dtype) for _ in range(self.bands)]
        else:
            r0, r1 = int(rows.min()), int(rows.max()) + 1
            edges = np.linspace(r0, r1, self.bands + 1)
            for b in range(self.bands):
                lo, hi = int(np.floor(edges[b])), int(np.ceil(edges[b + 1]))
                band = img[lo:hi].reshape(-1, 3)
                band_mask = bright[lo:hi].reshape(-1)
                if bool(band_mask.any()):
                    parts.append(band[band_mask].mean(dim=0))
                else:
                    parts.append(torch.zeros(3, dtype=img.dtype))
        one = torch.ones(1, dtype=img.dtype)
        return _normalize(torch.cat(parts + [one]))

    def embed_text(self, text: str) -> torch.Tensor:
        colors = _lookup(self.band_table, text, [self.default_color] * self.bands)
        flat = [float(c) for color in colors for c in color]
        return _normalize(torch.tensor(flat + [1.0], dtype=torch.float64))


class ClipEmbeddingBackend(EmbeddingBackend):
    """Adapter around a pretrained ViT-B/32 joint image/text encoder.

    Weights load from `weights_path` (or the SCENESTYLE_CLIP_WEIGHTS env var);
    gradients flow through embed_image. Text embeddings are cached.
    """

    dim = 512
    _MEAN = (0.48145466, 0.4578275, 0.40821073)
    _STD = (0.26862954, 0.26130258, 0.27577711)

    def __init__(self, weights_path: str | None = None, device: str = "cpu"):
        path = weights_path or os.environ.get(CLIP_WEIGHTS_ENV)
        if not path:
            raise BackendFailure(
                f"no encoder weights: pass weights_path or set {CLIP_WEIGHTS_ENV}"
            )
        try:
            from transformers import CLIPModel, CLIPTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise BackendFailure(f"transformers unavailable: {exc}") from exc
        try:
            self.model = CLIPModel.from_pretrained(path).to(device).eval()
            self.tokenizer = CLIPTokenizer.from_pretrained(path)
        except Exception as exc:  # pragma: no cover - depends on local weights
            raise BackendFailure(f"cannot load encoder weights from {path}: {exc}") from exc
        self.device = device
        self._text_cache: dict[str, torch.Tensor] = {}
        self.input_resolution = 224

    def embed_image(self, image) -> torch.Tensor:
        img = _image_tensor(image).to(torch.float32)
        chw = img.permute(2, 0, 1).unsqueeze(0)
        if chw.shape[-1] != self.input_resolution or chw.shape[-2] != self.input_resolution:
            chw = torch.nn.functional.interpolate(
                chw, size=(self.input_resolution, self.input_resolution),
                mode="bilinear", align_corners=False,
            )
        mean = torch.tensor(self._MEAN).view(1, 3, 1, 1)
        std = torch.tensor(self._STD).view(1, 3, 1, 1)
        feats = self.model.get_image_features(pixel_values=(chw - mean) / std)
        return feats[0]

    def embed_text(self, text: str) -> torch.Tensor:
        if text not in self._text_cache:
            tokens = self.tokenizer([text], padding=True, return_tensors="pt")
            with torch.no_grad():
                feats = self.model.get_text_features(**tokens)
            self._text_cache[text] = feats[0]
        return self._text_cache[text]


def backend_from_config(cfg: dict | str | None) -> EmbeddingBackend:
    """Build a backend from a config mapping (or a bare kind string)."""
    if cfg is None:
        cfg = {"kind": "mock"}
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    kind = cfg.get("kind", "mock")
    if kind == "mock":
        return MockOracleBackend(color_table=dict(cfg.get("color_table", {})))
    if kind == "band":
        return BandOracleBackend(
            band_table={k: [tuple(c) for c in v] for k, v in cfg.get("band_table", {}).items()},
            bands=int(cfg.get("bands", 2)),
        )
    if kind == "real":
        return ClipEmbeddingBackend(weights_path=cfg.get("weights_path"))
    raise BackendFailure(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# similarity losses


def clip_loss(image, text: str, backend: EmbeddingBackend) -> torch.Tensor:
    """1 - cosine similarity between the image and text embeddings; in [0,2]."""
    img_vec = backend.embed_image(image)
    txt_vec = backend.embed_text(text).to(img_vec.dtype)
    norm_i = torch.linalg.vector_norm(img_vec)
    norm_t = torch.linalg.vector_norm(txt_vec)
    if float(norm_i.detach()) < 1e-12 or float(norm_t.detach()) < 1e-12:
        raise ZeroVector("embedding norm below 1e-12")
    return 1.0 - (img_vec @ txt_vec) / (norm_i * norm_t)


def clip_scene_loss(
    object_renders: list[list],
    object_prompts: list[str],
    scene_render,
    scene_prompt: str,
    lambda2: float,
    lambda3: float,
    backend: EmbeddingBackend,
) -> torch.Tensor:
    """lambda2 * sum_i mean_views clip(I_Mi, T_i) + lambda3 * clip(I, T)."""
    if len(object_renders) != len(object_prompts):
        raise ValueError("one render list per object prompt required")
    total = torch.zeros((), dtype=torch.float64)
    if lambda2 > 0:
        for views, prompt in zip(object_renders, object_prompts):
            if not views:
                raise ValueError("each object needs at least one view")
            term = sum(clip_loss(view, prompt, backend) for view in views) / len(views)
            total = total + lambda2 * term
    if lambda3 > 0:
        if scene_render is None:
            raise ValueError("scene render required when lambda3 > 0")
        total = total + lambda3 * clip_loss(scene_render, scene_prompt, backend)
    return total
