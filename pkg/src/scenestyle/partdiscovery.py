"""Texture-part discovery: iterate color assignment and segment merging until
the segment count stops decreasing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .core import OptimizerConfig, TriangleMesh, rgb_to_lab
from .errors import LabelMismatch, NonFiniteLoss
from .geometry import (
    PartLabeling,
    SegmentGraph,
    SegmentationParams,
    segment_adjacency,
    super_segment,
)
from .losses import EmbeddingBackend, clip_loss
from .render import (
    CameraConfig,
    RenderItem,
    RenderSettings,
    composite_background,
    render_items,
    sample_object_camera,
)


@dataclass(frozen=True)
class SegmentColorTable:
    """One RGB in [0,1] per segment id."""

    colors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "colors", np.clip(np.asarray(self.colors, dtype=np.float64), 0.0, 1.0))

    @property
    def segment_count(self) -> int:
        return int(self.colors.shape[0])


@dataclass(frozen=True)
class DiscoveryConfig:
    merge_threshold: float = 3.0
    max_rounds: int = 8
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(initial_lr=0.05, iterations=100))
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    camera: CameraConfig = field(default_factory=CameraConfig)
    render: RenderSettings = field(default_factory=lambda: RenderSettings(resolution=(64, 64)))
    views_per_step: int = 5
    background: str = "black"


@dataclass
class RoundRecord:
    round_index: int
    segments_before: int
    segments_after: int
    colors: list

    def to_json(self) -> dict:
        return {
            "round": self.round_index,
            "segments_before": self.segments_before,
            "segments_after": self.segments_after,
            "colors": self.colors,
        }


@dataclass
class DiscoveryAudit:
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def round_count(self) -> int:
        return len(self.rounds)

    def to_json(self) -> dict:
        return {"rounds": [r.to_json() for r in self.rounds]}


def optimize_segment_colors(
    mesh: TriangleMesh,
    labeling: PartLabeling,
    prompt: str,
    backend: EmbeddingBackend,
    opt: OptimizerConfig,
    rng: np.random.Generator,
    camera: CameraConfig | None = None,
    render: RenderSettings | None = None,
    views_per_step: int = 5,
    background: str = "black",
) -> SegmentColorTable:
    """Gradient steps on per-segment colors (initialized gray) minimizing the
    mean embedding loss of sampled object views against `prompt`."""
    camera = camera or CameraConfig()
    render = render or RenderSettings(resolution=(64, 64))
    if labeling.face_segments.shape[0] != mesh.face_count:
        raise LabelMismatch("labeling face count differs from mesh")

    seg_ids = torch.as_tensor(labeling.face_segments, dtype=torch.long)
    params = torch.full((labeling.segment_count, 3), 0.5, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([params], lr=opt.initial_lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=opt.decay_every, gamma=opt.decay_factor
    )

    for step in range(opt.iterations):
        optimizer.zero_grad()
        loss = torch.zeros((), dtype=torch.float64)
        for _ in range(views_per_step):
            pose = sample_object_camera(rng, camera)
            item = RenderItem(vertices=mesh.vertices, faces=mesh.faces, face_colors=params[seg_ids])
            out = render_items([item], pose, render)
            image = composite_background(out, background, rng, render)
            loss = loss + clip_loss(image, prompt, backend)
        loss = loss / views_per_step
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"non-finite loss at step {step} (prompt={prompt!r})")
        loss.backward()
        optimizer.step()
        scheduler.step()
        with torch.no_grad():
            params.clamp_(0.0, 1.0)

    return SegmentColorTable(params.detach().numpy())


def merge_segments(
    labeling: PartLabeling,
    graph: SegmentGraph,
    colors: SegmentColorTable,
    threshold: float,
) -> PartLabeling:
    """Union segments over graph edges whose endpoint colors are closer than
    `threshold` in CIE Lab (Delta-E 76); relabel contiguously.

    All qualifying edges are united in one pass (edge-order independent).
    """
    if colors.segment_count != labeling.segment_count:
        raise LabelMismatch("color table does not cover the labeling")
    labs = rgb_to_lab(colors.colors)

    parent = list(range(labeling.segment_count))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a, b in graph.edges:
        if np.linalg.norm(labs[a] - labs[b]) < threshold:
            union(a, b)

    roots = [find(s) for s in range(labeling.segment_count)]
    order: dict[int, int] = {}
    for root in roots:
        if root not in order:
            order[root] = len(order)
    remap = np.asarray([order[r] for r in roots], dtype=np.int64)
    return PartLabeling(remap[labeling.face_segments], len(order))


def merged_color_table(colors: SegmentColorTable, old: PartLabeling, new: PartLabeling) -> SegmentColorTable:
    """Representative color per merged segment (lowest old-id member)."""
    rep = np.full(new.segment_count, -1, dtype=np.int64)
    for old_seg in range(old.segment_count):
        faces = np.flatnonzero(old.face_segments == old_seg)
        if faces.size == 0:
            continue
        new_seg = int(new.face_segments[faces[0]])
        if rep[new_seg] == -1:
            rep[new_seg] = old_seg
    return SegmentColorTable(colors.colors[rep])


def discover_parts(
    mesh: TriangleMesh,
    class_label: str,
    backend: EmbeddingBackend,
    cfg: DiscoveryConfig | None = None,
    initial_labeling: PartLabeling | None = None,
) -> tuple[PartLabeling, DiscoveryAudit]:
    """Over-segment, then repeat {reset colors to gray, optimize, merge} until
    the segment count stops decreasing. Returns the final labeling plus a
    per-round audit trail."""
    cfg = cfg or DiscoveryConfig()
    labeling = initial_labeling or super_segment(mesh, cfg.segmentation)
    if initial_labeling is not None:
        labeling.validate(mesh)
    prompt = f"a {class_label}"
    rng = np.random.default_rng(cfg.seed)
    audit = DiscoveryAudit()

    for round_index in range(1, cfg.max_rounds + 1):
        before = labeling.segment_count
        colors = optimize_segment_colors(
            mesh,
            labeling,
            prompt,
            backend,
            cfg.optimizer,
            rng,
            camera=cfg.camera,
            render=cfg.render,
            views_per_step=cfg.views_per_step,
            background=cfg.background,
        )
        graph = segment_adjacency(mesh, labeling)
        merged = merge_segments(labeling, graph, colors, cfg.merge_threshold)
        audit.rounds.append(
            RoundRecord(
                round_index=round_index,
                segments_before=before,
                segments_after=merged.segment_count,
                colors=[list(map(float, c)) for c in colors.colors],
            )
        )
        labeling = merged
        if merged.segment_count == before:
            break
    return labeling, audit
