"""The three stylization stages: structure texture retrieval, scene-wide base
color assignment, and per-object neural detail fields (optional displacement)."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .core import OptimizerConfig, StyleSpec, TriangleMesh, ValidatedScene
from .errors import (
    EmptyLibrary,
    LabelMismatch,
    MissingBaseColor,
    NonFiniteLoss,
    OutOfRange,
)
from .geometry import (
    SPECTRAL_DIM,
    FrequencyMatrix,
    PartLabeling,
    SpectralBasis,
    fourier_features,
    laplace_beltrami_basis,
)
from .losses import (
    EmbeddingBackend,
    clip_loss,
    hist_distance,
    soft_color_histogram,
)
from .meshio import load_image
from .render import (
    BACKGROUND_MODES,
    CameraConfig,
    CameraPose,
    RenderItem,
    RenderSettings,
    augment_view_crop,
    composite_background,
    render_items,
    sample_object_camera,
)

SEGMENT_EMBED_DIM = 16
FIELD_HIDDEN = 256
FIELD_DEPTH = 5


# ---------------------------------------------------------------------------
# texture library and structure retrieval


@dataclass(frozen=True)
class TextureEntry:
    texture_id: str
    image: np.ndarray
    tiling_scale: float = 1.0
    class_tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TextureLibrary:
    entries: tuple[TextureEntry, ...]

    def __post_init__(self):
        if len(self.entries) == 0:
            raise EmptyLibrary("texture library is empty")
        for entry in self.entries:
            if entry.tiling_scale <= 0:
                raise OutOfRange(f"texture {entry.texture_id}: tiling scale must be > 0")

    @classmethod
    def from_manifest(cls, path: str | Path) -> "TextureLibrary":
        path = Path(path)
        manifest = json.loads(path.read_text())
        entries = []
        for item in manifest.get("textures", []):
            entries.append(
                TextureEntry(
                    texture_id=item["id"],
                    image=load_image(path.parent / item["path"]),
                    tiling_scale=float(item.get("tiling_scale", 1.0)),
                    class_tags=tuple(item.get("class_tags", [])),
                )
            )
        return cls(tuple(entries))

    def eligible(self, element_class: str) -> list[TextureEntry]:
        out = [e for e in self.entries if not e.class_tags or element_class in e.class_tags]
        if not out:
            raise EmptyLibrary(f"no texture eligible for class {element_class!r}")
        return out

    def by_id(self, texture_id: str) -> TextureEntry:
        for entry in self.entries:
            if entry.texture_id == texture_id:
                return entry
        raise EmptyLibrary(f"unknown texture id {texture_id!r}")


def structure_items(
    scene: ValidatedScene, textures: list[TextureEntry]
) -> list[RenderItem]:
    """Textured draw items for the structure elements (bare room)."""
    items = []
    for el, entry in zip(scene.structure, textures):
        items.append(
            RenderItem(
                vertices=el.mesh.vertices,
                faces=el.mesh.faces,
                texture=entry.image,
                uv=el.uv_coords,
                tiling_scale=entry.tiling_scale,
            )
        )
    return items


def structure_retrieval_camera(
    scene: ValidatedScene, cameras: list[CameraPose], resolution: int = 64
) -> CameraPose:
    """The fixed scene camera with the largest bare-room pixel coverage."""
    settings = RenderSettings(resolution=(resolution, resolution))
    gray = [
        RenderItem(
            vertices=el.mesh.vertices,
            faces=el.mesh.faces,
            vertex_colors=np.full((el.mesh.vertex_count, 3), 0.6),
        )
        for el in scene.structure
    ]
    best, best_cover = 0, -1
    for i, pose in enumerate(cameras):
        try:
            out = render_items(gray, pose, settings)
            cover = int(out.mask.sum())
        except Exception:
            cover = 0
        if cover > best_cover:
            best, best_cover = i, cover
    return cameras[best]


def score_structure_candidate(
    structure_render,
    target_image,
    structure_prompt: str,
    lambda1: float,
    backend: EmbeddingBackend,
    target_hist: torch.Tensor | None = None,
) -> float:
    """Retrieval criterion: hist distance to the target plus lambda1 times the
    embedding loss against the structure prompt."""
    if target_hist is None:
        target_hist = soft_color_histogram(target_image)
    score = hist_distance(soft_color_histogram(structure_render), target_hist)
    if lambda1 > 0:
        score = score + lambda1 * clip_loss(structure_render, structure_prompt, backend)
    return float(score)


@dataclass
class StructureAssignment:
    texture_ids: list[str]
    scores: list[dict]
    camera: CameraPose

    def to_json(self) -> dict:
        return {
            "texture_ids": list(self.texture_ids),
            "scores": self.scores,
            "camera": self.camera.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StructureAssignment":
        return cls(
            texture_ids=list(data["texture_ids"]),
            scores=list(data["scores"]),
            camera=CameraPose.from_json(data["camera"]),
        )


def retrieve_structure_textures(
    scene: ValidatedScene,
    library: TextureLibrary,
    style: StyleSpec,
    backend: EmbeddingBackend,
    n_candidates: int = 64,
    rng: np.random.Generator | None = None,
    camera: CameraPose | None = None,
    settings: RenderSettings | None = None,
) -> StructureAssignment:
    """Sample joint texture assignments, score bare-room renders, return the
    arg-min assignment plus every sampled score.

    When the joint assignment space is no larger than n_candidates it is
    enumerated exhaustively instead of sampled.
    """
    if n_candidates < 1:
        raise OutOfRange("n_candidates must be >= 1")
    if not scene.structure:
        raise EmptyLibrary("scene has no structure elements to stylize")
    rng = rng or np.random.default_rng(0)
    settings = settings or RenderSettings(resolution=(128, 128))
    if camera is None:
        from .render import scene_camera_set

        camera = structure_retrieval_camera(scene, scene_camera_set(scene))

    eligible = [library.eligible(el.element_class) for el in scene.structure]
    space = 1
    for options in eligible:
        space *= len(options)

    candidates: list[tuple[int, ...]] = []
    if space <= n_candidates:
        candidates = list(itertools.product(*(range(len(o)) for o in eligible)))
    else:
        seen = set()
        for _ in range(n_candidates):
            pick = tuple(int(rng.integers(len(o))) for o in eligible)
            if pick not in seen:
                seen.add(pick)
                candidates.append(pick)

    target_hist = soft_color_histogram(style.target_image)
    scores = []
    best_idx, best_score = 0, math.inf
    for ci, pick in enumerate(candidates):
        textures = [eligible[e][i] for e, i in enumerate(pick)]
        out = render_items(structure_items(scene, textures), camera, settings)
        score = score_structure_candidate(
            out.image, style.target_image, scene.structure_prompt,
            style.lambda1, backend, target_hist=target_hist,
        )
        scores.append({"textures": [t.texture_id for t in textures], "score": score})
        if score < best_score:
            best_idx, best_score = ci, score

    winner = [eligible[e][i].texture_id for e, i in enumerate(candidates[best_idx])]
    return StructureAssignment(texture_ids=winner, scores=scores, camera=camera)


# ---------------------------------------------------------------------------
# base color assignment


@dataclass
class BaseColorTable:
    """RGB base color per (object id, segment id)."""

    colors: dict[str, np.ndarray]

    def object_colors(self, object_id: str) -> np.ndarray:
        if object_id not in self.colors:
            raise MissingBaseColor(f"no base colors for {object_id}")
        return self.colors[object_id]

    def to_json(self) -> dict:
        return {
            obj: [[float(c) for c in row] for row in table]
            for obj, table in sorted(self.colors.items())
        }

    @classmethod
    def from_json(cls, data: dict) -> "BaseColorTable":
        return cls({obj: np.asarray(rows, dtype=np.float64) for obj, rows in data.items()})


def object_id(index: int) -> str:
    return f"obj{index}"


def scene_render_items(
    scene: ValidatedScene,
    structure_textures: list[TextureEntry],
    object_face_colors: list,
) -> list[RenderItem]:
    """Structure (textured) plus placed objects (flat per-face colors)."""
    items = structure_items(scene, structure_textures)
    for obj, face_colors in zip(scene.objects, object_face_colors):
        items.append(
            RenderItem(
                vertices=obj.world_mesh.vertices,
                faces=obj.world_mesh.faces,
                face_colors=face_colors,
            )
        )
    return items


def assign_base_colors(
    scene: ValidatedScene,
    labelings: list[PartLabeling],
    style: StyleSpec,
    prompts: list[str],
    backend: EmbeddingBackend,
    opt: OptimizerConfig,
    rng: np.random.Generator,
    assignment: StructureAssignment | None = None,
    library: TextureLibrary | None = None,
    scene_cameras: list[CameraPose] | None = None,
    camera_cfg: CameraConfig | None = None,
    scene_settings: RenderSettings | None = None,
    object_settings: RenderSettings | None = None,
    views_per_object: int = 5,
    background: str = "black",
) -> tuple[BaseColorTable, list[float]]:
    """Jointly optimize one color per discovered part across the whole scene.

    Per step: the scene is rendered from one sampled scene camera (histogram
    and scene-prompt terms) and every object from sampled hemisphere cameras
    (per-object prompt terms). Colors start gray and stay clamped to [0,1].
    """
    if len(labelings) != len(scene.objects) or len(prompts) != len(scene.objects):
        raise LabelMismatch("one labeling and one prompt per object required")
    camera_cfg = camera_cfg or CameraConfig()
    scene_settings = scene_settings or RenderSettings(resolution=(128, 128))
    object_settings = object_settings or RenderSettings(resolution=(64, 64))

    need_scene = style.hist_weight > 0 or style.lambda3 > 0
    if need_scene:
        if assignment is None or library is None:
            raise MissingBaseColor("scene-level terms require a structure assignment and library")
        textures = [library.by_id(tid) for tid in assignment.texture_ids]
        if scene_cameras is None:
            from .render import scene_camera_set

            scene_cameras = scene_camera_set(scene)

    params = []
    seg_ids = []
    for labeling, obj in zip(labelings, scene.objects):
        if labeling.face_segments.shape[0] != obj.mesh.face_count:
            raise LabelMismatch("labeling does not cover object mesh")
        params.append(
            torch.full((labeling.segment_count, 3), 0.5, dtype=torch.float64, requires_grad=True)
        )
        seg_ids.append(torch.as_tensor(labeling.face_segments, dtype=torch.long))

    optimizer = torch.optim.Adam(params, lr=opt.initial_lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=opt.decay_every, gamma=opt.decay_factor
    )
    target_hist = soft_color_histogram(style.target_image) if style.hist_weight > 0 else None

    losses: list[float] = []
    for step in range(opt.iterations):
        optimizer.zero_grad()
        loss = torch.zeros((), dtype=torch.float64)

        if need_scene:
            pose = scene_cameras[int(rng.integers(len(scene_cameras)))]
            face_colors = [p[s] for p, s in zip(params, seg_ids)]
            out = render_items(
                scene_render_items(scene, textures, face_colors), pose, scene_settings
            )
            if style.hist_weight > 0:
                loss = loss + style.hist_weight * hist_distance(
                    soft_color_histogram(out.image), target_hist
                )
            if style.lambda3 > 0:
                loss = loss + style.lambda3 * clip_loss(out.image, scene.scene_type, backend)

        if style.lambda2 > 0:
            for i, obj in enumerate(scene.objects):
                term = torch.zeros((), dtype=torch.float64)
                for _ in range(views_per_object):
                    pose = sample_object_camera(rng, camera_cfg)
                    out = render_items(
                        [RenderItem(
                            vertices=obj.mesh.vertices,
                            faces=obj.mesh.faces,
                            face_colors=params[i][seg_ids[i]],
                        )],
                        pose,
                        object_settings,
                    )
                    image = composite_background(out, background, rng, object_settings)
                    term = term + clip_loss(image, prompts[i], backend)
                loss = loss + style.lambda2 * term / views_per_object

        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"non-finite base-color loss at step {step}")
        losses.append(float(loss.detach()))
        loss.backward()
        optimizer.step()
        scheduler.step()
        with torch.no_grad():
            for p in params:
                p.clamp_(0.0, 1.0)

    table = BaseColorTable(
        {object_id(i): p.detach().numpy().copy() for i, p in enumerate(params)}
    )
    return table, losses


def compose_style_prompt(subject: str, style_text: str) -> str:
    """'{subject}, {style} style' when a style text is given, else the subject."""
    if not subject:
        raise ValueError("prompt subject must be nonempty")
    if not style_text:
        return subject
    return f"{subject}, {style_text} style"


# ---------------------------------------------------------------------------
# local neural style field


class LocalStyleField(torch.nn.Module):
    """Coordinate MLP emitting a bounded color (and optional displacement)
    residual from Fourier features, spectral coefficients, and a learned
    per-segment embedding.

    Five 256-wide ReLU layers feed zero-initialized tanh output heads, so the
    field output is exactly zero at initialization.
    """

    def __init__(
        self,
        segment_count: int,
        displacement: bool = False,
        seed: int = 0,
        dtype: torch.dtype = torch.float64,
        fourier_dim: int = 2 * 128,
        spectral_dim: int = SPECTRAL_DIM,
        segment_embed_dim: int = SEGMENT_EMBED_DIM,
        hidden: int = FIELD_HIDDEN,
        depth: int = FIELD_DEPTH,
    ):
        super().__init__()
        self.segment_count = segment_count
        self.displacement = displacement
        self.seed = seed
        in_dim = fourier_dim + spectral_dim + segment_embed_dim
        rng = np.random.default_rng(seed)

        def seeded_linear(d_in: int, d_out: int) -> torch.nn.Linear:
            lin = torch.nn.Linear(d_in, d_out)
            bound = 1.0 / math.sqrt(d_in)
            lin.weight.data = torch.as_tensor(
                rng.uniform(-bound, bound, size=(d_out, d_in)), dtype=dtype
            )
            lin.bias.data = torch.as_tensor(rng.uniform(-bound, bound, size=d_out), dtype=dtype)
            return lin

        dims = [in_dim] + [hidden] * depth
        self.trunk = torch.nn.ModuleList(
            seeded_linear(a, b) for a, b in zip(dims[:-1], dims[1:])
        )
        self.segment_embedding = torch.nn.Embedding(segment_count, segment_embed_dim)
        self.segment_embedding.weight.data = torch.as_tensor(
            rng.normal(0.0, 1.0, size=(segment_count, segment_embed_dim)), dtype=dtype
        )
        self.color_head = torch.nn.Linear(hidden, 3).to(dtype)
        torch.nn.init.zeros_(self.color_head.weight)
        torch.nn.init.zeros_(self.color_head.bias)
        if displacement:
            self.displacement_head = torch.nn.Linear(hidden, 1).to(dtype)
            torch.nn.init.zeros_(self.displacement_head.weight)
            torch.nn.init.zeros_(self.displacement_head.bias)
        else:
            self.displacement_head = None

    def forward(self, features: torch.Tensor, segment_ids: torch.Tensor):
        x = torch.cat([features, self.segment_embedding(segment_ids)], dim=1)
        for lin in self.trunk:
            x = torch.relu(lin(x))
        color = torch.tanh(self.color_head(x))
        disp = None
        if self.displacement_head is not None:
            disp = torch.tanh(self.displacement_head(x)).squeeze(-1)
        return color, disp

    def architecture(self) -> dict:
        return {
            "segment_count": self.segment_count,
            "displacement": self.displacement,
            "seed": self.seed,
            "hidden": FIELD_HIDDEN,
            "depth": FIELD_DEPTH,
            "segment_embed_dim": SEGMENT_EMBED_DIM,
            "spectral_dim": SPECTRAL_DIM,
        }


def vertex_segments(mesh: TriangleMesh, labeling: PartLabeling) -> np.ndarray:
    """Per-vertex segment id: the majority segment of incident faces (ties go
    to the lowest id)."""
    if labeling.face_segments.shape[0] != mesh.face_count:
        raise LabelMismatch("labeling face count differs from mesh")
    counts: list[dict[int, int]] = [dict() for _ in range(mesh.vertex_count)]
    for fi, face in enumerate(mesh.faces):
        seg = int(labeling.face_segments[fi])
        for v in face:
            d = counts[int(v)]
            d[seg] = d.get(seg, 0) + 1
    out = np.zeros(mesh.vertex_count, dtype=np.int64)
    for v, d in enumerate(counts):
        best = sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))[0][0] if d else 0
        out[v] = best
    return out


@dataclass
class FieldInputs:
    """Fixed per-vertex field inputs for one object."""

    features: torch.Tensor        # (n, 384) fourier + padded spectral
    segment_ids: torch.Tensor     # (n,) long
    frequency_seed: int
    spectral_k: int

    @classmethod
    def build(
        cls,
        mesh: TriangleMesh,
        labeling: PartLabeling,
        basis: SpectralBasis | None = None,
        frequency_seed: int = 0,
        spectral_k: int = SPECTRAL_DIM,
    ) -> "FieldInputs":
        k = min(spectral_k, mesh.vertex_count)
        if basis is None:
            basis = laplace_beltrami_basis(mesh, k)
        freq = FrequencyMatrix.from_seed(frequency_seed)
        fourier = fourier_features(mesh.vertices, freq)
        spectral = basis.padded(SPECTRAL_DIM)
        features = torch.as_tensor(
            np.concatenate([fourier, spectral], axis=1), dtype=torch.float64
        )
        seg = torch.as_tensor(vertex_segments(mesh, labeling), dtype=torch.long)
        return cls(features=features, segment_ids=seg, frequency_seed=frequency_seed, spectral_k=k)


def eval_final_colors(
    field: LocalStyleField,
    inputs: FieldInputs,
    base_colors: np.ndarray,
    alpha: float,
    compose: str = "eq5",
) -> torch.Tensor:
    """Final per-vertex colors.

    compose='eq5': clamp(base(segment) + alpha * field_color, 0, 1).
    compose='supp': 0.5 + 0.5 * field_color (gray plus half the tanh output).
    """
    if not (0.0 < alpha <= 1.0):
        raise OutOfRange("alpha must lie in (0,1]")
    base = np.asarray(base_colors, dtype=np.float64)
    max_seg = int(inputs.segment_ids.max())
    if base.ndim != 2 or base.shape[1] != 3 or base.shape[0] <= max_seg:
        raise MissingBaseColor("base color table does not cover every segment")
    color, _ = field(inputs.features, inputs.segment_ids)
    if compose == "supp":
        return 0.5 + 0.5 * color
    base_t = torch.as_tensor(base, dtype=color.dtype)[inputs.segment_ids]
    return torch.clamp(base_t + alpha * color, 0.0, 1.0)


def field_displacement(
    field: LocalStyleField,
    inputs: FieldInputs,
    bound: float,
) -> torch.Tensor | None:
    """Per-vertex scalar displacement in [-bound, bound], or None."""
    _, disp = field(inputs.features, inputs.segment_ids)
    if disp is None:
        return None
    return bound * disp


@dataclass
class TrainedField:
    field: LocalStyleField
    inputs: FieldInputs
    losses: list[float]
    final_colors: np.ndarray
    displacement: np.ndarray | None = None
    steps: int = 0


def train_lnsf(
    mesh: TriangleMesh,
    labeling: PartLabeling,
    base_colors: np.ndarray,
    prompt: str,
    backend: EmbeddingBackend,
    opt: OptimizerConfig,
    rng: np.random.Generator,
    alpha: float = 0.3,
    compose: str = "eq5",
    displacement: bool = False,
    displacement_bound: float = 0.05,
    camera_cfg: CameraConfig | None = None,
    settings: RenderSettings | None = None,
    views: int = 5,
    backgrounds: tuple[str, ...] = BACKGROUND_MODES,
    augment: bool = True,
    inputs: FieldInputs | None = None,
    field_seed: int | None = None,
) -> TrainedField:
    """Train one object's local style field on augmented view renders.

    Per step the field is evaluated once, the object rendered from `views`
    sampled cameras with background compositing (and optional perspective +
    10-20% crop), and the mean embedding loss against the view-directional
    prompt is minimized with the configured Adam schedule. The displacement
    branch adds a textureless shaded render per view whose loss trains the
    geometry head; vertex offsets follow vertex normals, clamped to
    displacement_bound (scene units of the unit box).
    """
    camera_cfg = camera_cfg or CameraConfig()
    settings = settings or RenderSettings(resolution=(64, 64))
    if inputs is None:
        inputs = FieldInputs.build(mesh, labeling)
    seed = opt.seed if field_seed is None else field_seed
    fld = LocalStyleField(labeling.segment_count, displacement=displacement, seed=seed)
    optimizer = torch.optim.Adam(fld.parameters(), lr=opt.initial_lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=opt.decay_every, gamma=opt.decay_factor
    )
    verts = torch.as_tensor(mesh.vertices, dtype=torch.float64)
    normals = torch.as_tensor(mesh.vertex_normals, dtype=torch.float64)
    geo_settings = replace(settings, shading=True)
    gray = torch.full((mesh.vertex_count, 3), 0.5, dtype=torch.float64)

    losses: list[float] = []
    for step in range(opt.iterations):
        optimizer.zero_grad()
        colors = eval_final_colors(fld, inputs, base_colors, alpha, compose)
        positions = None
        if displacement:
            disp = field_displacement(fld, inputs, displacement_bound)
            positions = verts + disp.unsqueeze(-1) * normals

        loss = torch.zeros((), dtype=torch.float64)
        for _ in range(views):
            pose = sample_object_camera(rng, camera_cfg)
            item = RenderItem(
                vertices=positions if positions is not None else mesh.vertices,
                faces=mesh.faces,
                vertex_colors=colors,
                geometry_grad=displacement,
            )
            out = render_items([item], pose, settings)
            mode = backgrounds[int(rng.integers(len(backgrounds)))]
            image = composite_background(out, mode, rng, settings)
            if augment:
                image = augment_view_crop(image, rng, settings)
            view_prompt = (
                prompt if pose.view_tag == "scene" else f"{pose.view_tag} view of {prompt}"
            )
            loss = loss + clip_loss(image, view_prompt, backend)
            if displacement:
                geo_item = RenderItem(
                    vertices=positions, faces=mesh.faces,
                    vertex_colors=gray, geometry_grad=True,
                )
                geo_out = render_items([geo_item], pose, geo_settings)
                geo_img = composite_background(
                    geo_out, "black", np.random.default_rng(0), geo_settings
                )
                loss = loss + clip_loss(geo_img, view_prompt, backend)
        loss = loss / views
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"non-finite detail loss at step {step} (prompt={prompt!r})")
        losses.append(float(loss.detach()))
        loss.backward()
        optimizer.step()
        scheduler.step()

    with torch.no_grad():
        final = eval_final_colors(fld, inputs, base_colors, alpha, compose).numpy()
        disp_out = None
        if displacement:
            disp_out = field_displacement(fld, inputs, displacement_bound).numpy()
    return TrainedField(
        field=fld,
        inputs=inputs,
        losses=losses,
        final_colors=final,
        displacement=disp_out,
        steps=opt.iterations,
    )


def train_lnsf_with_displacement(
    mesh: TriangleMesh,
    labeling: PartLabeling,
    base_colors: np.ndarray,
    prompt: str,
    backend: EmbeddingBackend,
    opt: OptimizerConfig,
    rng: np.random.Generator,
    displacement_bound: float = 0.05,
    **kwargs,
) -> TrainedField:
    return train_lnsf(
        mesh, labeling, base_colors, prompt, backend, opt, rng,
        displacement=True, displacement_bound=displacement_bound, **kwargs,
    )


# ---------------------------------------------------------------------------
# field checkpoints


def save_field(path_prefix: str | Path, trained: TrainedField, extra: dict | None = None) -> None:
    """Binary weights (.npz) plus a JSON header (.json) with the architecture."""
    path_prefix = Path(path_prefix)
    state = {k: v.detach().numpy() for k, v in trained.field.state_dict().items()}
    np.savez(path_prefix.with_suffix(".npz"), **state)
    header = {
        "architecture": trained.field.architecture(),
        "steps": trained.steps,
        "frequency_seed": trained.inputs.frequency_seed,
        "spectral_k": trained.inputs.spectral_k,
    }
    if extra:
        header.update(extra)
    path_prefix.with_suffix(".json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")


def load_field(path_prefix: str | Path) -> tuple[LocalStyleField, dict]:
    path_prefix = Path(path_prefix)
    header = json.loads(path_prefix.with_suffix(".json").read_text())
    arch = header["architecture"]
    fld = LocalStyleField(
        segment_count=arch["segment_count"],
        displacement=arch["displacement"],
        seed=arch["seed"],
    )
    data = np.load(path_prefix.with_suffix(".npz"))
    state = {k: torch.as_tensor(data[k]) for k in data.files}
    fld.load_state_dict(state)
    return fld, header
