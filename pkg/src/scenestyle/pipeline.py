"""Pipeline orchestration: stage sequencing, checkpointing, resume, export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import (
    OptimizerConfig,
    StyleSpec,
    TriangleMesh,
    ValidatedScene,
    validate_scene,
)
from .errors import ConfigError, MissingUpstream, StageError
from .geometry import PartLabeling
from .losses import EmbeddingBackend, backend_from_config
from .meshio import (
    atomic_write_json,
    atomic_write_text,
    load_scene_config,
    load_style_spec,
    save_png,
    save_ply,
)
from .partdiscovery import DiscoveryConfig, discover_parts
from .render import (
    BACKGROUND_MODES,
    CameraConfig,
    RenderItem,
    RenderSettings,
    render_items,
    scene_camera_set,
)
from .stylize import (
    BaseColorTable,
    FieldInputs,
    StructureAssignment,
    TextureLibrary,
    TrainedField,
    assign_base_colors,
    compose_style_prompt,
    eval_final_colors,
    field_displacement,
    load_field,
    object_id,
    retrieve_structure_textures,
    save_field,
    structure_items,
    train_lnsf,
)

STAGES = ("structure", "parts", "base_colors", "detail", "export")


def _default_optimizer(kind: str, stage: str) -> OptimizerConfig:
    """Iteration budgets: paper-schedule lr for the real encoder, larger lr and
    short budgets for the deterministic mocks."""
    if kind == "real":
        iters = {"parts": 300, "base_colors": 2000, "detail": 3000}[stage]
        return OptimizerConfig(initial_lr=5e-4, iterations=iters)
    iters = {"parts": 100, "base_colors": 300, "detail": 300}[stage]
    lr = {"parts": 0.05, "base_colors": 0.05, "detail": 0.01}[stage]
    return OptimizerConfig(initial_lr=lr, iterations=iters)


@dataclass
class PipelineConfig:
    scene_path: Path
    style_path: Path
    texture_library_path: Path
    out_dir: Path
    backend: dict = field(default_factory=lambda: {"kind": "mock"})
    seed: int = 0
    structure_candidates: int = 64
    views_per_object: int = 5
    scene_resolution: int = 128
    object_resolution: int = 64
    preview_resolution: int = 224
    encoder_resolution: int = 224
    camera_radius: float = 2.0
    elevation_range: tuple[float, float] = (10.0, 80.0)
    azimuth_sigma_deg: float = 45.0
    use_style_prompt_for_base: bool = True
    compose_mode: str = "eq5"
    displacement: bool = False
    displacement_bound: float = 0.05
    detail_backgrounds: tuple[str, ...] = BACKGROUND_MODES
    detail_augment: bool = True
    object_background: str = "black"
    parallel_objects: int = 1
    optimizers: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read pipeline config {path}: {exc}") from exc
        overrides = overrides or {}
        raw.update({k: v for k, v in overrides.items() if v is not None})
        base = path.parent

        def resolve(key: str) -> Path:
            if key not in raw:
                raise ConfigError(f"pipeline config requires {key!r}")
            p = Path(raw[key])
            return p if p.is_absolute() else base / p

        cfg = cls(
            scene_path=resolve("scene"),
            style_path=resolve("style"),
            texture_library_path=resolve("texture_library"),
            out_dir=resolve("out_dir"),
            backend=raw.get("backend", {"kind": "mock"}),
            seed=int(raw.get("seed", 0)),
            structure_candidates=int(raw.get("structure_candidates", 64)),
            views_per_object=int(raw.get("views_per_object", 5)),
            scene_resolution=int(raw.get("scene_resolution", 128)),
            object_resolution=int(raw.get("object_resolution", 64)),
            preview_resolution=int(raw.get("preview_resolution", 224)),
            encoder_resolution=int(raw.get("encoder_resolution", 224)),
            camera_radius=float(raw.get("camera_radius", 2.0)),
            elevation_range=tuple(raw.get("elevation_range", (10.0, 80.0))),
            azimuth_sigma_deg=float(raw.get("azimuth_sigma_deg", 45.0)),
            use_style_prompt_for_base=bool(raw.get("use_style_prompt_for_base", True)),
            compose_mode=raw.get("compose_mode", "eq5"),
            displacement=bool(raw.get("displacement", False)),
            displacement_bound=float(raw.get("displacement_bound", 0.05)),
            detail_backgrounds=tuple(raw.get("detail_backgrounds", BACKGROUND_MODES)),
            detail_augment=bool(raw.get("detail_augment", True)),
            object_background=raw.get("object_background", "black"),
            parallel_objects=int(raw.get("parallel_objects", 1)),
            optimizers=raw.get("optimizers", {}),
        )
        for p, name in ((cfg.scene_path, "scene"), (cfg.style_path, "style"),
                        (cfg.texture_library_path, "texture_library")):
            if not Path(p).exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        return cfg

    def optimizer_for(self, stage: str) -> OptimizerConfig:
        kind = self.backend.get("kind", "mock") if isinstance(self.backend, dict) else self.backend
        base = _default_optimizer(kind, stage)
        over = self.optimizers.get(stage, {})
        return OptimizerConfig(
            initial_lr=float(over.get("initial_lr", base.initial_lr)),
            decay_factor=float(over.get("decay_factor", base.decay_factor)),
            decay_every=int(over.get("decay_every", base.decay_every)),
            iterations=int(over.get("iterations", base.iterations)),
            seed=self.seed,
        )

    def camera_config(self) -> CameraConfig:
        return CameraConfig(
            radius=self.camera_radius,
            elevation_range=tuple(self.elevation_range),
            azimuth_sigma_deg=self.azimuth_sigma_deg,
        )

    def scene_settings(self) -> RenderSettings:
        return RenderSettings(
            resolution=(self.scene_resolution, self.scene_resolution),
            encoder_resolution=self.encoder_resolution,
        )

    def object_settings(self) -> RenderSettings:
        return RenderSettings(
            resolution=(self.object_resolution, self.object_resolution),
            encoder_resolution=self.encoder_resolution,
        )

    def canonical(self) -> dict:
        payload = {
            "scene": str(self.scene_path),
            "style": str(self.style_path),
            "texture_library": str(self.texture_library_path),
            "backend": self.backend,
            "seed": self.seed,
            "structure_candidates": self.structure_candidates,
            "views_per_object": self.views_per_object,
            "scene_resolution": self.scene_resolution,
            "object_resolution": self.object_resolution,
            "camera_radius": self.camera_radius,
            "elevation_range": list(self.elevation_range),
            "azimuth_sigma_deg": self.azimuth_sigma_deg,
            "use_style_prompt_for_base": self.use_style_prompt_for_base,
            "compose_mode": self.compose_mode,
            "displacement": self.displacement,
            "displacement_bound": self.displacement_bound,
            "detail_backgrounds": list(self.detail_backgrounds),
            "detail_augment": self.detail_augment,
            "object_background": self.object_background,
            "optimizers": self.optimizers,
        }
        return payload

    def content_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class PipelineState:
    flags: dict = field(default_factory=lambda: {s: False for s in STAGES})
    assignment: StructureAssignment | None = None
    labelings: list[PartLabeling] | None = None
    base_colors: BaseColorTable | None = None
    detail_prefixes: list[Path] | None = None
    export_files: list[Path] | None = None


# ---------------------------------------------------------------------------
# checkpoint paths and IO


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    d = Path(cfg.out_dir) / "stages" / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest_path(cfg: PipelineConfig) -> Path:
    return Path(cfg.out_dir) / "manifest.json"


def _write_manifest(cfg: PipelineConfig, state: PipelineState) -> None:
    atomic_write_json(
        _manifest_path(cfg),
        {"config_hash": cfg.content_hash(), "seed": cfg.seed, "stages": state.flags},
    )


def _load_manifest(cfg: PipelineConfig) -> dict | None:
    path = _manifest_path(cfg)
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _write_loss_csv(path: Path, losses: list[float]) -> None:
    lines = ["step,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def labeling_to_json(labeling: PartLabeling) -> dict:
    return {
        "segment_count": labeling.segment_count,
        "face_segments": [int(s) for s in labeling.face_segments],
    }


def labeling_from_json(data: dict) -> PartLabeling:
    return PartLabeling(np.asarray(data["face_segments"], dtype=np.int64), int(data["segment_count"]))


# ---------------------------------------------------------------------------
# per-stage execution


def _stage_rng(cfg: PipelineConfig, stage: str, extra: int | None = None) -> np.random.Generator:
    key = [cfg.seed, STAGES.index(stage)]
    if extra is not None:
        key.append(extra)
    return np.random.default_rng(key)


def run_structure_stage(
    cfg: PipelineConfig, scene: ValidatedScene, library: TextureLibrary,
    style: StyleSpec, backend: EmbeddingBackend,
) -> StructureAssignment:
    assignment = retrieve_structure_textures(
        scene, library, style, backend,
        n_candidates=cfg.structure_candidates,
        rng=_stage_rng(cfg, "structure"),
        settings=cfg.scene_settings(),
    )
    atomic_write_json(_stage_dir(cfg, "structure") / "assignment.json", assignment.to_json())
    return assignment


def run_parts_stage(
    cfg: PipelineConfig, scene: ValidatedScene, backend: EmbeddingBackend,
) -> list[PartLabeling]:
    out_dir = _stage_dir(cfg, "parts")
    opt = cfg.optimizer_for("parts")
    labelings = []
    for i, obj in enumerate(scene.objects):
        disc_cfg = DiscoveryConfig(
            seed=int(_stage_rng(cfg, "parts", i).integers(2**31)),
            optimizer=opt,
            camera=cfg.camera_config(),
            render=cfg.object_settings(),
            views_per_step=cfg.views_per_object,
            background=cfg.object_background,
        )
        labeling, audit = discover_parts(obj.mesh, obj.class_label, backend, disc_cfg)
        atomic_write_json(out_dir / f"{object_id(i)}_labeling.json", labeling_to_json(labeling))
        atomic_write_json(out_dir / f"{object_id(i)}_audit.json", audit.to_json())
        labelings.append(labeling)
    return labelings


def run_base_stage(
    cfg: PipelineConfig, scene: ValidatedScene, labelings: list[PartLabeling],
    style: StyleSpec, backend: EmbeddingBackend,
    assignment: StructureAssignment, library: TextureLibrary,
) -> BaseColorTable:
    prompts = []
    for obj in scene.objects:
        subject = obj.prompt_subject
        if cfg.use_style_prompt_for_base:
            subject = compose_style_prompt(subject, style.style_text)
        prompts.append(subject)
    table, losses = assign_base_colors(
        scene, labelings, style, prompts, backend,
        cfg.optimizer_for("base_colors"),
        _stage_rng(cfg, "base_colors"),
        assignment=assignment,
        library=library,
        scene_cameras=scene_camera_set(scene) if (style.hist_weight > 0 or style.lambda3 > 0) else None,
        camera_cfg=cfg.camera_config(),
        scene_settings=cfg.scene_settings(),
        object_settings=cfg.object_settings(),
        views_per_object=cfg.views_per_object,
        background=cfg.object_background,
    )
    out_dir = _stage_dir(cfg, "base_colors")
    atomic_write_json(out_dir / "base_colors.json", table.to_json())
    _write_loss_csv(out_dir / "loss.csv", losses)
    return table


def run_detail_stage(
    cfg: PipelineConfig, scene: ValidatedScene, labelings: list[PartLabeling],
    style: StyleSpec, backend: EmbeddingBackend, table: BaseColorTable,
) -> list[Path]:
    out_dir = _stage_dir(cfg, "detail")
    opt = cfg.optimizer_for("detail")
    prefixes = []
    # objects are processed one at a time (parallel_objects field networks max)
    for i, (obj, labeling) in enumerate(zip(scene.objects, labelings)):
        prompt = compose_style_prompt(obj.prompt_subject, style.style_text)
        rng = _stage_rng(cfg, "detail", i)
        trained = train_lnsf(
            obj.mesh, labeling, table.object_colors(object_id(i)), prompt, backend,
            opt, rng,
            alpha=style.color_range,
            compose=cfg.compose_mode,
            displacement=cfg.displacement,
            displacement_bound=cfg.displacement_bound,
            camera_cfg=cfg.camera_config(),
            settings=cfg.object_settings(),
            views=cfg.views_per_object,
            backgrounds=tuple(cfg.detail_backgrounds),
            augment=cfg.detail_augment,
            field_seed=int(_stage_rng(cfg, "detail", 1000 + i).integers(2**31)),
        )
        prefix = out_dir / f"{object_id(i)}_field"
        save_field(prefix, trained, extra={"object": object_id(i), "prompt": prompt})
        np.savez(
            out_dir / f"{object_id(i)}_resolved.npz",
            final_colors=trained.final_colors,
            displacement=(trained.displacement if trained.displacement is not None else np.zeros(0)),
        )
        _write_loss_csv(out_dir / f"{object_id(i)}_loss.csv", trained.losses)
        prefixes.append(prefix)
    return prefixes


@dataclass
class ExportEdit:
    """Export-time scene edit (never a re-optimization)."""

    kind: str          # relocate | remove | replicate
    object_id: str
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)


def run_export_stage(
    cfg: PipelineConfig, scene: ValidatedScene, labelings: list[PartLabeling],
    table: BaseColorTable, assignment: StructureAssignment, library: TextureLibrary,
    edits: list[ExportEdit] | None = None,
) -> list[Path]:
    out_dir = Path(cfg.out_dir) / "export"
    out_dir.mkdir(parents=True, exist_ok=True)
    detail_dir = _stage_dir(cfg, "detail")
    edits = edits or []
    files: list[Path] = []

    resolved = []
    for i, obj in enumerate(scene.objects):
        res_path = detail_dir / f"{object_id(i)}_resolved.npz"
        if not res_path.exists():
            raise MissingUpstream(str(res_path))
        data = np.load(res_path)
        colors = data["final_colors"]
        disp = data["displacement"]
        unit_verts = obj.mesh.vertices.copy()
        if disp.size:
            unit_verts = unit_verts + disp[:, None] * obj.mesh.vertex_normals
        local_verts = unit_verts / obj.unit_scale + obj.unit_offset
        mesh = TriangleMesh(local_verts, obj.mesh.faces)
        ply = out_dir / f"{object_id(i)}.ply"
        save_ply(ply, mesh, vertex_colors=colors)
        files.append(ply)
        resolved.append((mesh, colors))

    # assemble the (possibly edited) placed scene
    placements = []
    for i, obj in enumerate(scene.objects):
        oid = object_id(i)
        instances = [obj.source.placement.copy()]
        for edit in edits:
            if edit.object_id != oid:
                continue
            if edit.kind == "remove":
                instances = []
            elif edit.kind == "relocate":
                for inst in instances:
                    inst[:3, 3] += np.asarray(edit.offset)
            elif edit.kind == "replicate":
                clone = obj.source.placement.copy()
                clone[:3, 3] += np.asarray(edit.offset)
                instances.append(clone)
        placements.append(instances)

    textures = [library.by_id(tid) for tid in assignment.texture_ids]
    items = structure_items(scene, textures)
    for (mesh, colors), instances in zip(resolved, placements):
        for placement in instances:
            world = mesh.vertices @ placement[:3, :3].T + placement[:3, 3]
            items.append(RenderItem(vertices=world, faces=mesh.faces, vertex_colors=colors))

    settings = RenderSettings(
        resolution=(cfg.preview_resolution, cfg.preview_resolution), shading=True
    )
    cameras = scene_camera_set(scene)
    for k, pose in enumerate(cameras):
        out = render_items(items, pose, settings)
        png = out_dir / f"preview_{k:02d}.png"
        save_png(png, out.image.detach().numpy())
        files.append(png)

    manifest = {
        "objects": [
            {
                "id": object_id(i),
                "ply": f"{object_id(i)}.ply",
                "placements": [p.tolist() for p in placements[i]],
            }
            for i in range(len(scene.objects))
        ],
        "structure_textures": assignment.texture_ids,
        "cameras": [p.to_json() for p in cameras],
    }
    atomic_write_json(out_dir / "scene_manifest.json", manifest)
    files.append(out_dir / "scene_manifest.json")
    return files


# ---------------------------------------------------------------------------
# orchestration


def _load_inputs(cfg: PipelineConfig):
    scene = validate_scene(load_scene_config(cfg.scene_path))
    style = load_style_spec(cfg.style_path)
    library = TextureLibrary.from_manifest(cfg.texture_library_path)
    backend = backend_from_config(cfg.backend)
    return scene, style, library, backend


def _load_stage_outputs(cfg: PipelineConfig, stage: str, scene: ValidatedScene):
    if stage == "structure":
        path = _stage_dir(cfg, "structure") / "assignment.json"
        if not path.exists():
            raise MissingUpstream(str(path))
        return StructureAssignment.from_json(json.loads(path.read_text()))
    if stage == "parts":
        labelings = []
        for i in range(len(scene.objects)):
            path = _stage_dir(cfg, "parts") / f"{object_id(i)}_labeling.json"
            if not path.exists():
                raise MissingUpstream(str(path))
            labelings.append(labeling_from_json(json.loads(path.read_text())))
        return labelings
    if stage == "base_colors":
        path = _stage_dir(cfg, "base_colors") / "base_colors.json"
        if not path.exists():
            raise MissingUpstream("base_colors.json")
        return BaseColorTable.from_json(json.loads(path.read_text()))
    raise ValueError(stage)


def run_pipeline(
    cfg: PipelineConfig,
    resume: bool = False,
    stop_after: str | None = None,
    edits: list[ExportEdit] | None = None,
) -> PipelineState:
    """Execute the stage sequence with checkpointing.

    With resume=True, stages whose outputs exist under a matching config hash
    are loaded instead of recomputed. Any stage error persists partial state
    and raises StageError naming the stage.
    """
    torch.set_num_threads(1)  # bit-reproducible runs on small tensors
    if stop_after is not None and stop_after not in STAGES:
        raise ConfigError(f"unknown stage {stop_after!r}")
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)

    state = PipelineState()
    manifest = _load_manifest(cfg)
    if resume and manifest is not None:
        if manifest.get("config_hash") != cfg.content_hash():
            raise ConfigError("cannot resume: config differs from the checkpointed run")
        state.flags.update(manifest.get("stages", {}))
    elif not resume:
        state.flags = {s: False for s in STAGES}

    scene, style, library, backend = _load_inputs(cfg)

    def done(stage: str) -> bool:
        return bool(state.flags.get(stage))

    try:
        stage = "structure"
        if done(stage):
            state.assignment = _load_stage_outputs(cfg, stage, scene)
        else:
            state.assignment = run_structure_stage(cfg, scene, library, style, backend)
            state.flags[stage] = True
            _write_manifest(cfg, state)
        if stop_after == stage:
            return state

        stage = "parts"
        if done(stage):
            state.labelings = _load_stage_outputs(cfg, stage, scene)
        else:
            state.labelings = run_parts_stage(cfg, scene, backend)
            state.flags[stage] = True
            _write_manifest(cfg, state)
        if stop_after == stage:
            return state

        stage = "base_colors"
        if done(stage):
            state.base_colors = _load_stage_outputs(cfg, stage, scene)
        else:
            state.base_colors = run_base_stage(
                cfg, scene, state.labelings, style, backend, state.assignment, library
            )
            state.flags[stage] = True
            _write_manifest(cfg, state)
        if stop_after == stage:
            return state

        stage = "detail"
        if done(stage):
            state.detail_prefixes = [
                _stage_dir(cfg, "detail") / f"{object_id(i)}_field"
                for i in range(len(scene.objects))
            ]
            for prefix in state.detail_prefixes:
                if not prefix.with_suffix(".npz").exists():
                    raise MissingUpstream(str(prefix))
        else:
            state.detail_prefixes = run_detail_stage(
                cfg, scene, state.labelings, style, backend, state.base_colors
            )
            state.flags[stage] = True
            _write_manifest(cfg, state)
        if stop_after == stage:
            return state

        stage = "export"
        state.export_files = run_export_stage(
            cfg, scene, state.labelings, state.base_colors, state.assignment, library,
            edits=edits,
        )
        state.flags[stage] = True
        _write_manifest(cfg, state)
    except Exception as exc:
        _write_manifest(cfg, state)
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, exc) from exc
    return state
