"""Command-line interface: full pipeline runs plus one-stage subcommands.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import OptimizerConfig, validate_mesh
from .errors import ConfigError, SceneStyleError
from .geometry import PartLabeling
from .losses import backend_from_config
from .meshio import atomic_write_json, load_mesh
from .partdiscovery import DiscoveryConfig, discover_parts
from .pipeline import (
    ExportEdit,
    PipelineConfig,
    labeling_from_json,
    labeling_to_json,
    run_pipeline,
)
from .render import CameraConfig, RenderSettings


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the global seed")
    parser.add_argument("--backend", default=None, help="override backend kind (mock|band|real)")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--resume", action="store_true", help="reuse existing stage checkpoints")


def _pipeline_config(args) -> PipelineConfig:
    overrides = {"seed": args.seed, "out_dir": args.out}
    cfg = PipelineConfig.from_json(args.config, overrides)
    if args.backend:
        cfg.backend = dict(cfg.backend)
        cfg.backend["kind"] = args.backend
    return cfg


def _parse_edit(kind: str, spec: str) -> ExportEdit:
    if ":" in spec:
        oid, params = spec.split(":", 1)
        offset = {"dx": 0.0, "dy": 0.0, "dz": 0.0}
        for part in params.split(","):
            key, _, value = part.partition("=")
            if key not in offset:
                raise ConfigError(f"unknown edit parameter {key!r} in {spec!r}")
            offset[key] = float(value)
        return ExportEdit(kind=kind, object_id=oid, offset=(offset["dx"], offset["dy"], offset["dz"]))
    if kind != "remove":
        raise ConfigError(f"{kind} edit needs offsets, e.g. obj0:dx=1.0")
    return ExportEdit(kind=kind, object_id=spec)


def cmd_run(args) -> int:
    cfg = _pipeline_config(args)
    state = run_pipeline(cfg, resume=args.resume, stop_after=args.stage)
    done = [s for s, flag in state.flags.items() if flag]
    print(f"completed stages: {', '.join(done)}")
    print(f"outputs under {cfg.out_dir}")
    return 0


def cmd_discover_parts(args) -> int:
    mesh = validate_mesh(load_mesh(args.mesh))
    backend_cfg = {"kind": args.backend}
    if args.backend_config:
        backend_cfg.update(json.loads(Path(args.backend_config).read_text()))
        backend_cfg.setdefault("kind", args.backend)
    backend = backend_from_config(backend_cfg)

    initial = None
    if args.segments_in:
        initial = labeling_from_json(json.loads(Path(args.segments_in).read_text()))

    cfg = DiscoveryConfig(
        seed=args.seed,
        optimizer=OptimizerConfig(initial_lr=args.lr, iterations=args.iterations, seed=args.seed),
        camera=CameraConfig(elevation_range=(args.elevation[0], args.elevation[1])),
        render=RenderSettings(resolution=(args.resolution, args.resolution)),
    )
    labeling, audit = discover_parts(mesh, args.label, backend, cfg, initial_labeling=initial)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_json(out / "labeling.json", labeling_to_json(labeling))
    atomic_write_json(out / "audit.json", audit.to_json())
    print(f"{labeling.segment_count} parts in {audit.round_count} rounds -> {out}/labeling.json")
    return 0


def _run_single_stage(args, stage: str) -> int:
    cfg = _pipeline_config(args)
    state = run_pipeline(cfg, resume=True, stop_after=stage)
    print(f"stage '{stage}' complete; outputs under {cfg.out_dir}")
    del state
    return 0


def cmd_export(args) -> int:
    cfg = _pipeline_config(args)
    edits = []
    for spec in args.relocate or []:
        edits.append(_parse_edit("relocate", spec))
    for spec in args.remove or []:
        edits.append(_parse_edit("remove", spec))
    for spec in args.replicate or []:
        edits.append(_parse_edit("replicate", spec))
    state = run_pipeline(cfg, resume=True, stop_after="export", edits=edits)
    print(f"exported {len(state.export_files or [])} files under {cfg.out_dir}/export")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenestyle",
        description="Stylize labeled 3D indoor scenes from a target image and style text.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline (or a prefix of it)")
    _add_common(p_run)
    p_run.add_argument("--stage", default=None, help="stop after this stage")
    p_run.set_defaults(func=cmd_run)

    p_disc = sub.add_parser("discover-parts", help="texture-part discovery for one mesh")
    p_disc.add_argument("--mesh", required=True)
    p_disc.add_argument("--label", required=True, help="class label, e.g. 'chair'")
    p_disc.add_argument("--backend", default="mock", choices=("mock", "band", "real"))
    p_disc.add_argument("--backend-config", default=None, help="JSON with color/band tables")
    p_disc.add_argument("--segments-in", default=None, help="bypass super-segmentation")
    p_disc.add_argument("--seed", type=int, default=0)
    p_disc.add_argument("--iterations", type=int, default=100)
    p_disc.add_argument("--lr", type=float, default=0.05)
    p_disc.add_argument("--resolution", type=int, default=64)
    p_disc.add_argument("--elevation", type=float, nargs=2, default=(10.0, 80.0))
    p_disc.add_argument("--out", default="discovery_out")
    p_disc.set_defaults(func=cmd_discover_parts)

    for stage, name in (
        ("structure", "stylize-structure"),
        ("base_colors", "assign-base-colors"),
        ("detail", "stylize-object"),
    ):
        p_stage = sub.add_parser(name, help=f"run the {stage} stage (upstream must exist)")
        _add_common(p_stage)
        p_stage.set_defaults(func=lambda a, s=stage: _run_single_stage(a, s))

    p_exp = sub.add_parser("export", help="resolve final colors, write PLY/PNG artifacts")
    _add_common(p_exp)
    p_exp.add_argument("--relocate", action="append", help="objN:dx=..,dy=..,dz=..")
    p_exp.add_argument("--remove", action="append", help="objN")
    p_exp.add_argument("--replicate", action="append", help="objN:dx=..,dy=..,dz=..")
    p_exp.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SceneStyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
