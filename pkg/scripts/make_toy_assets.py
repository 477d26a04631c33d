#!/usr/bin/env python3
"""Generate a self-contained toy workspace: scene meshes, texture library,
target image, style spec, and a pipeline config wired to the mock backend."""

import argparse
import json
from pathlib import Path

import numpy as np

from scenestyle.meshio import save_png, save_ply
from scenestyle.primitives import (
    TOY_TEXTURE_COLORS,
    tiered_stack,
    toy_room,
    toy_texture_images,
    translation,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="toy_workspace")
    parser.add_argument("--objects", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.out)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    (root / "textures").mkdir(parents=True, exist_ok=True)

    structure_entries = []
    for i, el in enumerate(toy_room()):
        name = f"structure_{i}.ply"
        save_ply(root / "meshes" / name, el.mesh)
        structure_entries.append(
            {"element_class": el.element_class, "mesh": f"meshes/{name}", "uv_scale": 1.0}
        )

    object_entries = []
    positions = [(-0.9, -0.6), (0.9, -0.5), (0.0, 0.8), (-0.8, 0.9)]
    labels = ["chair", "lamp", "stool", "planter"]
    for i in range(args.objects):
        mesh, _ = tiered_stack(2 if i % 2 == 0 else 3, 0.2)
        name = f"object_{i}.ply"
        save_ply(root / "meshes" / name, mesh)
        x, y = positions[i % len(positions)]
        object_entries.append(
            {
                "class_label": labels[i % len(labels)],
                "mesh": f"meshes/{name}",
                "placement": translation(x, y, 0.55).tolist(),
            }
        )

    scene = {
        "scene_type": "a bedroom",
        "structure_prompt": "a structure of a room",
        "structure": structure_entries,
        "objects": object_entries,
    }
    (root / "scene.json").write_text(json.dumps(scene, indent=2))

    manifest = {"textures": []}
    for name, image in toy_texture_images().items():
        save_png(root / "textures" / f"{name}.png", image)
        manifest["textures"].append(
            {"id": name, "path": f"{name}.png", "tiling_scale": 0.5, "class_tags": []}
        )
    (root / "textures" / "manifest.json").write_text(json.dumps(manifest, indent=2))

    # warm target image: upper band red-ish, lower band wood-brown
    target = np.zeros((64, 64, 3))
    target[:32] = TOY_TEXTURE_COLORS["plaster_red"]
    target[32:] = TOY_TEXTURE_COLORS["plank_brown"]
    save_png(root / "target.png", target)

    style = {
        "target_image": "target.png",
        "style_text": "minimal",
        "lambda1": 0.2,
        "lambda2": 0.2,
        "lambda3": 0.2,
        "color_range": 0.3,
        "merge_threshold": 3.0,
    }
    (root / "style.json").write_text(json.dumps(style, indent=2))

    pipeline = {
        "scene": "scene.json",
        "style": "style.json",
        "texture_library": "textures/manifest.json",
        "out_dir": "out",
        "backend": {
            "kind": "mock",
            "color_table": {
                "a bedroom": [0.62, 0.45, 0.40],
                "chair": [0.70, 0.30, 0.25],
                "lamp": [0.75, 0.65, 0.35],
                "stool": [0.45, 0.35, 0.25],
                "planter": [0.35, 0.55, 0.35],
                "a structure of a room": [0.60, 0.45, 0.35],
            },
        },
        "seed": args.seed,
        "structure_candidates": 16,
        "scene_resolution": 96,
        "object_resolution": 64,
        "preview_resolution": 224,
        "detail_augment": False,
        "detail_backgrounds": ["black"],
    }
    (root / "pipeline.json").write_text(json.dumps(pipeline, indent=2))
    print(f"toy workspace written to {root}/ (run: scenestyle run --config {root}/pipeline.json)")


if __name__ == "__main__":
    main()
