#!/usr/bin/env python3
"""Build toy assets if needed, run the full pipeline on them with the mock
backend, and print a per-stage summary."""

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

from scenestyle.pipeline import PipelineConfig, run_pipeline


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", default="toy_workspace")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--resume", action="store_true")
    args = parser.parse_args()

    workspace = Path(args.workspace)
    if not (workspace / "pipeline.json").exists():
        subprocess.run(
            [sys.executable, str(Path(__file__).parent / "make_toy_assets.py"),
             "--out", str(workspace), "--seed", str(args.seed)],
            check=True,
        )

    cfg = PipelineConfig.from_json(workspace / "pipeline.json", {"seed": args.seed})
    t0 = time.time()
    state = run_pipeline(cfg, resume=args.resume)
    elapsed = time.time() - t0

    print(f"pipeline finished in {elapsed:.1f}s")
    for stage, flag in state.flags.items():
        print(f"  {stage:12s} {'done' if flag else 'skipped'}")
    if state.base_colors is not None:
        table = state.base_colors.to_json()
        print("base colors:")
        for obj, rows in table.items():
            print(f"  {obj}: {[tuple(round(c, 3) for c in row) for row in rows]}")
    manifest = json.loads((Path(cfg.out_dir) / "export" / "scene_manifest.json").read_text())
    print(f"exported {len(manifest['objects'])} objects; previews under {cfg.out_dir}/export")


if __name__ == "__main__":
    main()
