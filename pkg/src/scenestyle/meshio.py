"""File IO: OBJ/PLY meshes, PNG/JPEG images, and JSON scene / style configs."""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    SceneDescription,
    SceneObject,
    StructureElement,
    StyleSpec,
    TriangleMesh,
)
from .errors import ConfigError, InvalidMesh

# ---------------------------------------------------------------------------
# meshes


def load_mesh(path: str | Path) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise InvalidMesh(f"unsupported mesh format: {path.name}")


def _triangulate(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[i], indices[i + 1]) for i in range(1, len(indices) - 1)]


def _load_obj(path: Path) -> TriangleMesh:
    vertices: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    i = int(token.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                faces.extend(_triangulate(idx))
    if not vertices or not faces:
        raise InvalidMesh(f"{path.name}: no geometry found")
    vn = np.asarray(normals) if len(normals) == len(vertices) else None
    return TriangleMesh(np.asarray(vertices), np.asarray(faces, dtype=np.int64), vn)


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise InvalidMesh(f"{path.name}: not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list]] = []
        while True:
            line = fh.readline()
            if not line:
                raise InvalidMesh(f"{path.name}: truncated header")
            tokens = line.decode("ascii", errors="replace").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
                else:
                    elements[-1][2].append(("scalar", tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise InvalidMesh(f"{path.name}: unsupported PLY format {fmt}")

        data: dict[str, dict[str, list]] = {}
        for name, count, props in elements:
            columns: dict[str, list] = {p[-1]: [] for p in props}
            if fmt == "ascii":
                for _ in range(count):
                    tokens = fh.readline().split()
                    pos = 0
                    for p in props:
                        if p[0] == "list":
                            n = int(tokens[pos]); pos += 1
                            columns[p[3]].append([float(t) for t in tokens[pos:pos + n]])
                            pos += n
                        else:
                            columns[p[2]].append(float(tokens[pos])); pos += 1
            else:
                for _ in range(count):
                    for p in props:
                        if p[0] == "list":
                            cnt_dtype = "<" + _PLY_TYPES[p[1]]
                            n = int(np.frombuffer(fh.read(np.dtype(cnt_dtype).itemsize), cnt_dtype)[0])
                            item_dtype = "<" + _PLY_TYPES[p[2]]
                            raw = fh.read(np.dtype(item_dtype).itemsize * n)
                            columns[p[3]].append(np.frombuffer(raw, item_dtype).tolist())
                        else:
                            dtype = "<" + _PLY_TYPES[p[1]]
                            raw = fh.read(np.dtype(dtype).itemsize)
                            columns[p[2]].append(float(np.frombuffer(raw, dtype)[0]))
            data[name] = columns

    vert = data.get("vertex")
    face = data.get("face")
    if vert is None or face is None:
        raise InvalidMesh(f"{path.name}: PLY must contain vertex and face elements")
    vertices = np.column_stack([vert["x"], vert["y"], vert["z"]])
    normals = None
    if all(k in vert and len(vert[k]) for k in ("nx", "ny", "nz")):
        normals = np.column_stack([vert["nx"], vert["ny"], vert["nz"]])
    idx_key = "vertex_indices" if "vertex_indices" in face else "vertex_index"
    faces = []
    for poly in face[idx_key]:
        faces.extend(_triangulate([int(i) for i in poly]))
    return TriangleMesh(vertices, np.asarray(faces, dtype=np.int64), normals)


def save_ply(
    path: str | Path,
    mesh: TriangleMesh,
    vertex_colors: np.ndarray | None = None,
    binary: bool = True,
) -> None:
    """Write a PLY with optional per-vertex uchar colors (binary little-endian
    by default)."""
    path = Path(path)
    v = mesh.vertices.astype("<f4")
    n = mesh.vertex_normals
    has_normals = n is not None
    colors = None
    if vertex_colors is not None:
        colors = np.clip(np.round(np.asarray(vertex_colors) * 255.0), 0, 255).astype("u1")

    header = ["ply", "format binary_little_endian 1.0" if binary else "format ascii 1.0"]
    header.append(f"element vertex {mesh.vertex_count}")
    header += ["property float x", "property float y", "property float z"]
    if has_normals:
        header += ["property float nx", "property float ny", "property float nz"]
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append(f"element face {mesh.face_count}")
    header.append("property list uchar int vertex_indices")
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            for i in range(mesh.vertex_count):
                fh.write(v[i].tobytes())
                if has_normals:
                    fh.write(n[i].astype("<f4").tobytes())
                if colors is not None:
                    fh.write(colors[i].tobytes())
            for f in mesh.faces:
                fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))
        else:
            for i in range(mesh.vertex_count):
                row = [f"{x:.7g}" for x in mesh.vertices[i]]
                if has_normals:
                    row += [f"{x:.7g}" for x in n[i]]
                if colors is not None:
                    row += [str(int(x)) for x in colors[i]]
                fh.write((" ".join(row) + "\n").encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))


# ---------------------------------------------------------------------------
# images


def load_image(path: str | Path) -> np.ndarray:
    """Load PNG/JPEG as float RGB in [0,1], shape (h,w,3)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_png(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


# ---------------------------------------------------------------------------
# configs


def planar_uv(mesh: TriangleMesh, uv_scale: float = 1.0) -> np.ndarray:
    """Project a planar element to 2D tiling coordinates by dropping the
    dominant normal axis."""
    normal = np.abs(mesh.face_normals()).mean(axis=0)
    drop = int(np.argmax(normal))
    keep = [i for i in range(3) if i != drop]
    return mesh.vertices[:, keep] / max(uv_scale, 1e-12)


def load_scene_config(path: str | Path) -> SceneDescription:
    """Scene config JSON: mesh paths, class labels, placements, prompts."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scene config {path}: {exc}") from exc
    base = path.parent

    structure = []
    for entry in cfg.get("structure", []):
        mesh = load_mesh(base / entry["mesh"])
        uv = planar_uv(mesh, float(entry.get("uv_scale", 1.0)))
        structure.append(
            StructureElement(
                mesh=mesh,
                element_class=entry["element_class"],
                uv_coords=uv,
                texture_id=entry.get("texture_id"),
            )
        )

    objects = []
    for entry in cfg.get("objects", []):
        mesh = load_mesh(base / entry["mesh"])
        placement = np.asarray(entry.get("placement", np.eye(4).tolist()), dtype=np.float64)
        objects.append(
            SceneObject(
                mesh=mesh,
                class_label=entry["class_label"],
                description=entry.get("description"),
                placement=placement,
            )
        )

    if "scene_type" not in cfg:
        raise ConfigError("scene config requires scene_type")
    return SceneDescription(
        structure=tuple(structure),
        objects=tuple(objects),
        scene_type=cfg["scene_type"],
        structure_prompt=cfg.get("structure_prompt", "a structure of a room"),
    )


def load_style_spec(path: str | Path) -> StyleSpec:
    """Style spec JSON: target image path, style text, weight overrides."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read style spec {path}: {exc}") from exc
    if "target_image" not in cfg:
        raise ConfigError("style spec requires target_image")
    target = load_image(path.parent / cfg["target_image"])
    return StyleSpec(
        target_image=target,
        style_text=cfg.get("style_text", ""),
        lambda1=float(cfg.get("lambda1", 0.2)),
        lambda2=float(cfg.get("lambda2", 0.2)),
        lambda3=float(cfg.get("lambda3", 0.2)),
        color_range=float(cfg.get("color_range", 0.3)),
        merge_threshold=float(cfg.get("merge_threshold", 3.0)),
        hist_weight=float(cfg.get("hist_weight", 1.0)),
    )


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_json(path: str | Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
