"""Procedural meshes and toy assets for experiments and the test suite."""

from __future__ import annotations

import numpy as np

from .core import SceneDescription, SceneObject, StructureElement, TriangleMesh
from .meshio import planar_uv


def box_mesh(
    half_extents=(0.5, 0.5, 0.5),
    center=(0.0, 0.0, 0.0),
    subdivisions: int = 1,
) -> TriangleMesh:
    """Axis-aligned box; each face is a `subdivisions` x `subdivisions` quad grid."""
    hx, hy, hz = half_extents
    cx, cy, cz = center
    n = max(1, int(subdivisions))
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []

    def add_face(origin, du, dv):
        base = len(verts)
        origin = np.asarray(origin, dtype=np.float64)
        du = np.asarray(du, dtype=np.float64) / n
        dv = np.asarray(dv, dtype=np.float64) / n
        for i in range(n + 1):
            for j in range(n + 1):
                verts.append(tuple(origin + du * i + dv * j))
        for i in range(n):
            for j in range(n):
                a = base + i * (n + 1) + j
                b = a + (n + 1)
                faces.append((a, b, a + 1))
                faces.append((a + 1, b, b + 1))

    # outward-oriented faces of the box
    add_face((-hx, -hy, -hz), (0, 2 * hy, 0), (2 * hx, 0, 0))   # bottom (-z)
    add_face((-hx, -hy, +hz), (2 * hx, 0, 0), (0, 2 * hy, 0))   # top (+z)
    add_face((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz))   # front (-y)
    add_face((-hx, +hy, -hz), (0, 0, 2 * hz), (2 * hx, 0, 0))   # back (+y)
    add_face((-hx, -hy, -hz), (0, 0, 2 * hz), (0, 2 * hy, 0))   # left (-x)
    add_face((+hx, -hy, -hz), (0, 2 * hy, 0), (0, 0, 2 * hz))   # right (+x)

    v = np.asarray(verts) + np.asarray([cx, cy, cz])
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def unit_cube(subdivisions: int = 1) -> TriangleMesh:
    return box_mesh((0.5, 0.5, 0.5), subdivisions=subdivisions)


def grid_plane(
    size=(1.0, 1.0),
    center=(0.0, 0.0, 0.0),
    axis: str = "z",
    cells: int = 4,
    flip: bool = False,
) -> TriangleMesh:
    """Planar rectangle perpendicular to `axis`, subdivided into cells
    (subdivision keeps near-plane culling artifacts local in interior views)."""
    su, sv = size
    n = max(1, int(cells))
    us = np.linspace(-su / 2, su / 2, n + 1)
    vs = np.linspace(-sv / 2, sv / 2, n + 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    zeros = np.zeros_like(uu)
    if axis == "z":
        pts = np.stack([uu, vv, zeros], axis=-1)
    elif axis == "y":
        pts = np.stack([uu, zeros, vv], axis=-1)
    elif axis == "x":
        pts = np.stack([zeros, uu, vv], axis=-1)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    verts = pts.reshape(-1, 3) + np.asarray(center)
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = (i + 1) * (n + 1) + j
            if flip:
                faces.append((a, a + 1, b))
                faces.append((a + 1, b + 1, b))
            else:
                faces.append((a, b, a + 1))
                faces.append((a + 1, b, b + 1))
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Unit icosphere by repeated midpoint subdivision projected to the sphere.

    Vertex counts per level: 12, 42, 162, 642, 2562, ...
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = verts_list[a] + verts_list[b]
                p = p / np.linalg.norm(p)
                midpoint[key] = len(verts_list)
                verts_list.append(p)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriangleMesh(verts * radius, faces)


# ---------------------------------------------------------------------------
# tiered stacks: objects with constructed per-tier material ground truth

_TIER_SPANS = {
    2: [(0.14, 0.50), (-0.50, -0.14)],
    3: [(0.36, 0.50), (-0.07, 0.07), (-0.50, -0.36)],
}


def prism_tube(sides: int, radius: float, z0: float, z1: float) -> TriangleMesh:
    """Open regular-prism tube (side faces only, outward-oriented).

    Adjacent sides meet at a 360/sides dihedral, so region growing keeps each
    side its own segment for sides <= 12.
    """
    angles = 2 * np.pi * np.arange(sides) / sides
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bottom = np.column_stack([ring, np.full(sides, z0)])
    top = np.column_stack([ring, np.full(sides, z1)])
    verts = np.vstack([bottom, top])
    faces = []
    for i in range(sides):
        j = (i + 1) % sides
        faces.append((i, j, sides + i))
        faces.append((j, sides + j, sides + i))
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))


def tiered_stack(
    tiers: int = 2,
    half_extent: float = 0.2,
    subdivisions=None,
) -> tuple[TriangleMesh, np.ndarray]:
    """Stack of `tiers` disjoint boxes along +z with generous gaps.

    Returns the mesh and the per-face ground-truth material id (0 = topmost
    tier). Tiers are separated so low-elevation renders keep them in distinct
    horizontal image bands.
    """
    spans = _TIER_SPANS.get(tiers)
    if spans is None:
        raise ValueError("tiered_stack supports 2 or 3 tiers")
    if subdivisions is None:
        subdivisions = [1] * tiers
    verts = []
    faces = []
    material = []
    offset = 0
    for t, (z0, z1) in enumerate(spans):
        sub = subdivisions[t]
        hz = (z1 - z0) / 2
        tier = box_mesh((half_extent, half_extent, hz), (0.0, 0.0, (z0 + z1) / 2), sub)
        verts.append(tier.vertices)
        faces.append(tier.faces + offset)
        material.append(np.full(tier.face_count, t, dtype=np.int64))
        offset += tier.vertex_count
    mesh = TriangleMesh(np.vstack(verts), np.vstack(faces))
    return mesh, np.concatenate(material)


def tiered_tube_stack(
    tier_sides: list[int],
    radius: float = 0.2,
) -> tuple[TriangleMesh, np.ndarray]:
    """Stack of disjoint prism tubes along +z (one tube per material tier).

    Every face is a side face, so each tier is fully observable from
    low-elevation hemisphere cameras; the per-face ground-truth material id
    is the tier index (0 = topmost).
    """
    spans = _TIER_SPANS.get(len(tier_sides))
    if spans is None:
        raise ValueError("tiered_tube_stack supports 2 or 3 tiers")
    verts, faces, material = [], [], []
    offset = 0
    for t, ((z0, z1), sides) in enumerate(zip(spans, tier_sides)):
        tube = prism_tube(sides, radius, z0, z1)
        verts.append(tube.vertices)
        faces.append(tube.faces + offset)
        material.append(np.full(tube.face_count, t, dtype=np.int64))
        offset += tube.vertex_count
    mesh = TriangleMesh(np.vstack(verts), np.vstack(faces))
    return mesh, np.concatenate(material)


def material_suite(count: int = 10, seed: int = 7):
    """Synthetic meshes with known per-tier materials for part-discovery tests.

    Returns a list of (name, mesh, ground_truth_face_materials, tier_count).
    """
    rng = np.random.default_rng(seed)
    labels = [
        "chair", "lamp", "bookshelf", "stool", "dresser",
        "cabinet", "nightstand", "planter", "speaker", "pedestal",
    ]
    side_choices = (4, 6, 8)
    suite = []
    for i in range(count):
        tiers = 2 if i % 2 == 0 else 3
        radius = float(rng.uniform(0.16, 0.24))
        sides = [int(rng.choice(side_choices)) for _ in range(tiers)]
        mesh, gt = tiered_tube_stack(sides, radius)
        suite.append((labels[i % len(labels)], mesh, gt, tiers))
    return suite


# ---------------------------------------------------------------------------
# toy room + textures


def solid_texture(color, size: int = 32) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = np.asarray(color, dtype=np.float64)
    return img


def checker_texture(color_a, color_b, size: int = 32, cells: int = 4) -> np.ndarray:
    idx = np.arange(size) * cells // size
    pattern = (idx[:, None] + idx[None, :]) % 2
    img = np.where(pattern[..., None] == 0, np.asarray(color_a), np.asarray(color_b))
    return img.astype(np.float64)


def stripe_texture(color_a, color_b, size: int = 32, stripes: int = 4) -> np.ndarray:
    idx = (np.arange(size) * stripes // size) % 2
    img = np.where(idx[None, :, None] == 0, np.asarray(color_a), np.asarray(color_b))
    return np.broadcast_to(img, (size, size, 3)).astype(np.float64)


TOY_TEXTURE_COLORS = {
    "plaster_red": (0.75, 0.18, 0.15),
    "plaster_green": (0.15, 0.65, 0.22),
    "plaster_blue": (0.16, 0.25, 0.78),
    "plaster_gold": (0.85, 0.68, 0.15),
    "panel_teal": (0.10, 0.55, 0.55),
    "panel_violet": (0.55, 0.20, 0.70),
    "plank_brown": (0.48, 0.30, 0.14),
    "tile_gray": (0.62, 0.62, 0.66),
}


def toy_texture_images() -> dict[str, np.ndarray]:
    """Eight visually distinct tileable textures for the toy library."""
    out = {}
    for i, (name, color) in enumerate(TOY_TEXTURE_COLORS.items()):
        if i % 3 == 0:
            out[name] = solid_texture(color)
        elif i % 3 == 1:
            dark = tuple(0.8 * c for c in color)
            out[name] = checker_texture(color, dark)
        else:
            dark = tuple(0.7 * c for c in color)
            out[name] = stripe_texture(color, dark)
    return out


def toy_room(
    width: float = 4.0,
    depth: float = 4.0,
    height: float = 2.6,
    cells: int = 6,
) -> list[StructureElement]:
    """Floor plus three walls around the origin (open on +y for previews)."""
    floor = grid_plane((width, depth), (0, 0, 0), axis="z", cells=cells)
    wall_back = grid_plane((width, height), (0, -depth / 2, height / 2), axis="y", cells=cells)
    wall_left = grid_plane((depth, height), (-width / 2, 0, height / 2), axis="x", cells=cells)
    wall_right = grid_plane((depth, height), (width / 2, 0, height / 2), axis="x", cells=cells)
    elements = []
    for mesh, cls in (
        (floor, "floor"),
        (wall_back, "wall"),
        (wall_left, "wall"),
        (wall_right, "wall"),
    ):
        elements.append(
            StructureElement(mesh=mesh, element_class=cls, uv_coords=planar_uv(mesh, 1.0))
        )
    return elements


def translation(dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = (dx, dy, dz)
    return m


def toy_scene(objects: int = 2, scene_type: str = "a bedroom") -> SceneDescription:
    """Small room with tiered-stack objects placed on the floor."""
    structure = toy_room()
    placed = []
    positions = [(-0.9, -0.6), (0.9, -0.5), (0.0, 0.8), (-0.8, 0.9)]
    labels = ["chair", "lamp", "stool", "planter"]
    for i in range(objects):
        mesh, _ = tiered_stack(2 if i % 2 == 0 else 3, 0.2)
        x, y = positions[i % len(positions)]
        placed.append(
            SceneObject(
                mesh=mesh,
                class_label=labels[i % len(labels)],
                placement=translation(x, y, 0.55),
            )
        )
    return SceneDescription(
        structure=tuple(structure),
        objects=tuple(placed),
        scene_type=scene_type,
    )
