"""Domain types, scene validation, and color-space conversion shared by every stage."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np

from .errors import EmptyScene, InvalidMesh, OutOfRange

WELD_TOLERANCE = 1e-6
DEGENERATE_AREA = 1e-12

STRUCTURE_CLASSES = ("wall", "floor", "ceiling")

# sRGB (D65) primaries -> CIE XYZ, and the D65/2-degree reference white.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh in scene units.

    vertices: (n, 3) float array, faces: (f, 3) int array, vertex_normals:
    optional (n, 3) unit vectors. Instances are treated as immutable.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.vertex_normals is not None:
            object.__setattr__(
                self, "vertex_normals", np.asarray(self.vertex_normals, dtype=np.float64)
            )

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    def face_normals(self, normalized: bool = True) -> np.ndarray:
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalized:
            lengths = np.linalg.norm(n, axis=1, keepdims=True)
            n = n / np.maximum(lengths, 1e-30)
        return n

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals(normalized=False), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def compute_vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; zero-normal vertices fall back to +z."""
    fn = np.cross(
        vertices[faces[:, 1]] - vertices[faces[:, 0]],
        vertices[faces[:, 2]] - vertices[faces[:, 0]],
    )
    out = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(out, faces[:, k], fn)
    lengths = np.linalg.norm(out, axis=1, keepdims=True)
    degenerate = lengths[:, 0] < 1e-30
    out[degenerate] = (0.0, 0.0, 1.0)
    lengths[degenerate] = 1.0
    return out / lengths


def weld_vertices(
    vertices: np.ndarray, faces: np.ndarray, tol: float = WELD_TOLERANCE
) -> tuple[np.ndarray, np.ndarray]:
    """Merge vertices closer than `tol` (grid quantization) and remap faces."""
    keys = np.round(vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    new_vertices = vertices[np.sort(first)]
    new_faces = rank[inverse][faces]
    return new_vertices, new_faces


def validate_mesh(mesh: TriangleMesh, weld: bool = True) -> TriangleMesh:
    """Check mesh invariants; welds duplicates, drops unused vertices,
    recomputes normals when absent. Raises InvalidMesh on violations."""
    v = np.asarray(mesh.vertices, dtype=np.float64)
    f = np.asarray(mesh.faces, dtype=np.int64)
    if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
        raise InvalidMesh("vertices must be (n,3) and faces (f,3)")
    if v.shape[0] == 0 or f.shape[0] == 0:
        raise InvalidMesh("mesh has no vertices or no faces")
    if not np.isfinite(v).all():
        raise InvalidMesh("non-finite vertex coordinate")
    if f.min() < 0 or f.max() >= v.shape[0]:
        raise InvalidMesh("face index out of range")

    if weld:
        v, f = weld_vertices(v, f)
    used = np.zeros(v.shape[0], dtype=bool)
    used[f.ravel()] = True
    if not used.all():
        remap = np.cumsum(used) - 1
        v = v[used]
        f = remap[f]

    if (f[:, 0] == f[:, 1]).any() or (f[:, 1] == f[:, 2]).any() or (f[:, 0] == f[:, 2]).any():
        raise InvalidMesh("degenerate face (repeated vertex)")
    areas = TriangleMesh(v, f).face_areas()
    if (areas <= DEGENERATE_AREA).any():
        raise InvalidMesh("degenerate face (zero area)")

    normals = mesh.vertex_normals
    if normals is not None and normals.shape == (v.shape[0], 3) and np.isfinite(normals).all():
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        if (lengths[:, 0] > 1e-6).all():
            normals = normals / lengths
        else:
            normals = None
    else:
        normals = None
    if normals is None:
        normals = compute_vertex_normals(v, f)
    return TriangleMesh(v, f, normals)


# ---------------------------------------------------------------------------
# scene description


@dataclass(frozen=True)
class StructureElement:
    """Planar structure component (wall/floor/ceiling) with tiling uv coords."""

    mesh: TriangleMesh
    element_class: str
    uv_coords: np.ndarray
    texture_id: str | None = None

    def __post_init__(self):
        if self.element_class not in STRUCTURE_CLASSES:
            raise InvalidMesh(f"unknown structure class {self.element_class!r}")
        object.__setattr__(self, "uv_coords", np.asarray(self.uv_coords, dtype=np.float64))


@dataclass(frozen=True)
class SceneObject:
    """Placed object mesh with a class label and optional text description."""

    mesh: TriangleMesh
    class_label: str
    description: str | None = None
    placement: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        object.__setattr__(self, "placement", np.asarray(self.placement, dtype=np.float64))

    @property
    def prompt_subject(self) -> str:
        """Free-text description when given, else 'a {class label}'."""
        if self.description:
            return self.description
        return f"a {self.class_label}"


@dataclass(frozen=True)
class SceneDescription:
    structure: tuple[StructureElement, ...]
    objects: tuple[SceneObject, ...]
    scene_type: str
    structure_prompt: str = "a structure of a room"

    def __post_init__(self):
        object.__setattr__(self, "structure", tuple(self.structure))
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class StyleSpec:
    """Stylization target: reference image, style text, and loss weights."""

    target_image: np.ndarray
    style_text: str = ""
    lambda1: float = 0.2
    lambda2: float = 0.2
    lambda3: float = 0.2
    color_range: float = 0.3
    merge_threshold: float = 3.0
    hist_weight: float = 1.0

    def __post_init__(self):
        img = np.asarray(self.target_image, dtype=np.float64)
        if img.size == 0 or img.ndim != 3 or img.shape[2] != 3:
            raise OutOfRange("target image must be a nonempty (h,w,3) array")
        if not np.isfinite(img).all() or img.min() < -1e-9 or img.max() > 1 + 1e-9:
            raise OutOfRange("target image values must lie in [0,1]")
        object.__setattr__(self, "target_image", np.clip(img, 0.0, 1.0))
        for name in ("lambda1", "lambda2", "lambda3", "hist_weight"):
            w = float(getattr(self, name))
            if not np.isfinite(w) or w < 0:
                raise OutOfRange(f"{name} must be finite and nonnegative")
        if not (0.0 < self.color_range <= 1.0):
            raise OutOfRange("color_range must lie in (0,1]")
        if self.merge_threshold <= 0:
            raise OutOfRange("merge_threshold must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam schedule: lr decays by `decay_factor` every `decay_every` steps."""

    initial_lr: float = 5e-4
    decay_factor: float = 0.9
    decay_every: int = 100
    iterations: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise OutOfRange("initial_lr must be positive")
        if not (0.0 < self.decay_factor <= 1.0):
            raise OutOfRange("decay_factor must lie in (0,1]")
        if self.iterations < 1:
            raise OutOfRange("iterations must be >= 1")


# ---------------------------------------------------------------------------
# validated scene


@dataclass(frozen=True)
class ValidatedObject:
    """Scene object after validation: unit-box local mesh plus world placement."""

    source: SceneObject
    mesh: TriangleMesh
    world_mesh: TriangleMesh
    unit_scale: float
    unit_offset: np.ndarray

    @property
    def class_label(self) -> str:
        return self.source.class_label

    @property
    def prompt_subject(self) -> str:
        return self.source.prompt_subject


@dataclass(frozen=True)
class ValidatedScene:
    structure: tuple[StructureElement, ...]
    objects: tuple[ValidatedObject, ...]
    scene_type: str
    structure_prompt: str

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = [], []
        for el in self.structure:
            lo, hi = el.mesh.bounds()
            los.append(lo)
            his.append(hi)
        for obj in self.objects:
            lo, hi = obj.world_mesh.bounds()
            los.append(lo)
            his.append(hi)
        return np.min(los, axis=0), np.max(his, axis=0)


def _placement_parts(placement: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    m = np.asarray(placement, dtype=np.float64)
    if m.shape != (4, 4) or not np.isfinite(m).all():
        raise InvalidMesh("placement must be a finite 4x4 matrix")
    if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-8):
        raise InvalidMesh("placement last row must be [0,0,0,1]")
    a = m[:3, :3]
    det = np.linalg.det(a)
    if det <= 0:
        raise InvalidMesh("placement rotation must be right-handed")
    scale = det ** (1.0 / 3.0)
    r = a / scale
    if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
        raise InvalidMesh("placement rotation part is not orthonormal")
    return a, m[:3, 3], scale


def _unit_box_normalize(mesh: TriangleMesh) -> tuple[TriangleMesh, float, np.ndarray]:
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise InvalidMesh("object has zero spatial extent")
    scale = 1.0 / extent
    verts = (mesh.vertices - center) * scale
    return TriangleMesh(verts, mesh.faces, mesh.vertex_normals), scale, center


def validate_scene(desc: SceneDescription | ValidatedScene) -> ValidatedScene:
    """Verify every mesh invariant and precompute per-object unit-box frames.

    Idempotent: validating a ValidatedScene returns it unchanged.
    """
    if isinstance(desc, ValidatedScene):
        return desc
    if len(desc.structure) == 0 and len(desc.objects) == 0:
        raise EmptyScene("scene has neither structure nor objects")
    if not desc.scene_type:
        raise EmptyScene("scene_type must be nonempty")

    structure = []
    for el in desc.structure:
        mesh = validate_mesh(el.mesh, weld=False)
        uv = el.uv_coords
        if uv.shape != (mesh.vertex_count, 2) or not np.isfinite(uv).all():
            raise InvalidMesh("structure uv coords must be finite (n,2)")
        structure.append(replace(el, mesh=mesh))

    objects = []
    for obj in desc.objects:
        if not obj.class_label:
            raise InvalidMesh("object class_label must be nonempty")
        mesh = validate_mesh(obj.mesh)
        a, t, _ = _placement_parts(obj.placement)
        world_verts = mesh.vertices @ a.T + t
        world_mesh = TriangleMesh(
            world_verts, mesh.faces, compute_vertex_normals(world_verts, mesh.faces)
        )
        unit_mesh, scale, offset = _unit_box_normalize(mesh)
        objects.append(ValidatedObject(replace(obj, mesh=mesh), unit_mesh, world_mesh, scale, offset))

    return ValidatedScene(tuple(structure), tuple(objects), desc.scene_type, desc.structure_prompt)


# ---------------------------------------------------------------------------
# color space


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(rgb) -> np.ndarray:
    """sRGB in [0,1] -> CIE L*a*b* under D65/2deg. Accepts (...,3) arrays."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise OutOfRange("rgb must have a trailing dimension of 3")
    if not np.isfinite(rgb).all() or rgb.min() < -1e-9 or rgb.max() > 1 + 1e-9:
        raise OutOfRange("rgb components must lie in [0,1]")
    rgb = np.clip(rgb, 0.0, 1.0)
    xyz = srgb_to_linear(rgb) @ _SRGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(rgb)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def delta_e76(lab_a, lab_b) -> np.ndarray:
    """Euclidean distance in L*a*b* (the merge-criterion metric)."""
    return np.linalg.norm(np.asarray(lab_a) - np.asarray(lab_b), axis=-1)


def rgb_delta_e(rgb_a, rgb_b) -> np.ndarray:
    return delta_e76(rgb_to_lab(rgb_a), rgb_to_lab(rgb_b))
