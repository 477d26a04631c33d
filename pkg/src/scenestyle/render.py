"""Cameras, differentiable rasterization, background/crop augmentation, prompts.

The rasterizer runs a non-differentiable visibility pass (numpy z-buffer over
perspective-correct barycentrics) and then composes pixel values in torch, so
gradients w.r.t. vertex/face colors are exact (colors enter linearly). An
optional geometry-grad mode recomputes barycentric weights in torch from the
projected vertex positions at interior pixels (no silhouette gradient).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .core import TriangleMesh
from .errors import CoverageFailure, EmptyRender, GradientUnsupported, OutOfRange

BACKGROUND_MODES = ("white", "black", "gaussian", "checkerboard")

# fixed three-point directional lighting (toggleable to unshaded)
_LIGHT_DIRS = np.array([(0.5, 0.3, 0.8), (-0.6, -0.4, 0.5), (0.3, -0.7, 0.4)])
_LIGHT_DIRS = _LIGHT_DIRS / np.linalg.norm(_LIGHT_DIRS, axis=1, keepdims=True)
_LIGHT_POWER = np.array([0.5, 0.25, 0.15])
_AMBIENT = 0.35


# ---------------------------------------------------------------------------
# cameras


@dataclass(frozen=True)
class CameraPose:
    eye: np.ndarray
    target: np.ndarray
    up: np.ndarray
    fov_deg: float = 50.0
    view_tag: str = "front"

    def __post_init__(self):
        object.__setattr__(self, "eye", np.asarray(self.eye, dtype=np.float64))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.eye - self.target))

    def rotation(self) -> np.ndarray:
        """World->camera rotation; camera looks down -z."""
        forward = self.target - self.eye
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise OutOfRange("camera eye coincides with target")
        forward = forward / norm
        side = np.cross(forward, self.up)
        side_norm = np.linalg.norm(side)
        if side_norm < 1e-9:
            raise OutOfRange("camera up is parallel to the view direction")
        side = side / side_norm
        up = np.cross(side, forward)
        return np.stack([side, up, -forward])

    def to_json(self) -> dict:
        return {
            "eye": self.eye.tolist(),
            "target": self.target.tolist(),
            "up": self.up.tolist(),
            "fov_deg": self.fov_deg,
            "view_tag": self.view_tag,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CameraPose":
        return cls(
            eye=np.asarray(data["eye"]),
            target=np.asarray(data["target"]),
            up=np.asarray(data["up"]),
            fov_deg=float(data["fov_deg"]),
            view_tag=data["view_tag"],
        )


@dataclass(frozen=True)
class CameraConfig:
    """Hemisphere sampling around the object's front direction."""

    radius: float = 2.0
    elevation_range: tuple[float, float] = (10.0, 80.0)
    azimuth_sigma_deg: float = 45.0
    front_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov_deg: float = 50.0
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)


def view_tag_for_azimuth(azimuth_deg: float) -> str:
    rel = abs(((azimuth_deg + 180.0) % 360.0) - 180.0)
    if rel <= 60.0:
        return "front"
    if rel >= 120.0:
        return "back"
    return "side"


def sample_object_camera(rng: np.random.Generator, cfg: CameraConfig) -> CameraPose:
    """Azimuth ~ wrapped N(front, sigma), elevation ~ U[lo, hi], eye on the
    hemisphere of radius cfg.radius."""
    azimuth = float(rng.normal(0.0, cfg.azimuth_sigma_deg)) % 360.0
    lo, hi = cfg.elevation_range
    elevation = float(rng.uniform(lo, hi))

    front = np.asarray(cfg.front_axis, dtype=np.float64)
    front = front / np.linalg.norm(front)
    world_up = np.array([0.0, 0.0, 1.0])
    lateral = np.cross(world_up, front)
    lateral /= np.linalg.norm(lateral)
    az = math.radians(azimuth)
    el = math.radians(elevation)
    direction = math.cos(el) * (math.cos(az) * front + math.sin(az) * lateral) + math.sin(el) * world_up
    target = np.asarray(cfg.look_at, dtype=np.float64)
    return CameraPose(
        eye=target + cfg.radius * direction,
        target=target,
        up=world_up,
        fov_deg=cfg.fov_deg,
        view_tag=view_tag_for_azimuth(azimuth),
    )


def directional_prompt(camera: CameraPose, base: str) -> str:
    """Prefix 'front/side/back view of ' according to the camera's tag."""
    if not base:
        raise ValueError("prompt base must be nonempty")
    if camera.view_tag in ("front", "side", "back"):
        return f"{camera.view_tag} view of {base}"
    return base


# ---------------------------------------------------------------------------
# render settings and outputs


@dataclass(frozen=True)
class RenderSettings:
    resolution: tuple[int, int] = (224, 224)
    background_mode: str = "black"
    crop_min: float = 0.10
    crop_max: float = 0.20
    perspective_jitter: float = 0.10
    shading: bool = False
    near: float = 0.05
    encoder_resolution: int = 224
    checker_cells: int = 8

    def __post_init__(self):
        w, h = self.resolution
        if w < 64 or h < 64:
            raise OutOfRange("render resolution must be at least 64x64")
        if not (0.0 < self.crop_min <= self.crop_max <= 1.0):
            raise OutOfRange("crop fraction range must satisfy 0 < min <= max <= 1")
        if self.background_mode not in BACKGROUND_MODES:
            raise OutOfRange(f"unknown background mode {self.background_mode!r}")


@dataclass
class RenderOutput:
    """Image plus per-pixel provenance; `image` carries the autograd graph."""

    image: torch.Tensor          # (h, w, 3) in [0,1]
    mask: np.ndarray             # (h, w) bool foreground
    pix_item: np.ndarray         # (h, w) int, -1 = background
    pix_face: np.ndarray         # (h, w) int, face id within its item


@dataclass
class RenderItem:
    """One draw call: a mesh colored per-vertex, per-face, or by texture."""

    vertices: object             # (n,3) numpy or torch
    faces: np.ndarray
    vertex_colors: object | None = None
    face_colors: object | None = None
    texture: np.ndarray | None = None
    uv: np.ndarray | None = None
    tiling_scale: float = 1.0
    geometry_grad: bool = False

    def positions_numpy(self) -> np.ndarray:
        if isinstance(self.vertices, torch.Tensor):
            return self.vertices.detach().cpu().numpy().astype(np.float64)
        return np.asarray(self.vertices, dtype=np.float64)


def _as_tensor(value, dtype) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value), dtype=dtype)


# ---------------------------------------------------------------------------
# visibility pass


@dataclass
class _Visibility:
    cover: np.ndarray        # (P,) bool
    item: np.ndarray         # (P,) int
    face: np.ndarray         # (P,) int
    weights: np.ndarray      # (P,3) perspective-correct weights over original vertices
    any_clipped: np.ndarray  # per-item bool


def _clip_triangles(tri_cam: np.ndarray, near: float):
    """Clip camera-space triangles against depth > near.

    Returns (positions (T,3,3), weight matrices (T,3,3), source index (T,),
    clipped flag (T,)). Weight rows express each output vertex as a convex
    combination of the source triangle's vertices.
    """
    depth = -tri_cam[:, :, 2]
    inside = depth > near
    n_inside = inside.sum(axis=1)

    keep = np.flatnonzero(n_inside == 3)
    out_pos = [tri_cam[keep]]
    eye3 = np.broadcast_to(np.eye(3), (keep.size, 3, 3))
    out_w = [eye3.copy()]
    out_src = [keep]
    out_clip = [np.zeros(keep.size, dtype=bool)]

    partial = np.flatnonzero((n_inside == 1) | (n_inside == 2))
    for t in partial:
        pts = tri_cam[t]
        d = depth[t]
        ins = inside[t]

        def cut(i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
            # depth is linear along the edge; solve d(alpha) = near
            alpha = (near - d[i]) / (d[j] - d[i])
            w = np.zeros(3)
            w[i], w[j] = 1.0 - alpha, alpha
            return (1.0 - alpha) * pts[i] + alpha * pts[j], w

        order = [k for k in range(3) if ins[k]] + [k for k in range(3) if not ins[k]]
        if len(order) == 0:
            continue
        if ins.sum() == 1:
            a = order[0]
            p_ab, w_ab = cut(a, order[1])
            p_ac, w_ac = cut(a, order[2])
            ea = np.eye(3)[a]
            out_pos.append(np.stack([pts[a], p_ab, p_ac])[None])
            out_w.append(np.stack([ea, w_ab, w_ac])[None])
            out_src.append(np.array([t]))
            out_clip.append(np.array([True]))
        else:
            a, b = order[0], order[1]
            c = order[2]
            p_bc, w_bc = cut(b, c)
            p_ac, w_ac = cut(a, c)
            ea, eb = np.eye(3)[a], np.eye(3)[b]
            out_pos.append(np.stack([pts[a], pts[b], p_bc])[None])
            out_w.append(np.stack([ea, eb, w_bc])[None])
            out_pos.append(np.stack([pts[a], p_bc, p_ac])[None])
            out_w.append(np.stack([ea, w_bc, w_ac])[None])
            out_src.append(np.array([t, t]))
            out_clip.append(np.array([True, True]))

    if not out_pos:
        return (np.zeros((0, 3, 3)), np.zeros((0, 3, 3)), np.zeros(0, dtype=np.int64),
                np.zeros(0, dtype=bool))
    return (
        np.concatenate(out_pos),
        np.concatenate(out_w),
        np.concatenate(out_src).astype(np.int64),
        np.concatenate(out_clip),
    )


def _project(cam_pts: np.ndarray, camera: CameraPose, width: int, height: int):
    """Camera-space points -> pixel coordinates and positive depth."""
    depth = -cam_pts[..., 2]
    f = 1.0 / math.tan(math.radians(camera.fov_deg) / 2.0)
    aspect = width / height
    x_ndc = (f / aspect) * cam_pts[..., 0] / depth
    y_ndc = f * cam_pts[..., 1] / depth
    px = (x_ndc + 1.0) * 0.5 * width
    py = (1.0 - y_ndc) * 0.5 * height
    return np.stack([px, py], axis=-1), depth


def _visibility_pass(items: list[RenderItem], camera: CameraPose, settings: RenderSettings) -> _Visibility:
    width, height = settings.resolution
    n_pix = width * height
    rot = camera.rotation()
    eye = camera.eye

    tri2d_all, depth_all, wmat_all = [], [], []
    item_all, face_all, clip_flag = [], [], []
    for idx, item in enumerate(items):
        verts = item.positions_numpy()
        cam = (verts - eye) @ rot.T
        tri_cam = cam[item.faces]
        pos, wmat, src, clipped = _clip_triangles(tri_cam, settings.near)
        if pos.shape[0] == 0:
            continue
        pix, depth = _project(pos, camera, width, height)
        tri2d_all.append(pix)
        depth_all.append(depth)
        wmat_all.append(wmat)
        item_all.append(np.full(src.size, idx, dtype=np.int64))
        face_all.append(src)
        clip_flag.append(clipped)

    cover = np.zeros(n_pix, dtype=bool)
    out_item = np.full(n_pix, -1, dtype=np.int64)
    out_face = np.full(n_pix, -1, dtype=np.int64)
    out_weights = np.zeros((n_pix, 3))
    any_clipped = np.zeros(len(items), dtype=bool)

    if not tri2d_all:
        return _Visibility(cover, out_item, out_face, out_weights, any_clipped)

    tri2d = np.concatenate(tri2d_all)
    tdepth = np.concatenate(depth_all)
    wmat = np.concatenate(wmat_all)
    titem = np.concatenate(item_all)
    tface = np.concatenate(face_all)
    tclip = np.concatenate(clip_flag)
    for idx in range(len(items)):
        any_clipped[idx] = bool(tclip[titem == idx].any())

    zbuf = np.full(n_pix, np.inf)
    best_tri = np.full(n_pix, -1, dtype=np.int64)
    best_w = np.zeros((n_pix, 3))

    # linear edge-function coefficients: w = (a*px + b*py + c) / det
    ax, ay = tri2d[:, 0, 0], tri2d[:, 0, 1]
    bx, by = tri2d[:, 1, 0], tri2d[:, 1, 1]
    cx, cy = tri2d[:, 2, 0], tri2d[:, 2, 1]
    det = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
    valid_tri = np.abs(det) > 1e-12
    det_safe = np.where(valid_tri, det, 1.0)
    coef = np.stack(
        [
            (by - cy) / det_safe,
            (cx - bx) / det_safe,
            -((by - cy) * cx + (cx - bx) * cy) / det_safe,
            (cy - ay) / det_safe,
            (ax - cx) / det_safe,
            -((cy - ay) * cx + (ax - cx) * cy) / det_safe,
        ],
        axis=1,
    )
    inv_depth = 1.0 / tdepth  # (T,3)

    chunk = 96
    total = tri2d.shape[0]
    for start in range(0, total, chunk):
        end = min(start + chunk, total)
        ok = valid_tri[start:end]
        if not ok.any():
            continue
        # crop the pixel grid to the chunk's screen bounding box
        xs = tri2d[start:end, :, 0][ok]
        ys = tri2d[start:end, :, 1][ok]
        x0 = max(0, int(np.floor(xs.min() - 0.5)))
        x1 = min(width, int(np.ceil(xs.max() + 0.5)))
        y0 = max(0, int(np.floor(ys.min() - 0.5)))
        y1 = min(height, int(np.ceil(ys.max() + 0.5)))
        if x0 >= x1 or y0 >= y1:
            continue
        px = (np.arange(x0, x1) + 0.5)[None, :]
        py = (np.arange(y0, y1) + 0.5)[:, None]
        flat = (np.arange(y0, y1)[:, None] * width + np.arange(x0, x1)[None, :]).ravel()

        cf = coef[start:end]
        w0 = (cf[:, 0, None, None] * px + cf[:, 1, None, None] * py + cf[:, 2, None, None])
        w1 = (cf[:, 3, None, None] * px + cf[:, 4, None, None] * py + cf[:, 5, None, None])
        w0 = w0.reshape(end - start, -1)
        w1 = w1.reshape(end - start, -1)
        w2 = 1.0 - w0 - w1
        inside = (
            (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
            & valid_tri[start:end, None]
        )

        inv = (
            w0 * inv_depth[start:end, 0, None]
            + w1 * inv_depth[start:end, 1, None]
            + w2 * inv_depth[start:end, 2, None]
        )
        depth_px = np.where(inside & (inv > 1e-12), 1.0 / np.maximum(inv, 1e-12), np.inf)

        local_best = np.argmin(depth_px, axis=0)
        pick = np.arange(depth_px.shape[1])
        local_depth = depth_px[local_best, pick]
        improve = local_depth < zbuf[flat]
        if not improve.any():
            continue
        sub = np.flatnonzero(improve)
        sel = flat[sub]
        tri_sel = local_best[sub] + start
        zbuf[sel] = local_depth[sub]
        best_tri[sel] = tri_sel
        lw0 = w0[local_best[sub], sub] * inv_depth[tri_sel, 0]
        lw1 = w1[local_best[sub], sub] * inv_depth[tri_sel, 1]
        lw2 = w2[local_best[sub], sub] * inv_depth[tri_sel, 2]
        total_w = lw0 + lw1 + lw2
        best_w[sel, 0] = lw0 / total_w
        best_w[sel, 1] = lw1 / total_w
        best_w[sel, 2] = lw2 / total_w

    cover = best_tri >= 0
    sel = np.flatnonzero(cover)
    if sel.size:
        tri_sel = best_tri[sel]
        out_item[sel] = titem[tri_sel]
        out_face[sel] = tface[tri_sel]
        # express weights over the ORIGINAL triangle vertices via the clip matrix
        out_weights[sel] = np.einsum("pk,pkj->pj", best_w[sel], wmat[tri_sel])
    return _Visibility(cover, out_item, out_face, out_weights, any_clipped)


# ---------------------------------------------------------------------------
# shading and composition


def _shading_factors_np(item: RenderItem) -> np.ndarray:
    verts = item.positions_numpy()
    f = item.faces
    n = np.cross(verts[f[:, 1]] - verts[f[:, 0]], verts[f[:, 2]] - verts[f[:, 0]])
    n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-30)
    lambert = np.abs(n @ _LIGHT_DIRS.T) @ _LIGHT_POWER
    return np.clip(_AMBIENT + lambert, 0.0, 1.0)


def _shading_factors_torch(positions: torch.Tensor, faces: np.ndarray) -> torch.Tensor:
    f = torch.as_tensor(faces, dtype=torch.long)
    e1 = positions[f[:, 1]] - positions[f[:, 0]]
    e2 = positions[f[:, 2]] - positions[f[:, 0]]
    n = torch.cross(e1, e2, dim=1)
    n = n / torch.clamp(n.norm(dim=1, keepdim=True), min=1e-30)
    dirs = torch.as_tensor(_LIGHT_DIRS, dtype=positions.dtype)
    power = torch.as_tensor(_LIGHT_POWER, dtype=positions.dtype)
    lambert = torch.abs(n @ dirs.T) @ power
    return torch.clamp(_AMBIENT + lambert, 0.0, 1.0)


def _sample_texture(texture: np.ndarray, uv: np.ndarray, tiling_scale: float) -> np.ndarray:
    th, tw = texture.shape[:2]
    u = np.mod(uv[:, 0] * tiling_scale, 1.0)
    v = np.mod(uv[:, 1] * tiling_scale, 1.0)
    xi = np.minimum((u * tw).astype(np.int64), tw - 1)
    yi = np.minimum((v * th).astype(np.int64), th - 1)
    return texture[yi, xi]


def _item_pixel_values(
    item: RenderItem,
    pix_idx: np.ndarray,
    vis: _Visibility,
    camera: CameraPose,
    settings: RenderSettings,
    dtype,
) -> torch.Tensor:
    faces_px = vis.face[pix_idx]
    shade = None

    if item.geometry_grad:
        if not isinstance(item.vertices, torch.Tensor):
            raise GradientUnsupported("geometry gradients require torch vertex positions")
        if vis.any_clipped[_item_index(item)]:
            raise GradientUnsupported("geometry gradients unsupported for near-clipped faces")
        weights, depth_ok = _torch_barycentrics(item, pix_idx, vis, camera, settings)
        if settings.shading:
            shade = _shading_factors_torch(item.vertices, item.faces)[faces_px]
    else:
        weights = torch.as_tensor(vis.weights[pix_idx], dtype=dtype)
        if settings.shading:
            shade = torch.as_tensor(_shading_factors_np(item)[faces_px], dtype=dtype)

    if item.vertex_colors is not None:
        colors = _as_tensor(item.vertex_colors, dtype)
        tri_ids = torch.as_tensor(item.faces[faces_px], dtype=torch.long)
        corner = colors[tri_ids]                        # (m,3,3)
        values = (weights.to(corner.dtype).unsqueeze(-1) * corner).sum(dim=1)
    elif item.face_colors is not None:
        colors = _as_tensor(item.face_colors, dtype)
        values = colors[torch.as_tensor(faces_px, dtype=torch.long)]
    elif item.texture is not None:
        uvs = item.uv[item.faces[faces_px]]             # (m,3,2)
        uv_px = (vis.weights[pix_idx][..., None] * uvs).sum(axis=1)
        sampled = _sample_texture(item.texture, uv_px, item.tiling_scale)
        values = torch.as_tensor(sampled, dtype=dtype)
    else:
        raise OutOfRange("render item has neither colors nor texture")

    if shade is not None:
        values = values * shade.to(values.dtype).unsqueeze(-1)
    return values


_ITEM_REGISTRY: dict[int, int] = {}


def _item_index(item: RenderItem) -> int:
    return _ITEM_REGISTRY[id(item)]


def _torch_barycentrics(
    item: RenderItem,
    pix_idx: np.ndarray,
    vis: _Visibility,
    camera: CameraPose,
    settings: RenderSettings,
):
    """Differentiable perspective-correct weights at already-resolved pixels."""
    width, height = settings.resolution
    pos = item.vertices
    dtype = pos.dtype
    rot = torch.as_tensor(camera.rotation(), dtype=dtype)
    eye = torch.as_tensor(camera.eye, dtype=dtype)
    cam = (pos - eye) @ rot.T
    depth = -cam[:, 2]
    f = 1.0 / math.tan(math.radians(camera.fov_deg) / 2.0)
    aspect = width / height
    px = ((f / aspect) * cam[:, 0] / depth + 1.0) * 0.5 * width
    py = (1.0 - f * cam[:, 1] / depth) * 0.5 * height
    proj = torch.stack([px, py], dim=1)

    faces_px = vis.face[pix_idx]
    tri = torch.as_tensor(item.faces[faces_px], dtype=torch.long)
    a, b, c = proj[tri[:, 0]], proj[tri[:, 1]], proj[tri[:, 2]]
    cols = (pix_idx % width) + 0.5
    rows = (pix_idx // width) + 0.5
    p = torch.as_tensor(np.stack([cols, rows], axis=1), dtype=dtype)

    def cross2(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    area = cross2(b - a, c - a)
    w0 = cross2(b - p, c - p) / area
    w1 = cross2(c - p, a - p) / area
    w2 = 1.0 - w0 - w1
    d0, d1, d2 = depth[tri[:, 0]], depth[tri[:, 1]], depth[tri[:, 2]]
    q0, q1, q2 = w0 / d0, w1 / d1, w2 / d2
    inv = q0 + q1 + q2
    weights = torch.stack([q0 / inv, q1 / inv, q2 / inv], dim=1)
    return weights, depth


def render_items(
    items: list[RenderItem],
    camera: CameraPose,
    settings: RenderSettings,
) -> RenderOutput:
    """Z-buffered perspective rasterization of a list of draw items."""
    width, height = settings.resolution
    vis = _visibility_pass(items, camera, settings)
    if not vis.cover.any():
        raise EmptyRender("no face projected inside the frame")

    dtype = torch.float64
    for item in items:
        for attr in (item.vertex_colors, item.face_colors, item.vertices):
            if isinstance(attr, torch.Tensor):
                dtype = attr.dtype
                break

    _ITEM_REGISTRY.clear()
    for idx, item in enumerate(items):
        _ITEM_REGISTRY[id(item)] = idx

    image = torch.zeros((height * width, 3), dtype=dtype)
    for idx, item in enumerate(items):
        pix_idx = np.flatnonzero(vis.item == idx)
        if pix_idx.size == 0:
            continue
        values = _item_pixel_values(item, pix_idx, vis, camera, settings, dtype)
        image = image.index_put((torch.as_tensor(pix_idx, dtype=torch.long),), values.to(dtype))

    return RenderOutput(
        image=image.reshape(height, width, 3),
        mask=vis.cover.reshape(height, width),
        pix_item=vis.item.reshape(height, width),
        pix_face=vis.face.reshape(height, width),
    )


def rasterize(
    mesh: TriangleMesh,
    vertex_colors,
    camera: CameraPose,
    settings: RenderSettings,
    face_colors=None,
    geometry_grad: bool = False,
    positions=None,
) -> RenderOutput:
    """Render one mesh with per-vertex (or per-face) colors."""
    item = RenderItem(
        vertices=positions if positions is not None else mesh.vertices,
        faces=mesh.faces,
        vertex_colors=vertex_colors,
        face_colors=face_colors,
        geometry_grad=geometry_grad,
    )
    return render_items([item], camera, settings)


# ---------------------------------------------------------------------------
# backgrounds and crops


def composite_background(
    output: RenderOutput,
    mode: str,
    rng: np.random.Generator,
    settings: RenderSettings | None = None,
) -> torch.Tensor:
    """Replace background pixels; foreground pixels are never altered."""
    height, width = output.mask.shape
    cells = settings.checker_cells if settings is not None else 8
    if mode == "white":
        bg = np.ones((height, width, 3))
    elif mode == "black":
        bg = np.zeros((height, width, 3))
    elif mode == "gaussian":
        bg = np.clip(rng.normal(0.5, 0.25, size=(height, width, 3)), 0.0, 1.0)
    elif mode == "checkerboard":
        phase = rng.integers(0, cells, size=2)
        yy = (np.arange(height)[:, None] + phase[0]) // cells
        xx = (np.arange(width)[None, :] + phase[1]) // cells
        bg = ((yy + xx) % 2).astype(np.float64)[..., None].repeat(3, axis=2)
    else:
        raise OutOfRange(f"unknown background mode {mode!r}")
    mask = torch.as_tensor(output.mask)
    bg_t = torch.as_tensor(bg, dtype=output.image.dtype)
    return torch.where(mask.unsqueeze(-1), output.image, bg_t)


def _homography_from_corners(dst: np.ndarray, src: np.ndarray) -> np.ndarray:
    """3x3 H with src ~ H @ dst (both (4,2), normalized coordinates)."""
    a = []
    b = []
    for (x, y), (u, v) in zip(dst, src):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        b.append(u)
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.append(v)
    h = np.linalg.solve(np.asarray(a), np.asarray(b))
    return np.append(h, 1.0).reshape(3, 3)


def augment_view_crop(
    image: torch.Tensor,
    rng: np.random.Generator,
    settings: RenderSettings,
) -> torch.Tensor:
    """Random perspective warp plus a crop covering crop_min..crop_max of the
    source area, resampled to the encoder resolution (differentiable)."""
    height, width = image.shape[0], image.shape[1]
    res = settings.encoder_resolution

    area = float(rng.uniform(settings.crop_min, settings.crop_max))
    side = math.sqrt(area)
    x0 = float(rng.uniform(0.0, 1.0 - side)) if side < 1.0 else 0.0
    y0 = float(rng.uniform(0.0, 1.0 - side)) if side < 1.0 else 0.0
    corners = np.array(
        [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    )
    jitter = settings.perspective_jitter * side
    corners = corners + rng.uniform(-jitter, jitter, size=(4, 2))
    corners = np.clip(corners, 0.0, 1.0)

    dst = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    h_mat = _homography_from_corners(dst, corners)

    ys = (np.arange(res) + 0.5) / res
    xs = (np.arange(res) + 0.5) / res
    gx, gy = np.meshgrid(xs, ys)
    ones = np.ones_like(gx)
    pts = np.stack([gx, gy, ones], axis=-1) @ h_mat.T
    sx = pts[..., 0] / pts[..., 2]
    sy = pts[..., 1] / pts[..., 2]
    grid = np.stack([2.0 * sx - 1.0, 2.0 * sy - 1.0], axis=-1)

    inp = image.permute(2, 0, 1).unsqueeze(0)
    grid_t = torch.as_tensor(grid, dtype=image.dtype).unsqueeze(0)
    out = torch.nn.functional.grid_sample(
        inp, grid_t, mode="bilinear", padding_mode="zeros", align_corners=False
    )
    return out[0].permute(1, 2, 0)


# ---------------------------------------------------------------------------
# scene cameras


def scene_camera_set(scene, count: int = 20, check_resolution: int = 64) -> list[CameraPose]:
    """Deterministic interior camera poses jointly covering the scene.

    Pure function of the scene geometry; raises CoverageFailure if some
    object is invisible from every pose.
    """
    from .core import ValidatedScene  # local import to avoid cycle at module load

    assert isinstance(scene, ValidatedScene)
    lo, hi = scene.bounds()
    center = 0.5 * (lo + hi)
    ext = np.maximum(hi - lo, 1e-6)

    targets = [center]
    for obj in scene.objects:
        o_lo, o_hi = obj.world_mesh.bounds()
        targets.append(0.5 * (o_lo + o_hi))

    poses: list[CameraPose] = []
    ring = [(0.36, 0.62, 12), (0.22, 0.42, count - 12)]
    pose_index = 0
    for radius_frac, height_frac, n_poses in ring:
        for k in range(n_poses):
            angle = 2.0 * math.pi * k / max(n_poses, 1)
            eye = center + np.array(
                [
                    radius_frac * ext[0] * math.cos(angle),
                    radius_frac * ext[1] * math.sin(angle),
                    lo[2] + height_frac * ext[2] - center[2],
                ]
            )
            target = np.asarray(targets[pose_index % len(targets)], dtype=np.float64)
            direction = target - eye
            if np.linalg.norm(direction) < 1e-6:
                target = target + np.array([0.05 * ext[0], 0.0, 0.0])
                direction = target - eye
            vertical = abs(direction[2]) / max(np.linalg.norm(direction), 1e-12)
            if vertical > 0.98:  # nearly straight down: nudge to keep up usable
                target = target + np.array([0.1 * ext[0], 0.1 * ext[1], 0.0])
            poses.append(
                CameraPose(eye=eye, target=target, up=(0.0, 0.0, 1.0), fov_deg=70.0, view_tag="scene")
            )
            pose_index += 1

    if scene.objects:
        _check_scene_coverage(scene, poses, check_resolution)
    return poses


def _check_scene_coverage(scene, poses: list[CameraPose], resolution: int) -> None:
    settings = RenderSettings(resolution=(resolution, resolution))
    items = _plain_scene_items(scene)
    n_structure = len(scene.structure)
    seen = set()
    for pose in poses:
        try:
            out = render_items(items, pose, settings)
        except EmptyRender:
            continue
        visible = np.unique(out.pix_item[out.pix_item >= n_structure])
        seen.update(int(v) - n_structure for v in visible)
    missing = [i for i in range(len(scene.objects)) if i not in seen]
    if missing:
        raise CoverageFailure(f"objects invisible from all scene cameras: {missing}")


def _plain_scene_items(scene) -> list[RenderItem]:
    """Gray-colored scene items (structure first, then objects)."""
    items = []
    for el in scene.structure:
        n = el.mesh.vertex_count
        items.append(
            RenderItem(
                vertices=el.mesh.vertices,
                faces=el.mesh.faces,
                vertex_colors=np.full((n, 3), 0.6),
            )
        )
    for obj in scene.objects:
        n = obj.world_mesh.vertex_count
        items.append(
            RenderItem(
                vertices=obj.world_mesh.vertices,
                faces=obj.world_mesh.faces,
                vertex_colors=np.full((n, 3), 0.5),
            )
        )
    return items
