"""Mesh segmentation, segment adjacency, spectral basis, and positional encodings."""

from __future__ import annotations

import hashlib
import heapq
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .core import TriangleMesh
from .errors import KTooLarge, LabelMismatch, NumericalFailure, SegmentationFailure

SPECTRAL_DIM = 128
FOURIER_ROWS = 128
FOURIER_SIGMA = 5.0
COT_WEIGHT_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# labelings and adjacency


@dataclass(frozen=True)
class PartLabeling:
    """Per-face segment ids covering {0..K-1}."""

    face_segments: np.ndarray
    segment_count: int

    def __post_init__(self):
        object.__setattr__(
            self, "face_segments", np.asarray(self.face_segments, dtype=np.int64)
        )

    def validate(self, mesh: TriangleMesh) -> None:
        ids = self.face_segments
        if ids.shape != (mesh.face_count,):
            raise LabelMismatch("labeling face count differs from mesh")
        present = np.unique(ids)
        if present.size != self.segment_count or present[0] != 0 or present[-1] != self.segment_count - 1:
            raise LabelMismatch("segment ids must exactly cover 0..K-1")
        adj = face_adjacency(mesh)
        for seg in range(self.segment_count):
            members = np.flatnonzero(ids == seg)
            if not _faces_connected(members, adj):
                raise LabelMismatch(f"segment {seg} is not edge-connected")

    def segment_faces(self, segment: int) -> np.ndarray:
        return np.flatnonzero(self.face_segments == segment)

    def segment_areas(self, mesh: TriangleMesh) -> np.ndarray:
        areas = np.zeros(self.segment_count)
        np.add.at(areas, self.face_segments, mesh.face_areas())
        return areas


@dataclass(frozen=True)
class SegmentGraph:
    """Undirected adjacency between segments sharing at least one mesh edge."""

    node_count: int
    edges: frozenset[tuple[int, int]]

    def neighbors(self, node: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)

    def degree(self, node: int) -> int:
        return sum(1 for a, b in self.edges if a == node or b == node)


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def face_adjacency(mesh: TriangleMesh) -> dict[int, list[int]]:
    """Faces sharing an undirected vertex-pair edge."""
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault(_edge_key(int(u), int(v)), []).append(fi)
    adj: dict[int, list[int]] = {i: [] for i in range(mesh.face_count)}
    for members in edge_faces.values():
        for i in members:
            for j in members:
                if i != j:
                    adj[i].append(j)
    return adj


def _faces_connected(members: np.ndarray, adj: dict[int, list[int]]) -> bool:
    if members.size == 0:
        return False
    member_set = set(int(m) for m in members)
    seen = {int(members[0])}
    queue = deque(seen)
    while queue:
        f = queue.popleft()
        for g in adj[f]:
            if g in member_set and g not in seen:
                seen.add(g)
                queue.append(g)
    return len(seen) == len(member_set)


def segment_adjacency(mesh: TriangleMesh, labeling: PartLabeling) -> SegmentGraph:
    """Edge (a,b) present iff some mesh edge is shared by a face of a and a
    face of b."""
    ids = labeling.face_segments
    if ids.shape != (mesh.face_count,):
        raise LabelMismatch("labeling face count differs from mesh")
    edges: set[tuple[int, int]] = set()
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault(_edge_key(int(u), int(v)), []).append(fi)
    for members in edge_faces.values():
        segs = sorted({int(ids[f]) for f in members})
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                edges.add((segs[i], segs[j]))
    return SegmentGraph(node_count=labeling.segment_count, edges=frozenset(edges))


# ---------------------------------------------------------------------------
# over-segmentation


@dataclass(frozen=True)
class SegmentationParams:
    min_segments: int = 1
    max_segments: int = 64
    angle_deg: float = 25.0
    min_region_faces: int = 1


def default_segment_target(face_count: int, cap: int = 64, faces_per_segment: int = 50) -> int:
    """Over-segmentation budget: min(cap, faces/faces_per_segment), at least 1."""
    return max(1, min(cap, face_count // faces_per_segment))


def _region_grow(mesh: TriangleMesh, adj: dict[int, list[int]], cos_threshold: float) -> np.ndarray:
    normals = mesh.face_normals()
    labels = np.full(mesh.face_count, -1, dtype=np.int64)
    current = 0
    for start in range(mesh.face_count):
        if labels[start] != -1:
            continue
        labels[start] = current
        queue = deque([start])
        while queue:
            f = queue.popleft()
            for g in adj[f]:
                if labels[g] == -1 and float(normals[f] @ normals[g]) > cos_threshold:
                    labels[g] = current
                    queue.append(g)
        current += 1
    return labels


def _relabel_canonical(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Contiguous ids ordered by each segment's smallest face index."""
    order: dict[int, int] = {}
    for lab in labels:
        if int(lab) not in order:
            order[int(lab)] = len(order)
    out = np.asarray([order[int(lab)] for lab in labels], dtype=np.int64)
    return out, len(order)


def _split_region(
    members: np.ndarray, adj: dict[int, list[int]], parts: int
) -> list[np.ndarray]:
    """Balanced split of a connected face set via farthest seeds and
    smallest-region-first multi-source growth."""
    member_set = set(int(m) for m in members)
    parts = min(parts, len(member_set))

    def bfs_dist(sources: list[int]) -> dict[int, int]:
        dist = {s: 0 for s in sources}
        queue = deque(sources)
        while queue:
            f = queue.popleft()
            for g in adj[f]:
                if g in member_set and g not in dist:
                    dist[g] = dist[f] + 1
                    queue.append(g)
        return dist

    seeds = [int(members.min())]
    while len(seeds) < parts:
        dist = bfs_dist(seeds)
        far = max(member_set, key=lambda f: (dist.get(f, -1), -f))
        seeds.append(far)

    assignment = {s: i for i, s in enumerate(seeds)}
    frontiers = [deque([s]) for s in seeds]
    sizes = [1] * parts
    heap = [(1, i) for i in range(parts)]
    heapq.heapify(heap)
    while heap:
        size, region = heapq.heappop(heap)
        if size != sizes[region]:
            continue
        frontier = frontiers[region]
        grew = False
        while frontier:
            f = frontier.popleft()
            for g in sorted(adj[f]):
                if g in member_set and g not in assignment:
                    assignment[g] = region
                    frontier.append(g)
                    sizes[region] += 1
                    grew = True
                    break
            if grew:
                frontier.appendleft(f)
                break
        if grew:
            heapq.heappush(heap, (sizes[region], region))
    groups = [[] for _ in range(parts)]
    for f, r in assignment.items():
        groups[r].append(f)
    return [np.asarray(sorted(g), dtype=np.int64) for g in groups if g]


def super_segment(mesh: TriangleMesh, params: SegmentationParams | None = None) -> PartLabeling:
    """Geometric over-segmentation: dihedral-angle region growing, then
    absorb/merge down to max_segments or split up to min_segments."""
    params = params or SegmentationParams()
    if mesh.face_count < params.min_segments:
        raise SegmentationFailure(
            f"mesh has {mesh.face_count} faces < min_segments={params.min_segments}"
        )
    adj = face_adjacency(mesh)
    cos_threshold = float(np.cos(np.deg2rad(params.angle_deg)))
    labels = _region_grow(mesh, adj, cos_threshold)
    labels, count = _relabel_canonical(labels)

    normals = mesh.face_normals()
    areas = mesh.face_areas()

    def segment_normal(members: np.ndarray) -> np.ndarray:
        n = (normals[members] * areas[members, None]).sum(axis=0)
        norm = np.linalg.norm(n)
        return n / norm if norm > 1e-30 else normals[members[0]]

    def merge_pass(limit: int, min_faces: int) -> None:
        nonlocal labels, count
        while True:
            sizes = np.bincount(labels, minlength=count)
            too_many = count > limit
            tiny = (sizes < min_faces) & (sizes > 0)
            if not too_many and not tiny.any():
                return
            if tiny.any():
                victim = int(np.flatnonzero(tiny)[np.argmin(sizes[tiny])])
            else:
                victim = int(np.argmin(sizes))
            members = np.flatnonzero(labels == victim)
            neighbor_segs = sorted(
                {int(labels[g]) for f in members for g in adj[f] if labels[g] != victim}
            )
            if not neighbor_segs:
                if too_many:
                    return  # isolated component; cannot reduce further
                break
            vn = segment_normal(members)
            best = min(
                neighbor_segs,
                key=lambda s: (-float(vn @ segment_normal(np.flatnonzero(labels == s))), s),
            )
            labels[members] = best
            labels, count = _relabel_canonical(labels)

    merge_pass(params.max_segments, params.min_region_faces)

    while count < params.min_segments:
        sizes = np.bincount(labels, minlength=count)
        largest = int(np.argmax(sizes))
        members = np.flatnonzero(labels == largest)
        need = params.min_segments - count + 1
        groups = _split_region(members, adj, min(need, members.size))
        if len(groups) <= 1:
            raise SegmentationFailure("cannot split mesh to requested granularity")
        labels = labels.copy()
        for extra, group in enumerate(groups[1:], start=1):
            labels[group] = count + extra - 1
        labels, count = _relabel_canonical(labels)

    return PartLabeling(labels, count)


# ---------------------------------------------------------------------------
# Laplace-Beltrami basis


@dataclass(frozen=True)
class SpectralBasis:
    """Mass-orthonormal eigenpairs of the cotangent Laplacian (ascending)."""

    eigenvalues: np.ndarray
    coefficients: np.ndarray  # (n_vertices, k)
    mass: np.ndarray

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])

    def gram(self) -> np.ndarray:
        return self.coefficients.T @ (self.mass[:, None] * self.coefficients)

    def padded(self, dim: int = SPECTRAL_DIM) -> np.ndarray:
        """Per-vertex coefficients zero-padded (or truncated) to `dim`."""
        n, k = self.coefficients.shape
        if k >= dim:
            return self.coefficients[:, :dim]
        out = np.zeros((n, dim))
        out[:, :k] = self.coefficients
        return out


def _cotangent_laplacian(mesh: TriangleMesh) -> tuple[scipy.sparse.csr_matrix, np.ndarray]:
    v = mesh.vertices
    f = mesh.faces
    n = mesh.vertex_count
    rows, cols, vals = [], [], []
    for k in range(3):
        i = f[:, k]
        j = f[:, (k + 1) % 3]
        o = f[:, (k + 2) % 3]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = (e1 * e2).sum(axis=1) / np.maximum(cross, 1e-30)
        w = np.maximum(0.5 * cot, COT_WEIGHT_FLOOR)
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    w = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    d = np.asarray(w.sum(axis=1)).ravel()
    lap = scipy.sparse.diags(d) - w

    mass = np.zeros(n)
    np.add.at(mass, f.ravel(), np.repeat(mesh.face_areas() / 3.0, 3))
    mass = np.maximum(mass, 1e-30)
    return lap.tocsr(), mass


def vertex_components(mesh: TriangleMesh) -> np.ndarray:
    """Connected-component label per vertex (edge connectivity)."""
    n = mesh.vertex_count
    rows = mesh.faces[:, [0, 1, 2]].ravel()
    cols = mesh.faces[:, [1, 2, 0]].ravel()
    adj = scipy.sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    count, labels = scipy.sparse.csgraph.connected_components(adj, directed=False)
    return labels


def laplace_beltrami_basis(mesh: TriangleMesh, k: int) -> SpectralBasis:
    """Solve L phi = lambda M phi for the k smallest eigenvalues.

    Disconnected meshes are solved per component; eigenfunctions are
    zero-padded onto the full vertex set and globally re-sorted.
    """
    n = mesh.vertex_count
    if k > n:
        raise KTooLarge(f"k={k} exceeds vertex count {n}")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    lap, mass = _cotangent_laplacian(mesh)
    comp = vertex_components(mesh)

    pairs: list[tuple[float, np.ndarray]] = []
    for c in np.unique(comp):
        idx = np.flatnonzero(comp == c)
        nc = idx.size
        kc = min(k, nc)
        sub_l = lap[np.ix_(idx, idx)]
        sub_m = mass[idx]
        try:
            if nc <= 600 or kc >= nc - 1:
                dense = sub_l.toarray()
                vals, vecs = scipy.linalg.eigh(dense, np.diag(sub_m))
                vals, vecs = vals[:kc], vecs[:, :kc]
            else:
                m_mat = scipy.sparse.diags(sub_m).tocsc()
                vals, vecs = scipy.sparse.linalg.eigsh(
                    sub_l.tocsc(), k=kc, M=m_mat, sigma=-1e-6, which="LM"
                )
                order = np.argsort(vals)
                vals, vecs = vals[order], vecs[:, order]
        except (scipy.sparse.linalg.ArpackNoConvergence, np.linalg.LinAlgError) as exc:
            raise NumericalFailure(f"eigensolver failed: {exc}") from exc
        for j in range(kc):
            full = np.zeros(n)
            full[idx] = vecs[:, j]
            pairs.append((float(vals[j]), full))

    pairs.sort(key=lambda p: p[0])
    pairs = pairs[:k]
    eigenvalues = np.asarray([max(p[0], 0.0) if abs(p[0]) < 1e-8 else p[0] for p in pairs])
    coefficients = np.column_stack([p[1] for p in pairs])
    return SpectralBasis(eigenvalues, coefficients, mass)


def mesh_content_hash(mesh: TriangleMesh) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.faces).tobytes())
    return h.hexdigest()


def cached_basis(mesh: TriangleMesh, k: int, cache_dir: str | Path | None) -> SpectralBasis:
    """Basis with a binary sidecar cache keyed by mesh content hash and k."""
    if cache_dir is None:
        return laplace_beltrami_basis(mesh, k)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"{mesh_content_hash(mesh)}_k{k}.npz"
    path = cache_dir / key
    if path.exists():
        data = np.load(path)
        return SpectralBasis(data["eigenvalues"], data["coefficients"], data["mass"])
    basis = laplace_beltrami_basis(mesh, k)
    np.savez(
        path,
        eigenvalues=basis.eigenvalues,
        coefficients=basis.coefficients,
        mass=basis.mass,
    )
    return basis


# ---------------------------------------------------------------------------
# Fourier features


@dataclass(frozen=True)
class FrequencyMatrix:
    """Random projection rows for positional encoding, reproducible from seed."""

    matrix: np.ndarray
    seed: int

    @classmethod
    def from_seed(cls, seed: int, rows: int = FOURIER_ROWS, sigma: float = FOURIER_SIGMA):
        rng = np.random.default_rng(seed)
        return cls(matrix=rng.normal(0.0, sigma, size=(rows, 3)), seed=seed)


def fourier_features(points: np.ndarray, freq: FrequencyMatrix) -> np.ndarray:
    """[cos(2 pi B p), sin(2 pi B p)] per point; 2*rows values per point."""
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    arg = 2.0 * np.pi * (pts @ freq.matrix.T)
    out = np.concatenate([np.cos(arg), np.sin(arg)], axis=1)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# subdivision (detail-stage face budget)


def subdivide_midpoint(mesh: TriangleMesh, face_budget: int) -> TriangleMesh:
    """1-to-4 midpoint subdivision until the face count reaches the budget."""
    verts = mesh.vertices
    faces = mesh.faces
    while faces.shape[0] < face_budget:
        verts_list = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                midpoint[key] = len(verts_list)
                verts_list.append(0.5 * (verts_list[a] + verts_list[b]))
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(int(a), int(b)), mid(int(b), int(c)), mid(int(c), int(a))
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(verts_list)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriangleMesh(verts, faces)


def subdivided_labeling(labeling: PartLabeling, factor: int = 4) -> PartLabeling:
    """Labeling carried through k rounds of 1-to-4 subdivision (children keep
    the parent's segment)."""
    return PartLabeling(np.repeat(labeling.face_segments, factor), labeling.segment_count)
