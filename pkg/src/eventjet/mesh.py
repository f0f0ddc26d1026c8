"""Triangle meshes, inside/outside labelling and neural fits of altitude surfaces.

Inside tests use ray casting with the Moller-Trumbore intersection.  A ray
that passes too close to an edge or vertex is thrown away and another random
direction is tried, so parity never counts a shared edge twice.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import FitError, SchemaError
from .netpoly import Layer, PolicyNet

EDGE_EPS = 1e-9
DET_EPS = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int

    def __post_init__(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise SchemaError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise SchemaError("faces must be triangles")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise SchemaError("face index out of range")

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(len(counts)) and bool(np.all(counts == 2))

    def require_watertight(self) -> "TriangleMesh":
        if not self.is_watertight():
            raise SchemaError("mesh is not watertight (unpaired edges)")
        return self


def _weld(tris: np.ndarray) -> TriangleMesh:
    verts, inverse = np.unique(tris.reshape(-1, 3), axis=0, return_inverse=True)
    return TriangleMesh(verts, inverse.reshape(-1, 3))


def load_stl(path) -> TriangleMesh:
    data = Path(path).read_bytes()
    if len(data) >= 84:
        n = struct.unpack_from("<I", data, 80)[0]
        if 84 + 50 * n == len(data):
            rec = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
            arr = np.frombuffer(data, dtype=rec, count=n, offset=84)
            return _weld(arr["v"].astype(float))
    text = data.decode("ascii", errors="replace")
    verts = [list(map(float, line.split()[1:4])) for line in text.splitlines() if line.strip().startswith("vertex")]
    if not verts or len(verts) % 3:
        raise SchemaError(f"{path}: not a readable STL file")
    return _weld(np.asarray(verts).reshape(-1, 3, 3))


def load_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            if len(idx) != 3:
                raise SchemaError(f"{path}: only triangular faces are supported")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return TriangleMesh(np.asarray(verts, dtype=float), np.asarray(faces, dtype=int))


def load_mesh(path) -> TriangleMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".stl":
        return load_stl(path)
    if suffix == ".obj":
        return load_obj(path)
    raise SchemaError(f"unsupported mesh format {suffix!r}")


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron with vertices on the sphere."""
    t = (1.0 + 5**0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(radius * np.array(verts), np.array(faces, dtype=int))


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriangleMesh:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    corners = np.array([[hi[i] if (k >> i) & 1 else lo[i] for i in range(3)] for k in range(8)])
    faces = [(0, 2, 1), (1, 2, 3), (4, 5, 6), (5, 7, 6), (0, 1, 4), (1, 5, 4),
             (2, 6, 3), (3, 6, 7), (0, 4, 2), (2, 4, 6), (1, 3, 5), (3, 7, 5)]
    return TriangleMesh(corners, np.array(faces, dtype=int))


# ---------------------------------------------------------------------------
# ray casting


def _ray_hits(tris: np.ndarray, origin: np.ndarray, direction: np.ndarray):
    """Moller-Trumbore against all triangles; returns (hit count, degenerate)."""
    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = v1 - v0, v2 - v0
    pvec = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    parallel = np.abs(det) < DET_EPS
    inv = np.where(parallel, 0.0, 1.0 / np.where(parallel, 1.0, det))
    tvec = origin - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ direction) * inv
    t = np.einsum("ij,ij->i", e2, qvec) * inv
    inside = (~parallel) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    near_edge = (~parallel) & (t > 0) & (u > -EDGE_EPS) & (v > -EDGE_EPS) & (u + v < 1 + EDGE_EPS) & (
        (np.abs(u) < EDGE_EPS) | (np.abs(v) < EDGE_EPS) | (np.abs(u + v - 1) < EDGE_EPS)
    )
    # a hit at t ~ 0 means the point lies on the surface; count it as degenerate too
    on_surface = inside & (t < EDGE_EPS)
    return int(np.count_nonzero(inside)), bool(np.any(near_edge) or np.any(on_surface))


def point_in_mesh(mesh: TriangleMesh, p, seed: int = 0, max_tries: int = 16) -> bool:
    """Ray-casting parity; random ray directions, re-drawn after near-edge hits."""
    if not mesh.is_watertight():
        raise SchemaError("point_in_mesh needs a watertight mesh")
    return _inside(mesh.triangles, np.asarray(p, dtype=float), np.random.default_rng(seed), max_tries)


def _inside(tris, p, rng, max_tries) -> bool:
    for _ in range(max_tries):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        hits, degenerate = _ray_hits(tris, p, d)
        if not degenerate:
            return hits % 2 == 1
    raise SchemaError(f"no clean ray found from {p.tolist()} after {max_tries} tries")


def points_in_mesh(mesh: TriangleMesh, points, seed: int = 0) -> np.ndarray:
    mesh.require_watertight()
    rng = np.random.default_rng(seed)
    tris = mesh.triangles
    return np.array([_inside(tris, np.asarray(p, float), rng, 16) for p in points])


# ---------------------------------------------------------------------------
# distances


def _closest_on_triangles(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Squared distance from p to each triangle (Voronoi-region method)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = np.einsum("ij,ij->i", ab, ap), np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3, d4 = np.einsum("ij,ij->i", ab, bp), np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5, d6 = np.einsum("ij,ij->i", ab, cp), np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        q = a + ab * v[:, None] + ac * w[:, None]  # interior
        # edges
        v_ab = d1 / (d1 - d3)
        q = np.where(((vc <= 0) & (d1 >= 0) & (d3 <= 0))[:, None], a + ab * v_ab[:, None], q)
        w_ac = d2 / (d2 - d6)
        q = np.where(((vb <= 0) & (d2 >= 0) & (d6 <= 0))[:, None], a + ac * w_ac[:, None], q)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        q = np.where(((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0))[:, None], b + (c - b) * w_bc[:, None], q)
    # vertices
    q = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, q)
    q = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, q)
    q = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, q)
    diff = p - q
    return np.einsum("ij,ij->i", diff, diff)


def mesh_distance(mesh: TriangleMesh, p) -> float:
    """Unsigned Euclidean distance from ``p`` to the surface."""
    return float(np.sqrt(_closest_on_triangles(np.asarray(p, dtype=float), mesh.triangles).min()))


def signed_boundary_value(mesh: TriangleMesh, p, h: float = 0.0, seed: int = 0) -> float:
    """Signed distance minus altitude: positive above the ``h`` offset surface."""
    if h < 0:
        raise SchemaError("altitude h must be non-negative")
    d = mesh_distance(mesh, p)
    s = -1.0 if point_in_mesh(mesh, p, seed) else 1.0
    return s * d - h


def signed_boundary_values(mesh: TriangleMesh, points, h: float = 0.0, seed: int = 0) -> np.ndarray:
    mesh.require_watertight()
    tris = mesh.triangles
    pts = np.asarray(points, dtype=float)
    inside = points_in_mesh(mesh, pts, seed)
    d = np.array([np.sqrt(_closest_on_triangles(p, tris).min()) for p in pts])
    return np.where(inside, -d, d) - h


# ---------------------------------------------------------------------------
# event-net regression


@dataclass(frozen=True)
class FitResult:
    net: PolicyNet
    train_mse: float
    holdout_mse: float
    iterations: int

    @property
    def holdout_rmse(self) -> float:
        return float(np.sqrt(self.holdout_mse))


def _unpack(theta, sizes):
    out, k = [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        W = theta[k : k + n_in * n_out].reshape(n_out, n_in)
        k += n_in * n_out
        b = theta[k : k + n_out]
        k += n_out
        out.append((W, b))
    return out


def _loss_grad(theta, sizes, w0, X, y):
    params = _unpack(theta, sizes)
    acts, pre = [X], []
    h = X
    for i, (W, b) in enumerate(params):
        z = h @ W.T + b
        pre.append(z)
        h = np.sin(w0 * z) if i < len(params) - 1 else z
        acts.append(h)
    r = h[:, 0] - y
    loss = float(np.mean(r * r))
    g = (2.0 / len(y)) * r[:, None]
    grads = []
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        if i < len(params) - 1:
            g = g * (w0 * np.cos(w0 * pre[i]))
        grads.append((g.T @ acts[i], g.sum(axis=0)))
        g = g @ W
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return loss, flat


def fit_event_net(
    points,
    values,
    hidden=(8,),
    iterations: int = 2000,
    seed: int = 0,
    w0: float = 1.0,
    holdout: float = 0.2,
) -> FitResult:
    """Least-squares SIREN fit of scalar labels on 3-D points (L-BFGS, exact gradients)."""
    X = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise FitError("points must be (n, d) with one label each")
    sizes = [X.shape[1], *hidden, 1]
    n_params = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if len(X) < 10 * n_params:
        raise FitError(f"{len(X)} samples for {n_params} parameters; need at least {10 * n_params}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(X))
    n_hold = int(round(holdout * len(X)))
    hold, train = perm[:n_hold], perm[n_hold:]
    shift = X[train].mean(axis=0)
    scale = 1.0 / np.maximum(X[train].std(axis=0), 1e-300)
    Xs = (X - shift) * scale
    theta0 = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / n_in) / (w0 if i else 1.0)
        theta0 += [rng.uniform(-bound, bound, n_in * n_out), rng.uniform(-bound, bound, n_out)]
    theta0 = np.concatenate(theta0)
    res = minimize(
        _loss_grad, theta0, args=(sizes, w0, Xs[train], y[train]), jac=True, method="L-BFGS-B",
        options={"maxiter": iterations, "maxfun": 2 * iterations, "ftol": 0.0, "gtol": 1e-12},
    )
    if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
        raise FitError(f"event-net fit diverged (seed={seed}, optimizer L-BFGS-B, maxiter={iterations})")
    layers = []
    params = _unpack(res.x, sizes)
    for i, (W, b) in enumerate(params):
        last = i == len(params) - 1
        layers.append(Layer(W.copy(), b.copy(), "linear" if last else "sin", 1.0 if last else w0))
    net = PolicyNet(tuple(layers), shift, scale, "none", {"seed": seed, "kind": "event"})
    hold_mse = _loss_grad(res.x, sizes, w0, Xs[hold], y[hold])[0] if n_hold else float("nan")
    return FitResult(net, float(res.fun), float(hold_mse), int(res.nit))
