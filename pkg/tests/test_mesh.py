import struct

import numpy as np
import pytest

from eventjet.errors import FitError, SchemaError
from eventjet.mesh import (
    TriangleMesh,
    box_mesh,
    fit_event_net,
    icosphere,
    load_mesh,
    mesh_distance,
    point_in_mesh,
    points_in_mesh,
    signed_boundary_value,
    signed_boundary_values,
)
from eventjet.netpoly import eval_net


@pytest.fixture(scope="module")
def sphere():
    return icosphere(3, 1.0)


def test_cube_membership():
    cube = box_mesh()
    assert cube.is_watertight()
    assert point_in_mesh(cube, [0.5, 0.5, 0.5])
    assert not point_in_mesh(cube, [2.0, 0.0, 0.0])
    # a ray from the centre along an axis would hit a diagonal edge; re-drawn rays keep parity right
    assert all(point_in_mesh(cube, [0.5, 0.5, 0.5], seed=s) for s in range(10))


def test_open_mesh_rejected():
    cube = box_mesh()
    open_box = TriangleMesh(cube.vertices, cube.faces[:-1])
    assert not open_box.is_watertight()
    with pytest.raises(SchemaError):
        point_in_mesh(open_box, [0.5, 0.5, 0.5])
    with pytest.raises(SchemaError):
        TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))


def test_icosphere_matches_analytic_sphere(sphere):
    rng = np.random.default_rng(0)
    pts = []
    while len(pts) < 1000:
        p = rng.uniform(-1.5, 1.5, 3)
        # stay clear of the gap between facets and the true sphere
        if abs(np.linalg.norm(p) - 1.0) > 0.05:
            pts.append(p)
    pts = np.array(pts)
    inside = points_in_mesh(sphere, pts)
    assert np.array_equal(inside, np.linalg.norm(pts, axis=1) < 1.0)


def test_parity_independent_of_ray_seed(sphere):
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1.2, 1.2, (50, 3))
    a = points_in_mesh(sphere, pts, seed=1)
    b = points_in_mesh(sphere, pts, seed=2)
    assert np.array_equal(a, b)


def test_signed_boundary_value_examples(sphere):
    d = np.array([0.3, -0.4, 0.866])
    d /= np.linalg.norm(d)
    assert signed_boundary_value(sphere, 1.5 * d, 0.25) == pytest.approx(0.25, abs=0.01)
    assert signed_boundary_value(sphere, 0.5 * d, 0.25) == pytest.approx(-0.75, abs=0.01)
    v = sphere.vertices[7]
    assert abs(mesh_distance(sphere, v)) < 1e-12
    with pytest.raises(SchemaError):
        signed_boundary_value(sphere, d, -1.0)


def test_box_distance_regions():
    cube = box_mesh()
    assert mesh_distance(cube, [2.0, 0.5, 0.5]) == pytest.approx(1.0, abs=1e-14)
    assert mesh_distance(cube, [2.0, 2.0, 0.5]) == pytest.approx(np.sqrt(2.0), abs=1e-14)
    assert mesh_distance(cube, [2.0, 2.0, 2.0]) == pytest.approx(np.sqrt(3.0), abs=1e-14)
    assert mesh_distance(cube, [0.5, 0.5, 0.4]) == pytest.approx(0.4, abs=1e-14)
    vals = signed_boundary_values(cube, [[0.5, 0.5, 0.4], [0.5, 0.5, 1.5]])
    assert vals == pytest.approx([-0.4, 0.5], abs=1e-14)


def _write_ascii_stl(path, mesh):
    lines = ["solid t"]
    for tri in mesh.triangles:
        lines += ["facet normal 0 0 0", "outer loop"]
        lines += ["vertex " + " ".join(map(repr, row.tolist())) for row in tri]
        lines += ["endloop", "endfacet"]
    lines.append("endsolid t")
    path.write_text("\n".join(lines))


def _write_binary_stl(path, mesh):
    tris = mesh.triangles.astype("<f4")
    out = bytearray(80) + struct.pack("<I", len(tris))
    for tri in tris:
        out += struct.pack("<3f", 0, 0, 0) + tri.tobytes() + struct.pack("<H", 0)
    path.write_bytes(bytes(out))


def test_mesh_loaders(tmp_path):
    cube = box_mesh()
    _write_ascii_stl(tmp_path / "a.stl", cube)
    _write_binary_stl(tmp_path / "b.stl", cube)
    obj = ["v " + " ".join(map(repr, v.tolist())) for v in cube.vertices] + ["f " + " ".join(str(i + 1) for i in f) for f in cube.faces]
    (tmp_path / "c.obj").write_text("\n".join(obj))
    for name in ("a.stl", "b.stl", "c.obj"):
        m = load_mesh(tmp_path / name)
        assert m.is_watertight() and len(m.faces) == 12 and len(m.vertices) == 8
        assert point_in_mesh(m, [0.2, 0.7, 0.4])
    with pytest.raises(SchemaError):
        load_mesh(tmp_path / "x.ply")


def _shell(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(0.6, 1.4, (n, 1))


def test_fit_on_analytic_sphere_labels():
    X = _shell(5000, 0)
    y = np.linalg.norm(X, axis=1) - 1.0
    res = fit_event_net(X, y, hidden=(8,), iterations=2000, seed=0)
    assert res.holdout_rmse < 0.02
    assert res.net.n_params == 41
    assert abs(eval_net(res.net, [0.0, 0.0, 1.0])[0]) < 0.02


def test_fit_zero_labels():
    X = _shell(1000, 1)
    res = fit_event_net(X, np.zeros(len(X)), hidden=(4,), iterations=500, seed=1)
    assert res.train_mse < 1e-6


def test_fit_needs_enough_samples():
    X = _shell(100, 2)
    with pytest.raises(FitError, match="need at least"):
        fit_event_net(X, np.zeros(100), hidden=(8,))
    with pytest.raises(FitError):
        fit_event_net(X, np.zeros(99))
