import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_timechange.dirichlet import assemble_generator, carre_du_champ
from ricci_timechange.mesh import (
    MeshError,
    build_circle_mesh,
    build_torus_mesh,
    flat_metric,
    sample_metric,
    sample_scalar,
    write_field_csv,
)


def test_circle_spacing():
    mesh = build_circle_mesh(8, 2 * math.pi)
    assert mesh.spacing == pytest.approx((math.pi / 4,))


def test_circle_neighbors():
    mesh = build_circle_mesh(256, 2 * math.pi)
    nb = mesh.neighbors
    assert mesh.n_nodes == 256
    assert nb.shape == (256, 2)
    assert np.array_equal(nb[0], [255, 1])


def test_circle_too_few_nodes():
    with pytest.raises(MeshError):
        build_circle_mesh(7, 1.0)


def test_torus_node_count():
    assert build_torus_mesh(8, 8, 1, 1).n_nodes == 64


def test_torus_spacing():
    mesh = build_torus_mesh(16, 32, 2 * math.pi, 4 * math.pi)
    assert mesh.spacing == pytest.approx((math.pi / 8, math.pi / 8))


def test_torus_too_few_nodes():
    with pytest.raises(MeshError):
        build_torus_mesh(8, 4, 1, 1)


def test_sample_constant():
    mesh = build_torus_mesh(8, 12, 1, 2)
    assert np.all(sample_scalar(mesh, lambda x, y: 3.0).values == 3.0)


def test_sample_cosine_on_eight_node_circle():
    mesh = build_circle_mesh(8, 2 * math.pi)
    s = math.sqrt(0.5)
    expected = [1, s, 0, -s, -1, -s, 0, s]
    assert np.allclose(sample_scalar(mesh, np.cos).values, expected, atol=1e-15)


def test_sample_nan_names_node():
    mesh = build_circle_mesh(8, 2 * math.pi)
    with pytest.raises(MeshError, match="node 2"):
        sample_scalar(mesh, lambda x: np.where(np.arange(8) == 2, np.nan, x))


def test_identity_metric_is_flat():
    mesh = build_torus_mesh(8, 8, 1, 1)
    g = sample_metric(mesh, lambda x, y: [[1, 0], [0, 1]])
    assert np.array_equal(g.values, flat_metric(mesh).values)


def test_sphere_chart_positive_where_sin_positive():
    # theta band (0.1, pi - 0.1) avoids the poles
    mesh = build_torus_mesh(32, 16, math.pi - 0.2, 2 * math.pi, origin=(0.1, 0.0))
    g = sample_metric(mesh, lambda t, p: [[1, 0], [0, np.sin(t) ** 2]])
    lam = np.linalg.eigvalsh(g.values)[:, 0]
    assert np.all(lam > 0)
    assert np.allclose(lam, np.minimum(1, np.sin(mesh.axes[0]) ** 2))


def test_sphere_chart_through_pole_fails():
    mesh = build_torus_mesh(16, 16, math.pi, 2 * math.pi)
    with pytest.raises(MeshError, match="positive definite"):
        sample_metric(mesh, lambda t, p: [[1, 0], [0, np.sin(t) ** 2]])


def test_degenerate_metric_fails():
    mesh = build_circle_mesh(8, 1.0)
    with pytest.raises(MeshError):
        sample_metric(mesh, lambda x: 0.0)


def test_fields_are_immutable():
    mesh = build_circle_mesh(8, 1.0)
    f = sample_scalar(mesh, lambda x: x)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


@given(st.integers(8, 20), st.integers(8, 20))
def test_neighbor_relation_symmetric_without_duplicates(nx, ny):
    mesh = build_torus_mesh(nx, ny, 1.0, 1.0)
    nb = mesh.neighbors
    for i in range(mesh.n_nodes):
        assert len(set(nb[i])) == nb.shape[1]
        for j in nb[i]:
            assert i in nb[j]


@given(st.floats(-5, 5, allow_nan=False))
def test_constant_field_has_zero_gradient(c):
    mesh = build_torus_mesh(8, 10, 1.0, 2.0)
    f = sample_scalar(mesh, lambda x, y: c)
    gen = assemble_generator(mesh, flat_metric(mesh))
    assert np.all(gen.apply(f) == 0.0)
    assert np.all(carre_du_champ(gen, f).values == 0.0)


def test_field_csv_layout(tmp_path):
    mesh = build_torus_mesh(8, 8, 1, 1)
    path = write_field_csv(tmp_path / "f.csv", mesh, u=np.arange(64.0), g=flat_metric(mesh).values)
    lines = path.read_text().splitlines()
    assert lines[0] == "node,x0,x1,u,g_00,g_01,g_10,g_11"
    assert len(lines) == 65
    assert lines[9].split(",")[:4] == ["8", "0.125", "0.0", "8.0"]
