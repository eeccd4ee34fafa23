from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pshape.grid import (
    DomainMask,
    GridFunction,
    MeasureField,
    box_mask,
    build_grid,
    disc_mask,
    gradient,
    integrate,
    lp_norm,
    node_weights,
)
from pshape.io import read_function, read_mask, read_measure, write_function, write_mask, write_measure, write_pgm


def test_build_grid_1d_nodes():
    g = build_grid([0, 1], 3)
    np.testing.assert_allclose(g.axes[0], [0.0, 0.5, 1.0])
    assert g.h == (0.5,)


def test_build_grid_2d_counts():
    g = build_grid([(-1, 1), (-1, 1)], 5)
    assert g.size == 25
    assert g.h == (0.5, 0.5)
    assert g.points.shape == (25, 2)


def test_build_grid_rejects_two_nodes():
    with pytest.raises(ValueError):
        build_grid([0, 1], 2)


def test_disc_mask_area():
    g = build_grid([(-1, 1), (-1, 1)], 129)
    d = disc_mask(g, (0, 0), 1.0)
    assert abs(d.count * g.cell_volume - math.pi) <= 4 * g.h[0]


def test_disc_mask_huge_radius_is_full():
    g = build_grid([(-1, 1), (-1, 1)], 17)
    assert disc_mask(g, (0, 0), 10.0).inside.all()


def test_disc_mask_outside_is_empty_and_flagged(caplog):
    g = build_grid([(-1, 1), (-1, 1)], 17)
    with caplog.at_level("WARNING"):
        d = disc_mask(g, (5, 5), 0.1)
    assert d.empty
    assert "no nodes" in caplog.text


def test_gradient_linear_exact():
    g1 = build_grid([0, 1], 11)
    np.testing.assert_allclose(gradient(GridFunction(g1, g1.coords[0]))[..., 0], 1.0)
    g2 = build_grid([(0, 1), (0, 2)], (9, 13))
    x, y = g2.coords
    grad = gradient(GridFunction(g2, x + 2 * y))
    np.testing.assert_allclose(grad[..., 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], 2.0, atol=1e-12)


def test_gradient_constant_zero():
    g = build_grid([(0, 1), (0, 1)], 9)
    assert np.all(gradient(GridFunction(g, np.full(g.shape, 3.0))) == 0)


def test_integrate_examples():
    g2 = build_grid([(0, 1), (0, 1)], 21)
    assert integrate(np.ones(g2.shape), box_mask(g2)) == pytest.approx(1.0, abs=1e-12)
    g = build_grid([0, 1], 101)
    x = g.coords[0]
    assert integrate(x, box_mask(g)) == pytest.approx(0.5, abs=1e-3)
    assert integrate(x**2, box_mask(g)) == pytest.approx(1 / 3, abs=1e-3)


def test_integrate_cell_field():
    g = build_grid([(0, 1), (0, 1)], 11)
    assert integrate(np.ones(g.cell_shape), box_mask(g)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        integrate(np.ones((3, 3)), box_mask(g))


def test_lp_norm_examples():
    g = build_grid([0, 1], 257)
    x = g.coords[0]
    assert lp_norm(GridFunction(g, np.zeros(g.shape)), 2) == 0
    for p in (1, 2, 3.5):
        assert lp_norm(GridFunction(g, np.ones(g.shape)), p) == pytest.approx(1.0)
    assert lp_norm(GridFunction(g, x * (1 - x) / 2), 2) == pytest.approx(1 / math.sqrt(120), abs=1e-4)


def test_node_weights_sum_to_cell_measure():
    g = build_grid([(-1, 1), (-1, 1)], 33)
    d = disc_mask(g, (0, 0), 0.7)
    assert node_weights(d).sum() == pytest.approx(d.cells().sum() * g.cell_volume)


def test_mask_algebra():
    g = build_grid([(0, 1), (0, 1)], 9)
    a = disc_mask(g, (0.5, 0.5), 0.3)
    b = box_mask(g)
    assert a.issubset(b)
    assert (a | b).count == b.count
    assert (a & b).count == a.count
    assert (b - a).count == b.count - a.count
    assert (~a).count == g.size - a.count


def test_gridfunction_rejects_nonfinite():
    g = build_grid([0, 1], 5)
    with pytest.raises(ValueError):
        GridFunction(g, np.array([0, 1, np.nan, 0, 0.0]))


def test_measure_field_validation():
    g = build_grid([0, 1], 5)
    with pytest.raises(ValueError):
        MeasureField(g, np.array([0, -1.0, 0, 0, 0]))
    mu = MeasureField(g, np.array([0, np.inf, 2, 0, 0]))
    assert mu.inf_mask.count == 1
    np.testing.assert_array_equal(mu.finite_part, [0, 0, 2, 0, 0])


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    c=st.floats(-3, 3),
    n=st.integers(3, 20),
)
def test_gradient_reproduces_affine(a, b, c, n):
    g = build_grid([(0, 1), (-1, 2)], n)
    x, y = g.coords
    grad = gradient(GridFunction(g, a * x + b * y + c))
    np.testing.assert_allclose(grad[..., 0], a, atol=1e-9)
    np.testing.assert_allclose(grad[..., 1], b, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 40), p=st.floats(1, 6))
def test_lp_norm_scales_homogeneously(n, p):
    g = build_grid([0, 1], n)
    u = GridFunction(g, np.sin(3 * g.coords[0]))
    assert lp_norm(u * 2.5, p) == pytest.approx(2.5 * lp_norm(u, p), rel=1e-12)


def test_csv_roundtrip(tmp_path, rng):
    g = build_grid([(-1, 1), (0, 2)], (7, 5))
    u = GridFunction(g, rng.normal(size=g.shape))
    write_function(tmp_path / "u.csv", u)
    back = read_function(tmp_path / "u.csv")
    assert back.grid == g
    np.testing.assert_allclose(back.values, u.values, rtol=1e-8)

    m = disc_mask(g, (0, 1), 0.8)
    write_mask(tmp_path / "m.csv", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.csv").inside, m.inside)

    beta = np.where(m.inside, np.inf, 1.5)
    write_measure(tmp_path / "b.csv", MeasureField(g, beta))
    assert "inf" in (tmp_path / "b.csv").read_text()
    np.testing.assert_array_equal(read_measure(tmp_path / "b.csv").beta, beta)


def test_pgm_header(tmp_path):
    g = build_grid([(0, 1), (0, 1)], (6, 4))
    write_pgm(tmp_path / "u.pgm", GridFunction(g, g.coords[0]))
    data = (tmp_path / "u.pgm").read_bytes()
    assert data.startswith(b"P5\n6 4\n255\n")
    assert len(data) == len(b"P5\n6 4\n255\n") + 24


def test_empty_mask_ops():
    g = build_grid([0, 1], 5)
    e = DomainMask(g, np.zeros(g.shape, dtype=bool))
    assert e.empty and e.count == 0
