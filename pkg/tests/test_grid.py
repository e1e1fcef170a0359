import math

import numpy as np
import pytest

from wgdl.grid import GridError, GridSpec, dispersion_symbol, make_grid


class TestGridSpec:
    def test_wavenumbers_unit_spacing(self):
        g = make_grid(GridSpec(1, 1, math.pi, 8, 8))
        np.testing.assert_allclose(g.table.axes[0], [0, 1, 2, 3, -4, -3, -2, -1], atol=1e-14)
        np.testing.assert_allclose(g.table.axes[1], [0, 1, 2, 3, -4, -3, -2, -1], atol=1e-14)

    def test_torus_period_scales_wavenumbers(self):
        g = make_grid(GridSpec(1, 1, 1.0, 8, 8, torus_period=math.pi))
        np.testing.assert_allclose(g.table.axes[1][:4], [0, 2, 4, 6], atol=1e-13)

    def test_total_points_d5(self):
        spec = GridSpec(5, 1, 4.0, 8, 8)
        assert spec.total_points == 8**6 == 262144

    def test_cell_volume(self):
        spec = GridSpec(2, 1, 3.0, 16, 8)
        assert spec.cell_volume == pytest.approx((6.0 / 16) ** 2 * (2 * math.pi / 8))
        assert spec.volume == pytest.approx(spec.cell_volume * spec.total_points)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(points_euclid=2),
            dict(points_torus=3),
            dict(box_half_length=0.0),
            dict(box_half_length=-1.0),
            dict(torus_period=0.0),
            dict(euclid_dims=-1),
        ],
    )
    def test_rejects_bad_geometry(self, kw):
        base = dict(euclid_dims=1, torus_dims=1, box_half_length=1.0, points_euclid=8, points_torus=8)
        base.update(kw)
        with pytest.raises(GridError):
            GridSpec(**base)

    def test_pure_torus_grid_accepted(self):
        g = make_grid(GridSpec(0, 2, 1.0, 4, 8))
        assert g.shape == (8, 8)
        assert g.d == 0 and g.n == 2

    def test_empty_grid_rejected(self):
        with pytest.raises(GridError):
            GridSpec(0, 0, 1.0, 8)


class TestGrid:
    def test_coordinates_span_box(self):
        g = make_grid(GridSpec(1, 1, 2.0, 8, 4))
        assert g.euclid_coords[0] == -2.0
        assert g.euclid_coords[-1] == pytest.approx(2.0 - 0.5)
        np.testing.assert_allclose(g.torus_coords, np.arange(4) * math.pi / 2)

    def test_tables_are_read_only(self):
        g = make_grid(GridSpec(1, 1, 2.0, 8, 4))
        with pytest.raises(ValueError):
            g.table.k2[0, 0] = 1.0

    def test_symbols(self):
        g = make_grid(GridSpec(2, 1, math.pi, 8, 4))
        k2 = sum(g.table.mesh(a) ** 2 for a in range(3))
        np.testing.assert_allclose(dispersion_symbol(g.table, 2), k2)
        np.testing.assert_allclose(dispersion_symbol(g.table, 4), k2**2)
        with pytest.raises(ValueError):
            dispersion_symbol(g.table, 3)

    def test_same_as(self):
        a = make_grid(GridSpec(1, 1, 2.0, 8, 4))
        b = make_grid(GridSpec(1, 1, 2.0, 8, 4))
        c = make_grid(GridSpec(1, 1, 2.0, 16, 4))
        assert a.same_as(b) and not a.same_as(c)
