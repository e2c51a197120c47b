"""参数聚合与环境修正"""
import dataclasses
import math

import numpy as np
import pytest

from pv_errors import ParameterError
from pv_model import (
    G_MIN,
    PHYS,
    STC,
    ArrayModel,
    EnvCondition,
    EnvMap,
    PanelParams,
    aggregate_cells_to_panel,
    aggregate_panels_to_array,
    band_gap,
    bypass_from_threshold,
    open_circuit_voltage,
    photocurrent,
    resolve_panel,
    saturation_current,
    shunt_resistance,
    thermal_voltage,
)
from pv_solver import shockley_current


class TestAggregation:

    def test_panels_to_array_scaling(self, panel):
        array = aggregate_panels_to_array(panel, 10, 3)
        assert array.iph_ref == pytest.approx(31.2)
        assert array.i0_ref == pytest.approx(3 * 2.4416e-11)
        assert array.rs == pytest.approx(0.3719 * 10 / 3)
        assert array.rsh_ref == pytest.approx(807.2 * 10 / 3)
        assert array.m_c == 720
        assert array.n_c == 3

    def test_identity_for_single_panel(self, panel):
        assert aggregate_panels_to_array(panel, 1, 1) == panel

    def test_round_trip_recovers_panel(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            p = PanelParams(
                iph_ref=rng.uniform(1, 15),
                i0_ref=10 ** rng.uniform(-12, -8),
                ideality=rng.uniform(0.8, 2.0),
                rs=rng.uniform(0.01, 1.0),
                rsh_ref=rng.uniform(50, 2000),
            )
            m, n = int(rng.integers(1, 30)), int(rng.integers(1, 10))
            a = aggregate_panels_to_array(p, m, n)
            assert a.iph_ref / n == pytest.approx(p.iph_ref, rel=1e-14)
            assert a.i0_ref / n == pytest.approx(p.i0_ref, rel=1e-14)
            assert a.rs * n / m == pytest.approx(p.rs, rel=1e-14)
            assert a.rsh_ref * n / m == pytest.approx(p.rsh_ref, rel=1e-14)
            assert a.m_c // m == p.m_c

    def test_zero_counts_rejected(self, panel):
        with pytest.raises(ParameterError):
            aggregate_panels_to_array(panel, 0, 3)

    def test_cells_to_panel(self):
        cell = PanelParams(iph_ref=10.4, i0_ref=2.4416e-11, ideality=1.02, rs=0.3719 / 72,
                           rsh_ref=807.2 / 72, m_c=1, n_c=1)
        p = aggregate_cells_to_panel(cell, 72, 1)
        assert p.m_c == 72
        assert p.rs == pytest.approx(0.3719)
        assert p.rsh_ref == pytest.approx(807.2)
        assert p.iph_ref == pytest.approx(10.4)

    def test_cells_require_single_cell_params(self, panel):
        with pytest.raises(ParameterError):
            aggregate_cells_to_panel(panel, 72, 1)


class TestEnvironment:

    def test_photocurrent_at_stc(self, panel):
        assert photocurrent(panel, STC) == pytest.approx(10.4, rel=1e-12)

    def test_photocurrent_linear_in_irradiance(self, panel):
        assert photocurrent(panel, EnvCondition(500.0, 298.15)) == pytest.approx(5.2)
        assert photocurrent(panel, EnvCondition(0.0, 298.15)) == 0.0

    def test_photocurrent_temperature_coefficient(self, panel):
        hot = photocurrent(panel, EnvCondition(1000.0, 348.15))
        assert hot == pytest.approx(10.4 * (1 + 5e-4 * 50))

    def test_band_gap(self):
        assert band_gap(300.0) == pytest.approx(1.16 - 7.02e-4 * 90000 / (300 - 1108))
        with pytest.raises(ParameterError):
            band_gap(1108.0)
        with pytest.raises(ParameterError):
            band_gap(0.0)

    def test_saturation_current_at_reference(self, panel):
        assert saturation_current(panel, panel.t_ref) == pytest.approx(panel.i0_ref, rel=1e-12)

    def test_resolve_at_reference_conditions(self, panel):
        r = resolve_panel(panel, EnvCondition(panel.g_ref, panel.t_ref))
        assert r.iph == pytest.approx(panel.iph_ref, rel=1e-15)
        assert r.i0 == pytest.approx(panel.i0_ref, rel=1e-12)
        assert r.rsh == pytest.approx(panel.rsh_ref, rel=1e-15)

    def test_saturation_current_grows_with_temperature(self, panel):
        values = [saturation_current(panel, t) for t in (288.0, 298.0, 328.0, 348.0)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_saturation_current_rejects_bad_temperature(self, panel):
        with pytest.raises(ParameterError):
            saturation_current(panel, -1.0)

    def test_shunt_resistance(self, panel):
        assert shunt_resistance(panel, 500.0) == pytest.approx(403.6)
        with pytest.raises(ParameterError):
            shunt_resistance(panel, 0.0)

    def test_thermal_voltage(self, panel):
        expected = 1.02 * PHYS.k * 298.15 * 72 / PHYS.q
        assert thermal_voltage(panel, 298.15) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.8869, abs=1e-3)

    def test_resolve_fully_shaded_panel(self, panel):
        r = resolve_panel(panel, EnvCondition(0.0, 298.0))
        assert r.iph == 0.0
        assert r.rsh == pytest.approx(shunt_resistance(panel, G_MIN))

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            PanelParams(iph_ref=10.4, i0_ref=2e-11, ideality=1.0, rs=0.0, rsh_ref=800.0)
        with pytest.raises(ParameterError):
            PanelParams(iph_ref=10.4, i0_ref=2e-11, ideality=3.0, rs=0.3, rsh_ref=800.0)
        with pytest.raises(ParameterError):
            EnvCondition(g=-1.0, t=298.0)

    @pytest.mark.parametrize('g, t', [(float('nan'), 298.0), (1000.0, float('nan'))])
    def test_non_finite_environment_rejected(self, g, t):
        with pytest.raises(ParameterError):
            EnvCondition(g=g, t=t)
        with pytest.raises(ParameterError):
            EnvMap(np.full((2, 2), g), np.full((2, 2), t))


class TestEnvMapAndArray:

    def test_override_returns_new_map(self):
        base = EnvMap.uniform(2, 2, STC)
        shaded = base.with_override(0, 1, g=400.0)
        assert base.g[0, 1] == 1000.0
        assert shaded.g[0, 1] == 400.0
        assert shaded.t[0, 1] == pytest.approx(298.15)

    def test_env_map_is_read_only(self):
        env_map = EnvMap.uniform(2, 2, STC)
        with pytest.raises(ValueError):
            env_map.g[0, 0] = 1.0

    def test_empty_map_rejected(self):
        with pytest.raises(ParameterError):
            EnvMap(np.empty((0, 3)), np.empty((0, 3)))

    def test_array_shape_checked(self, panel):
        r = resolve_panel(panel, STC)
        with pytest.raises(ParameterError):
            ArrayModel(m_p=2, n_p=2, panels=((r, r),))

    def test_grid_collects_parameters(self, small_model):
        assert small_model.grid.iph.shape == (3, 2)
        assert small_model.grid.iph[0, 0] < small_model.grid.iph[0, 1]


class TestDiodes:

    def test_open_circuit_voltage(self, panel):
        r = resolve_panel(panel, STC)
        voc = open_circuit_voltage(r)
        residual = r.iph - r.i0 * math.expm1(voc / r.alpha) - voc / r.rsh
        assert abs(residual) < 1e-9
        assert 45.0 < voc < 55.0

    def test_open_circuit_voltage_dark(self, panel):
        r = dataclasses.replace(resolve_panel(panel, STC), iph=0.0)
        assert open_circuit_voltage(r) == 0.0

    def test_bypass_threshold(self):
        diode = bypass_from_threshold(0.7)
        assert shockley_current(diode, 0.7) == pytest.approx(1.0, rel=1e-9)
        assert diode.alpha == pytest.approx(PHYS.k * 300.0 / PHYS.q)

    def test_bypass_rejects_bad_threshold(self):
        with pytest.raises(ParameterError):
            bypass_from_threshold(0.0)
