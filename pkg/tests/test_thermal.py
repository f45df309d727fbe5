from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from thermomdp.errors import DimensionError, ParameterError, SchemaError
from thermomdp.occupancy import comfort_bounds, default_profile_seed, generate_profile, hw_draw, hw_draw_template
from thermomdp.thermal import (
    DEFAULT_COP_SH,
    DEFAULT_DT,
    DEFAULT_HORIZON,
    DEFAULT_RC,
    HP_SHARE,
    DEFAULT_X0,
    NO_ZONE,
    BuildingModel,
    TankParams,
    default_building,
    load_building,
    save_building,
    step_tank,
    step_thermal,
    weather_gains,
)
from thermomdp.weather import synthetic_weather

TANK = TankParams(G=0.02, C=0.233, T_env=15.0)


def model(A, B, zones=None):
    n = np.asarray(A).shape[0]
    return BuildingModel(
        id="t",
        A=A,
        B=B,
        cop_sh=3.0,
        cop_hw=2.5,
        p_hp_max=1.0,
        p_a_max=0.5,
        tank=TANK,
        zone_of_state=zones or tuple(range(n)),
    )


class TestStepThermal:
    def test_identity(self):
        m = model(np.eye(2), np.zeros((2, 2)))
        assert step_thermal(m, [20, 18], [0, 0], [0, 0]).tolist() == [20, 18]

    def test_pure_forcing(self):
        m = model(np.zeros((2, 2)), np.zeros((2, 2)))
        assert step_thermal(m, [5, -3], [1, 1], [21, 19]).tolist() == [21, 19]

    def test_one_state(self):
        m = model([[0.9]], [[0.1]], zones=(0,))
        assert step_thermal(m, [20], [1], [0.5]) == pytest.approx([18.6], abs=1e-12)

    @pytest.mark.parametrize("field,args", [("t_sh", ([1, 2, 3], [0, 0], [0, 0])), ("q_sh", ([1, 2], [0], [0, 0])),
                                             ("E", ([1, 2], [0, 0], [0]))])  # fmt: skip
    def test_dimension_error_names_field(self, field, args):
        m = model(np.eye(2) * 0.5, np.eye(2))
        with pytest.raises(DimensionError, match=field):
            step_thermal(m, *args)

    @settings(max_examples=60, deadline=None)
    @given(
        x=arrays(float, 3, elements=st.floats(-50, 50)),
        y=arrays(float, 3, elements=st.floats(-50, 50)),
        q1=arrays(float, 2, elements=st.floats(0, 10)),
        q2=arrays(float, 2, elements=st.floats(0, 10)),
        e1=arrays(float, 3, elements=st.floats(-5, 5)),
        e2=arrays(float, 3, elements=st.floats(-5, 5)),
        alpha=st.floats(-2, 3),
    )
    def test_affine(self, x, y, q1, q2, e1, e2, alpha):
        bm = default_building()
        m = model(bm.A[:3, :3] * 0.9, bm.B[:3], zones=(0, NO_ZONE, 1))
        beta = 1.0 - alpha
        lhs = step_thermal(m, alpha * x + beta * y, alpha * q1 + beta * q2, alpha * e1 + beta * e2)
        rhs = alpha * step_thermal(m, x, q1, e1) + beta * step_thermal(m, y, q2, e2)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * (1 + np.max(np.abs(rhs))) * 10)


class TestStepTank:
    def test_lossless_unforced(self):
        assert step_tank(TankParams(0.0, 0.233, 15.0), 55.0, 0, 0, 0, 3.0, 0.25) == 55.0

    @pytest.mark.parametrize("G", [0.0, 0.01, 0.5])
    def test_equilibrium(self, G):
        assert step_tank(TankParams(G, 0.233, 15.0), 15.0, 0, 0, 0, 3.0, 0.25) == pytest.approx(15.0, abs=1e-12)

    def test_hand_evaluation(self):
        # (50 + 0.25*0.02/0.233*15 + 0.25/0.233*3) / (1 + 0.25*0.02/0.233)
        g = 0.005 / 0.233
        expected = (50.0 + g * 15.0 + (0.25 / 0.233) * 3.0) / (1.0 + g)
        assert step_tank(TANK, 50.0, 1.0, 0.0, 0.0, 3.0, 0.25) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(52.41597, abs=1e-5)

    def test_bad_capacity(self):
        with pytest.raises(ParameterError):
            TankParams(0.02, 0.0, 15.0)

    @settings(max_examples=80, deadline=None)
    @given(
        t=st.floats(0, 90),
        dt_t=st.floats(0.01, 10),
        p=st.floats(0, 5),
        dp=st.floats(0.01, 5),
        draw=st.floats(0, 5),
        dd=st.floats(0.01, 5),
    )
    def test_monotone(self, t, dt_t, p, dp, draw, dd):
        f = lambda tp, php, dr: step_tank(TANK, tp, php, 0.0, dr, 3.0, 0.25)  # noqa: E731
        assert f(t + dt_t, p, draw) > f(t, p, draw)
        assert f(t, p + dp, draw) > f(t, p, draw)
        assert f(t, p, draw + dd) < f(t, p, draw)

    def test_geometric_decay(self):
        ratio = 1.0 / (1.0 + 0.25 * TANK.G / TANK.C)
        t = 60.0
        for _ in range(200):
            nxt = step_tank(TANK, t, 0, 0, 0, 3.0, 0.25)
            assert nxt - TANK.T_env == pytest.approx((t - TANK.T_env) * ratio, rel=1e-12)
            t = nxt


class TestBuildingModel:
    def test_default_invariants(self):
        bm = default_building()
        assert bm.n_states == 4 and bm.n_zones == 2
        assert np.max(np.abs(np.linalg.eigvals(bm.A))) < 1
        assert bm.cop_sh >= 1 and bm.cop_hw >= 1 and bm.p_hp_max > 0 and bm.p_a_max >= 0
        assert bm.tank.volume_l == 200.0

    def test_default_deterministic(self):
        default_building.cache_clear()
        a = default_building()
        default_building.cache_clear()
        b = default_building()
        assert a.to_dict() == b.to_dict()

    def test_unstable_rejected(self):
        with pytest.raises(ParameterError, match="unstable"):
            model([[1.01]], [[0.1]], zones=(0,))

    @pytest.mark.parametrize(
        "kw,msg",
        [({"cop_sh": 0.5}, "cop_sh"), ({"cop_hw": 0.9}, "cop_hw"), ({"p_hp_max": 0.0}, "p_hp_max"),
         ({"p_a_max": -1.0}, "p_a_max")],
    )  # fmt: skip
    def test_parameter_ranges(self, kw, msg):
        base = dict(id="x", A=[[0.5]], B=[[1.0]], cop_sh=3.0, cop_hw=2.0, p_hp_max=1.0, p_a_max=0.0,
                    tank=TANK, zone_of_state=(0,))  # fmt: skip
        base.update(kw)
        with pytest.raises(ParameterError, match=msg):
            BuildingModel(**base)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError, match="B"):
            model(np.eye(2) * 0.5, np.ones((3, 2)))

    def test_peak_demand_sizing(self):
        """Recompute the peak with an exhaustive active-set hold controller."""
        dt, n = DEFAULT_DT, DEFAULT_HORIZON
        A, B, _ = DEFAULT_RC.discretize(dt)
        profile = generate_profile(default_profile_seed(), n, dt)
        E = weather_gains(DEFAULT_RC, synthetic_weather(n, dt), profile.presence)
        lo = comfort_bounds(profile).t_lo
        rows = [0, 2]
        x = DEFAULT_X0.t_sh.copy()
        heat = np.zeros(n)
        for t in range(n):
            free = A @ x + E[t]
            best = None
            for active in itertools.product([False, True], repeat=2):
                q = np.zeros(2)
                idx = [z for z in range(2) if active[z]]
                if idx:
                    M = B[np.ix_([rows[z] for z in idx], idx)]
                    q[idx] = np.linalg.solve(M, lo[t, idx] - free[[rows[z] for z in idx]])
                nxt = free + B @ q
                if np.all(q >= -1e-12) and np.all(nxt[rows] >= lo[t] - 1e-9):
                    if best is None or q.sum() < best[0].sum() - 1e-12:
                        best = (q, nxt)
            heat[t] = best[0].sum()
            x = best[1]
        total = heat + hw_draw(profile, hw_draw_template(n, dt))
        peak = total[96:].max()
        bm = default_building()
        assert bm.p_hp_max == pytest.approx(HP_SHARE * peak / DEFAULT_COP_SH, rel=1e-9)
        assert bm.p_a_max == pytest.approx((1 - HP_SHARE) * peak, rel=1e-9)


class TestBuildingFile:
    def test_round_trip(self, tmp_path):
        bm = default_building()
        save_building(bm, tmp_path / "b.json")
        again = load_building(tmp_path / "b.json")
        assert again.to_dict() == bm.to_dict()

    def test_missing_field_line(self, tmp_path):
        d = default_building().to_dict()
        del d["cop_hw"]
        path = tmp_path / "b.json"
        path.write_text(json.dumps(d, indent=1))
        with pytest.raises(SchemaError) as err:
            load_building(path)
        assert "cop_hw" in str(err.value) and err.value.line is not None

    def test_wrong_type_line(self, tmp_path):
        d = default_building().to_dict()
        d["p_hp_max"] = "big"
        path = tmp_path / "b.json"
        text = json.dumps(d, indent=1)
        path.write_text(text)
        with pytest.raises(SchemaError) as err:
            load_building(path)
        expected = next(i for i, ln in enumerate(text.splitlines(), 1) if '"p_hp_max"' in ln)
        assert err.value.line == expected
