from __future__ import annotations

import re
import xml.etree.ElementTree as ET

import numpy as np

from thermomdp.mdp import MdpProblem, solve
from thermomdp.svg import heatmap_svg, read_polylines, trajectory_svg

NS = "{http://www.w3.org/2000/svg}"


def cells(svg: str) -> list[dict]:
    root = ET.fromstring(svg)
    return [r.attrib for r in root.iter(f"{NS}rect") if "data-prob" in r.attrib]


def test_identity_heatmap_colors_only_diagonal():
    svg = heatmap_svg(np.eye(6))
    rects = cells(svg)
    assert len(rects) == 36
    white = {r["fill"] for r in rects if r["data-to"] != r["data-from"]}
    diag = {r["fill"] for r in rects if r["data-to"] == r["data-from"]}
    assert white == {"#ffffff"} and diag == {"#08306b"}


def test_uniform_heatmap_single_color():
    rects = cells(heatmap_svg(np.full((5, 5), 0.2)))
    assert len({r["fill"] for r in rects}) == 1
    assert all(float(r["data-prob"]) == 0.2 for r in rects)


def test_heatmap_values_read_back():
    P = np.random.default_rng(0).dirichlet(np.ones(4), size=4).T
    back = np.zeros_like(P)
    for r in cells(heatmap_svg(P)):
        back[int(r["data-to"]), int(r["data-from"])] = float(r["data-prob"])
    assert np.array_equal(back, P)


def test_trajectory_sums_to_expected_power():
    rng = np.random.default_rng(1)
    S = 5
    prob = MdpProblem(P_bar=rng.dirichlet(np.ones(S), size=S).T, U=rng.normal(size=(12, S)),
                      rho0=np.full(S, 1 / S), p_alpha=rng.uniform(0, 3, S))  # fmt: skip
    sol = solve(prob)
    lines = read_polylines(trajectory_svg(sol.rho, prob.p_alpha))
    parts = np.sum([lines[str(a)] for a in range(S)], axis=0)
    assert np.allclose(parts, sol.p_t, rtol=1e-12) and np.allclose(lines["total"], sol.p_t, rtol=1e-12)
    assert len(lines["total"]) == 13


def test_deterministic_and_parseable():
    P = np.random.default_rng(2).dirichlet(np.ones(3), size=3).T
    a, b = heatmap_svg(P, title="a & b"), heatmap_svg(P, title="a & b")
    assert a == b
    ET.fromstring(a)
    rho = np.full((4, 3), 1 / 3)
    t = trajectory_svg(rho, [0.0, 1.0, 2.0])
    assert t == trajectory_svg(rho, [0.0, 1.0, 2.0])
    ET.fromstring(t)


def test_large_heatmap_fits():
    svg = heatmap_svg(np.eye(100))
    width = float(re.search(r'width="([\d.]+)"', svg).group(1))
    assert width <= 800
