import xml.etree.ElementTree as ET

import numpy as np
import pytest

from adafnn.fda import Grid, l2_norm, make_quadrature
from adafnn.io import DataError, write_basis_csv
from adafnn.plotting import HEIGHT, WIDTH, plot_bases, scale_curves
from adafnn.simgen import cosine_basis

NS = "{http://www.w3.org/2000/svg}"
T = np.linspace(0, 1, 51)


def _parse(path):
    return ET.parse(path).getroot()


@pytest.fixture
def dump(tmp_path):
    p = tmp_path / "basis.csv"
    write_basis_csv(p, T, np.vstack([3 * cosine_basis(3, T), -0.5 * cosine_basis(2, T)]))
    return p


def test_two_bases_give_two_polylines_and_axes(dump, tmp_path):
    root = _parse(plot_bases(dump, tmp_path / "p.svg"))
    assert root.tag == NS + "svg"
    assert root.get("width") == str(WIDTH) and root.get("height") == str(HEIGHT)
    assert len(root.findall(f".//{NS}polyline")) == 2
    axes = [g for g in root.iter(NS + "g") if g.get("class") == "axes"]
    assert len(axes) == 1 and len(axes[0].findall(NS + "line")) == 2


def test_overlay_gives_three_polylines_with_legend(dump, tmp_path):
    truth = tmp_path / "truth.csv"
    write_basis_csv(truth, T, cosine_basis(3, T)[None, :], names=["phi_3"])
    root = _parse(plot_bases(dump, tmp_path / "p.svg", truth=truth, title="a & b"))
    assert len(root.findall(f".//{NS}polyline")) == 3
    legend = [g for g in root.iter(NS + "g") if g.get("class") == "legend"][0]
    assert [t.text for t in legend.findall(NS + "text")] == ["phi_3", "beta_1", "beta_2"]
    assert any(t.text == "a & b" for t in root.iter(NS + "text"))


def test_scaling_to_unit_norm():
    q = make_quadrature(Grid(T))
    s = scale_curves(T, np.vstack([5 * cosine_basis(2, T), np.zeros(51)]))
    assert l2_norm(s[0], q) == pytest.approx(1.0, abs=1e-12)
    assert np.all(s[1] == 0)


def _ys(poly):
    return np.array([float(p.split(",")[1]) for p in poly.get("points").split()])


def test_sign_aligned_to_overlay(tmp_path):
    truth = tmp_path / "truth.csv"
    write_basis_csv(truth, T, cosine_basis(3, T)[None, :], names=["phi_3"])
    dump = tmp_path / "b.csv"
    write_basis_csv(dump, T, -2 * cosine_basis(3, T)[None, :])
    polys = _parse(plot_bases(dump, tmp_path / "p.svg", truth=truth)).findall(f".//{NS}polyline")
    np.testing.assert_allclose(_ys(polys[0]), _ys(polys[1]), atol=0.011)


def test_malformed_dump(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,beta_1\n0,1\n1,2\n")
    with pytest.raises(DataError):
        plot_bases(bad, tmp_path / "p.svg")
    bad.write_text("t,beta_1\n0,1\n1\n")
    with pytest.raises(DataError, match="line 3"):
        plot_bases(bad, tmp_path / "p.svg")
