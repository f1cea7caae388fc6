import json

import numpy as np
import pytest

from cutopt.cli import main
from cutopt.config import ConfigError, config_from_dict, load_config, lshape_preset
from cutopt.io import CSV_HEADER, read_log, write_snapshot_vtk, write_svg
from cutopt.levelset import extract_geometry

from conftest import levelset_from, make_refined

SMALL = """
problem = "cantilever"
element = "quad"
k = 1
h = 0.1
snapshot_every = 1
holes = [[1.0, 0.5, 0.2]]
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_defaults_resolved(small_cfg):
    cfg = load_config(small_cfg)
    res = cfg.resolved()
    mu, lam = res["mu"], res["lambda"]
    assert np.isclose(res["gamma_d"], 10 * 1**2 * (mu + lam))
    assert np.allclose(res["gamma_ghost"], [1e-7 * (mu + lam)])
    assert np.isclose(res["c1"], 3 * 0.1**2)
    assert np.isclose(res["T0"], 0.05 * np.hypot(2, 1))
    assert res["E"] == 1e4 and res["nu"] == 0.3


def test_quadratic_nitsche_default():
    cfg = config_from_dict({"k": 2, "h": 0.1}).validate()
    res = cfg.resolved()
    assert np.isclose(res["gamma_d"], 40 * (res["mu"] + res["lambda"]))
    assert len(res["gamma_ghost"]) == 2


def test_h_must_divide_domain():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"h": 0.3}).validate()
    assert info.value.field == "h"


@pytest.mark.parametrize("data, field", [
    ({"material": {"nu": 0.5}}, "material.nu"),
    ({"material": {"E": -1.0}}, "material.E"),
    ({"colour": "red"}, "colour"),
    ({"optimization": {"speed": 1}}, "optimization.speed"),
    ({"problem": "bridge"}, "problem"),
    ({"k": 0}, "k"),
    ({"holes": [[0.5, 0.5, -0.1]]}, "holes[0]"),
])
def test_invalid_fields_named(data, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data).validate()
    assert info.value.field == field


def test_lshape_preset_valid():
    cfg = lshape_preset().validate()
    assert cfg.domain.void is not None and cfg.dirichlet


def test_validate_command(small_cfg, capsys):
    assert main(["validate", str(small_cfg)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["h"] == 0.1 and res["element"] == "quadrilateral"


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('h = 0.3\n')
    assert main(["validate", str(p)]) == 2
    assert "h" in capsys.readouterr().err
    p.write_text('h = = 1\n')
    assert main(["run", str(p)]) == 2
    assert main(["validate", str(tmp_path / "missing.toml")]) == 2


def test_run_zero_iterations(small_cfg, tmp_path):
    out = tmp_path / "out0"
    assert main(["run", str(small_cfg), "--max-iter", "0", "--out-dir", str(out), "--no-report"]) == 0
    lines = (out / "iterations.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 2
    row = read_log(out / "iterations.csv")[0]
    assert row["iter"] == 0 and row["accepted"] and row["t"] == 0.0
    assert np.isclose(row["J"], row["compliance"] + 35.0 * row["volume"], rtol=1e-14)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 0 and summary["J"] == row["J"]
    assert (out / "snapshot_final.vtk").exists() and (out / "config_resolved.json").exists()


def test_run_is_reproducible(small_cfg, tmp_path):
    csvs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["run", str(small_cfg), "--max-iter", "2", "--out-dir", str(out),
                     "--no-report"]) == 0
        csvs.append((out / "iterations.csv").read_bytes())
    assert csvs[0] == csvs[1]
    rows = read_log(tmp_path / "a" / "iterations.csv")
    assert max(r["iter"] for r in rows) <= 2
    assert (tmp_path / "a" / "snapshot_0001.vtk").exists()
    assert (tmp_path / "a" / "boundary_0001.svg").exists()


def test_run_report_figures(small_cfg, tmp_path):
    out = tmp_path / "rep"
    assert main(["run", str(small_cfg), "--max-iter", "1", "--out-dir", str(out)]) == 0
    for name in ("design_final.png", "convergence.png"):
        assert (out / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# --------------------------------------------------------------------------- io
def test_snapshot_vtk_layout(tmp_path):
    r = make_refined(h=0.25, k=1)
    phi = np.linspace(-1, 1, r.fine.n_vertices)
    disp = np.zeros((r.fine.n_vertices, 2))
    vm = np.full(r.fine.n_elements, np.nan)
    p = tmp_path / "s.vtk"
    write_snapshot_vtk(p, r.fine, phi, disp, vm)
    text = p.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert f"POINTS {r.fine.n_vertices} double" in text
    assert f"CELLS {r.fine.n_elements} {5 * r.fine.n_elements}" in text
    i = text.index(f"POINT_DATA {r.fine.n_vertices}")
    assert np.allclose([float(v) for v in text[i + 3: i + 3 + len(phi)]], phi)
    j = text.index(f"CELL_DATA {r.fine.n_elements}")
    assert all(float(v) == 0.0 for v in text[j + 3:])   # NaN outside the active mesh written as 0


def test_svg_has_boundary_lines(tmp_path):
    r = make_refined(h=0.25, k=1)
    ls = levelset_from(r, holes=[(0.5, 0.5, 0.3)])
    geom = extract_geometry(ls)
    p = tmp_path / "b.svg"
    write_svg(p, geom, r.coarse)
    text = p.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    n_grid = r.coarse.n_interior_faces + len(r.coarse.bface_vertices)
    assert text.count("<line") == n_grid + len(geom.seg_p0)
