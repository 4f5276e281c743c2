import csv
import math

import numpy as np
import pytest

from maxwell_ddm import cli
from maxwell_ddm.cli import (ConfigError, export_intensity, main, parse_config, run_convergence,
                             run_ddm_bench, run_single, run_table1)
from maxwell_ddm.fem import EdgeSpace, PlaneWave, interpolate
from maxwell_ddm.mesh import build_rect_mesh, partition_grid


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_minimal_config_with_lambda(tmp_path):
    p = write_cfg(tmp_path, "geometry = block\nnx = 32\nny = 32  # comment\nlambda = 1.0\n"
                            "precond = block_diag\n")
    cfg = parse_config(p)
    assert cfg.omega == pytest.approx(2 * math.pi)
    assert (cfg.nx, cfg.ny, cfg.precond) == (32, 32, "block_diag")


def test_omega_and_lambda_conflict(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write_cfg(tmp_path, "omega = 5\nlambda = 1\n"))


def test_unknown_key_reports_line(tmp_path):
    with pytest.raises(ConfigError, match=":2: unknown key 'colour'"):
        parse_config(write_cfg(tmp_path, "nx = 4\ncolour = red\n"))
    with pytest.raises(ConfigError, match=":1:"):
        parse_config(write_cfg(tmp_path, "nx 4\n"))
    with pytest.raises(ConfigError, match="bad value"):
        parse_config(write_cfg(tmp_path, "nx = four\n"))


def test_validation_errors():
    with pytest.raises(ConfigError):
        parse_config(overrides={"precond": "amg"})
    with pytest.raises(ConfigError):
        parse_config(overrides={"nx": 5, "px": 2})
    with pytest.raises(ConfigError):
        parse_config(overrides={"omega": -1.0})


def test_ddm_partition_arithmetic():
    cfg = parse_config(overrides={"mode": "ddm", "nx": 6, "ny": 6, "px": 3, "py": 3})
    mesh = build_rect_mesh(cfg.nx, cfg.ny)
    assert partition_grid(mesh, cfg.px, cfg.py).n_dom == 9


def test_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("MAXWELL_DDM_WORKERS", "3")
    assert parse_config().workers == 3
    assert parse_config(overrides={"workers": 2}).workers == 2


def test_resolution_warning():
    assert cli.resolution_warning(parse_config(overrides={"nx": 64, "ny": 64, "omega": 5.0})) is None
    assert "cells per core wavelength" in cli.resolution_warning(
        parse_config(overrides={"nx": 8, "ny": 8, "omega": 40.0}))


def test_run_single_block_benchmark(tmp_path):
    cfg = parse_config(overrides={"nx": 16, "ny": 16, "omega": 5.0, "out_dir": str(tmp_path),
                                  "resolution": 16})
    rep, field, space = run_single(cfg)
    assert rep.converged and rep.final_residual <= 1e-8
    rows = read_csv(tmp_path / "residuals.csv")
    assert rows[0] == ["step", "relative_residual"] and len(rows) == len(rep.residual_history) + 1
    assert len(read_csv(tmp_path / "intensity.csv")) == 16 * 16 + 1


def test_unpreconditioned_tiny_system(tmp_path):
    cfg = parse_config(overrides={"nx": 2, "ny": 2, "precond": "none", "out_dir": str(tmp_path),
                                  "resolution": 4})
    assert run_single(cfg)[0].converged


def test_run_single_is_repeatable(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        run_single(parse_config(overrides={"nx": 8, "ny": 8, "out_dir": str(d), "resolution": 8}))
        outs.append([(d / f).read_bytes() for f in ("residuals.csv", "intensity.csv", "intensity.svg")])
    assert outs[0] == outs[1]


def test_table1_has_one_row_per_pair(tmp_path):
    cfg = parse_config(overrides={"nx": 4, "ny": 4, "out_dir": str(tmp_path),
                                  "max_iterations": 40})
    rows = run_table1(cfg, omegas=[5, 10, 20, 40, 80], preconds=["ilu0", "ssor", "schur", "block_diag"])
    assert len(rows) == 20
    table = read_csv(tmp_path / "table1.csv")
    assert table[0] == cli.TABLE1_HEADER and len(table) == 21
    for r in rows:
        assert r["converged"] or r["iterations"] == 40


def test_ddm_bench_single_subdomain_matches_single_domain(tmp_path):
    over = {"nx": 12, "ny": 12, "out_dir": str(tmp_path)}
    rep, _, _ = run_single(parse_config(overrides={**over, "resolution": 4}), write=False)
    res = run_ddm_bench(parse_config(overrides={**over, "mode": "ddm", "inner": "gmres"}))
    table = read_csv(tmp_path / "table2.csv")
    assert table == [["subdomain", "avg_inner_gmres_iters"], ["1", repr(float(rep.iterations))]]
    assert res.report.converged
    assert read_csv(tmp_path / "outer_residuals.csv")[0] == ["step", "relative_residual"]


def test_ddm_bench_3x3_rows(tmp_path):
    cfg = parse_config(overrides={"geometry": "ybranch", "nx": 12, "ny": 12, "px": 3, "py": 3,
                                  "mode": "ddm", "out_dir": str(tmp_path)})
    res = run_ddm_bench(cfg)
    table = read_csv(tmp_path / "table2.csv")
    assert len(table) == 10
    if res.report.converged:
        assert all(float(v) >= 1 for _, v in table[1:])


def test_intensity_of_zero_field(tmp_path):
    space = EdgeSpace(build_rect_mesh(4, 4))
    inten = export_intensity(space, np.zeros(space.n, complex), 8, tmp_path)
    assert not np.any(inten)
    svg = (tmp_path / "intensity.svg").read_text()
    assert svg.count("<rect") == 64 and "rgb(0,0,0)" in svg


def test_intensity_of_plane_wave_and_conjugate(tmp_path):
    space = EdgeSpace(build_rect_mesh(32, 32))
    u = interpolate(space, PlaneWave.at_angle(0.4), 5.0)
    inten = export_intensity(space, u, 16, tmp_path)
    assert np.allclose(inten, 1.0, atol=0.05)
    assert np.allclose(export_intensity(space, np.conj(u), 16, tmp_path / "c"), inten)


def test_svg_uses_full_gray_ramp(tmp_path):
    img = np.linspace(0, 1, 256).reshape(16, 16)
    cli.write_svg(tmp_path / "ramp.svg", img)
    svg = (tmp_path / "ramp.svg").read_text()
    assert "rgb(255,255,255)" in svg and "rgb(0,0,0)" in svg
    assert len(set(svg.split('fill="')[1:])) == 256


def test_convergence_rates(tmp_path):
    cfg = parse_config(overrides={"nx": 4, "omega": 5.0, "out_dir": str(tmp_path)})
    rows = run_convergence(cfg, refinements=3)
    rates = [r["rate"] for r in rows if r["rate"] is not None]
    assert len(rates) == 2 and rates[-1] > 0.8
    table = read_csv(tmp_path / "convergence.csv")
    assert table[0] == ["h", "l2_error", "rate"] and table[1][2] == ""


def test_zero_amplitude_convergence_has_zero_error(tmp_path):
    cfg = parse_config(overrides={"nx": 4, "out_dir": str(tmp_path)})
    assert all(r["l2_error"] == 0 for r in run_convergence(cfg, 2, amplitude=0.0))


def test_main_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["solve", "--nx", "8", "--ny", "8", "--omega", "5", "--out-dir", out,
                 "--resolution", "4"]) == 0
    assert main(["solve", "--nx", "8", "--ny", "8", "--precond", "ssor", "--max-iterations", "3",
                 "--out-dir", out, "--resolution", "4"]) == 1
    assert main(["solve", "--nx", "5", "--px", "2", "--out-dir", out]) == 2
    assert "does not divide" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["solve", "--omega", "5", "--lambda", "1"])


def test_main_lambda_overrides_config_frequency(tmp_path):
    p = write_cfg(tmp_path, f"omega = 5\nnx = 6\nny = 6\nout_dir = {tmp_path}\nresolution = 4\n")
    assert main(["solve", "--config", str(p), "--lambda", "2.0"]) == 0


def test_main_ddm_and_convergence(tmp_path):
    out = str(tmp_path)
    assert main(["ddm", "--nx", "8", "--ny", "8", "--px", "2", "--py", "1", "--out-dir", out]) == 0
    assert (tmp_path / "table2.csv").exists()
    assert main(["convergence", "--nx", "4", "--out-dir", out]) == 0
    assert main(["intensity", "--nx", "8", "--ny", "8", "--resolution", "8", "--out-dir", out]) == 0
