import json

import numpy as np
import pytest

from nslsq import cli
from nslsq.cli import (
    ConfigError,
    ExperimentConfig,
    lid_profile,
    main,
    parse_config,
    run_experiment,
    stream_function,
    write_vtk,
)
from conftest import linear_field

MINIMAL = """\
[experiment]
geometry = semidisk
nu = 1/500
"""


def test_parse_minimal_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.nu == pytest.approx(1 / 500)
    assert cfg.m == 2.0
    assert cfg.tol == 1e-8
    assert cfg.policy == "quartic"
    assert cfg.variant == "E"
    assert cfg.schedule is None


def test_parse_schedule():
    cfg = parse_config(MINIMAL + "schedule = 1/500, 1/1000\n")
    assert cfg.schedule == [pytest.approx(1 / 500), pytest.approx(1 / 1000)]
    assert cfg.nu == pytest.approx(1 / 1000)  # target viscosity is the last


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'viscosity'"):
        parse_config(MINIMAL + "viscosity = 2\n")


def test_parse_rejects_bad_value():
    with pytest.raises(ConfigError, match="key 'nu'"):
        parse_config("[experiment]\ngeometry = semidisk\nnu = abc\n")


def test_dt_must_divide_T():
    with pytest.raises(ConfigError, match="0.3.*does not divide.*1.0"):
        parse_config(MINIMAL + "T = 1.0\ndt = 0.3\n")


def test_schedule_must_decrease():
    with pytest.raises(ConfigError, match="decreasing"):
        parse_config(MINIMAL + "schedule = 1/500, 1/400\n")


def test_invalid_policy_and_variant():
    with pytest.raises(ConfigError, match="policy"):
        parse_config(MINIMAL + "policy = bogus\n")
    with pytest.raises(ConfigError, match="variant"):
        parse_config(MINIMAL + "variant = F\n")


def test_snapshot_range_validated():
    with pytest.raises(ConfigError, match="snapshot"):
        parse_config(MINIMAL + "T = 1.0\ndt = 0.5\nsnapshots = 3.0\n")


def test_lid_profile_matches_stated_form():
    assert lid_profile(np.array([0.5]))[0] == pytest.approx(0.0, abs=1e-12)
    assert lid_profile(np.array([-0.5]))[0] == pytest.approx(0.0, abs=1e-12)
    assert lid_profile(np.array([0.0]))[0] == pytest.approx((1 - np.exp(-50)) ** 2)


def test_stream_function_zero_velocity(square2):
    psi = stream_function(square2, np.zeros(square2.n_velocity))
    assert np.abs(psi).max() == 0.0


def test_stream_function_rigid_rotation_dense_oracle(square2):
    """u = (-y, x): the weak vorticity equals -2 against interior tests;
    compare the sparse path to a dense solve of the same reduced system."""
    from nslsq.fem import vorticity_load
    from nslsq.linalg import eliminate_dirichlet

    u = linear_field(square2, (0.0, 0.0, -1.0), (0.0, 1.0, 0.0))
    psi = stream_function(square2, u)
    matrix, _ = eliminate_dirichlet(square2.scalar_stiffness, square2.boundary_nodes)
    b = vorticity_load(square2, u)
    b[square2.boundary_nodes] = 0.0
    dense = np.linalg.solve(matrix.toarray(), b)
    assert np.abs(psi - dense).max() < 1e-8
    assert np.abs(psi[square2.boundary_nodes]).max() == 0.0
    interior = np.setdiff1d(np.arange(square2.n_scalar), square2.boundary_nodes)
    assert psi[interior].max() < 0.0  # -Lap(psi) = -2 pushes psi negative


def test_write_vtk_geometry_only(square1, tmp_path):
    path = tmp_path / "geo.vtk"
    write_vtk(square1, {}, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    k = text.index(f"POINTS {square1.n_scalar} double")
    assert k > 0
    ncells = 4 * square1.mesh.n_triangles
    assert f"CELLS {ncells} {4 * ncells}" in text
    assert "POINT_DATA" not in path.read_text()


def test_write_vtk_velocity_exact_nodal_values(square2, tmp_path):
    rng = np.random.default_rng(21)
    u = rng.standard_normal(square2.n_velocity)
    path = tmp_path / "vel.vtk"
    write_vtk(square2, {"velocity": u, "marker": np.arange(square2.n_pressure,
                                                           dtype=float)}, path)
    lines = path.read_text().splitlines()
    start = lines.index("VECTORS velocity double") + 1
    vals = np.array([[float(t) for t in lines[start + i].split()]
                     for i in range(square2.n_scalar)])
    assert np.array_equal(vals[:, 0], u[: square2.n_scalar])
    assert np.array_equal(vals[:, 1], u[square2.n_scalar:])
    assert np.abs(vals[:, 2]).max() == 0.0
    # P1 field extended to midpoints by edge averaging
    mstart = lines.index("SCALARS marker double 1") + 2
    marker = np.array([float(lines[mstart + i]) for i in range(square2.n_scalar)])
    e = square2.edges
    expected = 0.5 * (marker[e[:, 0]] + marker[e[:, 1]])
    assert np.abs(marker[square2.mesh.n_vertices:] - expected).max() < 1e-12


TINY = """\
[experiment]
geometry = semidisk
h = 0.2
T = 0.4
dt = 0.1
nu = 1/100
snapshots = 0.2, 0.4
"""


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    cfg = parse_config(TINY + f"outdir = {out}\n")
    report = run_experiment(cfg)
    return cfg, report, out


def test_run_experiment_outputs(tiny_run):
    cfg, report, out = tiny_run
    assert report.converged
    assert report.final_sqrt2E <= cfg.tol
    csv = (out / "history.csv").read_text().splitlines()
    assert csv[0] == "k,rel_increment,sqrt2E,lambda"
    assert len(csv) - 1 == report.records[-1]["k"] + 1  # k=0 row included
    assert (out / "report.txt").exists()
    assert (out / "mesh.node").exists() and (out / "mesh.ele").exists()
    assert (out / "snapshot_t0.2.vtk").exists()
    assert (out / "snapshot_t0.4.vtk").exists()


def test_report_counts_match_mesh(tiny_run):
    cfg, report, out = tiny_run
    from nslsq.cli import build_mesh

    mesh = build_mesh(cfg)
    assert report.n_triangles == mesh.n_triangles
    assert report.n_vertices == mesh.n_vertices
    data = json.loads((out / "report.txt").read_text())
    assert data["n_triangles"] == mesh.n_triangles
    assert data["outcome"] == "converged"


def test_determinism_bit_identical_history(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = parse_config(TINY + f"outdir = {tmp_path / name}\n")
        run_experiment(cfg)
        outs.append((tmp_path / name / "history.csv").read_bytes())
    assert outs[0] == outs[1]


def test_run_external_mesh_round_trip(tmp_path):
    from nslsq.cli import build_mesh
    from nslsq.mesh import generate_semidisk, write_triangle_format

    mesh = generate_semidisk(0.2)
    node, ele = write_triangle_format(mesh)
    (tmp_path / "disk.node").write_text(node)
    (tmp_path / "disk.ele").write_text(ele)
    cfg = ExperimentConfig(geometry=str(tmp_path / "disk"), T=0.2, dt=0.1,
                           nu=0.01, outdir=str(tmp_path / "out"))
    back = build_mesh(cfg)
    assert back.n_triangles == mesh.n_triangles
    report = run_experiment(cfg)
    assert report.converged


def test_manufactured_unit_square_reports_rate(tmp_path):
    cfg = ExperimentConfig(geometry="unit_square", h=1 / 3, T=0.25, dt=0.125,
                           nu=0.5, outdir=str(tmp_path / "sq"))
    report = run_experiment(cfg)
    assert report.converged
    assert report.convergence_rate is not None
    assert len(report.errors) == 2
    assert report.errors[1] < report.errors[0]


def test_main_mesh_subcommand(tmp_path, capsys):
    rc = main(["mesh", "unit_square", "--h", "0.5", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "mesh.node").exists()
    assert "vertices" in capsys.readouterr().out


def test_main_run_with_overrides(tmp_path, capsys):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY)
    rc = main(["run", str(cfg_path), "--out", str(tmp_path / "o"),
               "--policy", "cheap"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "outcome: converged" in out
    data = json.loads((tmp_path / "o" / "report.txt").read_text())
    assert data["config"]["policy"] == "cheap"


def test_main_error_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "bad.ini"
    cfg_path.write_text("[experiment]\ngeometry = semidisk\nnu = -3\n")
    rc = main(["run", str(cfg_path)])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_main_diverged_exit_code(tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(TINY + f"outdir = {tmp_path / 'd'}\n")

    def fake_run(config):
        return cli.RunReport(config={}, records=[{"k": 3}], final_sqrt2E=1e9,
                             outcome="diverged", converged=False, wall_time=0.1,
                             n_triangles=1, n_vertices=3, n_velocity_dofs=2)

    monkeypatch.setattr(cli, "run_experiment", fake_run)
    rc = main(["run", str(cfg_path)])
    assert rc == 2


def test_history_csv_truncates_on_divergence_schema():
    from nslsq.cli import write_history_csv
    from nslsq.newton import IterationRecord

    recs = [IterationRecord(0, 1.0, 0.5, None, 0.1),
            IterationRecord(1, 2.0, None, 0.2, 0.1)]
    import tempfile

    with tempfile.NamedTemporaryFile("r", suffix=".csv") as f:
        write_history_csv(recs, f.name)
        lines = open(f.name).read().splitlines()
    assert lines[1].startswith("0,,") and lines[1].endswith("e-01")
    assert lines[2].split(",")[3] == ""
