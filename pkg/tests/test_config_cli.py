import csv
import math
from dataclasses import replace

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from movcond import cli
from movcond.config import CaseConfig, ConfigError, OutputSettings, ReferenceSettings, SchemeSpec, SourceSettings
from movcond.linalg import SingularMatrixError
from movcond.mesh import Discretization, SlabGeometry
from movcond.postproc import FIELD_COLUMNS, CaseReport
from movcond.schemes import Scheme

SMALL = {
    "geometry": {"d": 0.5, "air_factor": 2.0, "flow_halflength_factor": 6.0},
    "discretization": {"nz": 24, "ny_conductor": 4, "ny_air": 2, "grading_ratio": 1.0, "conductor_grading": 1.0},
    "reference": {"n_modes": 60, "n_store": 1201},
    "pe": [2.0],
}


def small_config(tmp_path, **over) -> CaseConfig:
    data = {**SMALL, **over}
    data.setdefault("output", {})
    data["output"] = {"dir": str(tmp_path / "out"), **data["output"]}
    return CaseConfig.from_dict(data)


def write_config(tmp_path, **over):
    path = tmp_path / "case.yaml"
    cfg = small_config(tmp_path, **over)
    cfg.save(path)
    return path, cfg


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- configuration -----------------------------------------------------------


def test_default_config_round_trip():
    cfg = CaseConfig()
    assert CaseConfig.parse(cfg.dump()) == cfg
    assert CaseConfig.parse(CaseConfig.parse(cfg.dump()).dump()).dump() == cfg.dump()


@settings(max_examples=30, deadline=None)
@given(
    pe=st.lists(st.floats(0.01, 1e4, allow_nan=False), min_size=1, max_size=4),
    alpha=st.floats(0.0, 1.0),
    nz=st.integers(2, 400),
    sigma=st.floats(1.0, 1e8),
    conv=st.sampled_from(["with-mu", "without-mu"]),
    kind=st.sampled_from(["modal", "galerkin"]),
)
def test_config_round_trip_property(pe, alpha, nz, sigma, conv, kind):
    cfg = CaseConfig(
        discretization=Discretization(nz=nz),
        schemes=(SchemeSpec(Scheme.SUPG_GAUGE_FREE, alpha), SchemeSpec(Scheme.GALERKIN)),
        pe=tuple(pe),
        alpha_convention=conv,
        material=replace(CaseConfig().material, sigma=sigma),
        reference=ReferenceSettings(kind=kind),
    )
    again = CaseConfig.parse(cfg.dump())
    assert again == cfg
    assert again.dump() == cfg.dump()


def test_u_z_config_round_trip():
    cfg = CaseConfig(pe=None, u_z=12.5)
    again = CaseConfig.parse(cfg.dump())
    assert again == cfg and again.pe is None
    assert CaseConfig.from_dict({"u_z": 3.0}).pe is None


def test_exactly_one_of_pe_and_u_z():
    with pytest.raises(ConfigError):
        CaseConfig(pe=(200.0,), u_z=1.0)
    with pytest.raises(ConfigError):
        CaseConfig(pe=None, u_z=None)
    with pytest.raises(ConfigError):
        CaseConfig.from_dict({"pe": [200.0], "u_z": 1.0})


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"geometry": {"d": 0.5, "width": 2}},
        {"geometry": [1, 2]},
        {"pe": [-1.0]},
        {"pe": []},
        {"schemes": []},
        {"schemes": [{"scheme": "upwind"}]},
        {"schemes": [{"scheme": "supg-gauged", "alpha": 0.1}]},
        {"alpha_convention": "sideways"},
        {"reference": {"kind": "exact"}},
    ],
)
def test_invalid_config_rejected(data):
    with pytest.raises(ConfigError):
        CaseConfig.from_dict(data)


def test_config_defaults_hold_benchmark_constants():
    cfg = CaseConfig()
    assert cfg.material.sigma == 7.21e6 and cfg.material.mu_r == 1.0
    assert cfg.discretization.n_elements == 5760
    src = cfg.source_field()
    assert src.halfwidth == cfg.geometry.field_halfwidth
    assert [s.label for s in cfg.schemes] == ["galerkin", "supg-gauged", "supg-gauge-free-a0"]


# -- subcommands -------------------------------------------------------------


def test_run_writes_reports_and_fields(tmp_path):
    path, cfg = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--vtk"]) == 0
    out = tmp_path / "out"
    rows = read_csv(out / "report.csv")
    assert [r["scheme"] for r in rows] == ["galerkin", "supg-gauged", "supg-gauge-free"]
    assert list(rows[0]) == list(CaseReport.columns())
    assert all(r["status"] == "ok" for r in rows)
    for label in ("galerkin", "supg-gauged", "supg-gauge-free-a0"):
        with open(out / f"fields-{label}.csv") as fh:
            assert fh.readline().strip() == ",".join(FIELD_COLUMNS)
        assert (out / f"fields-{label}.vtk").read_text().startswith("# vtk DataFile")


def test_run_is_deterministic(tmp_path):
    path, _ = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for sub in ("run", "sweep", "condition"):
        extra = ["--pe", "1", "3"] if sub != "run" else []
        extra += ["--alpha", "0", "0.1"] if sub == "condition" else []
        assert cli.main([sub, "--config", str(path), "--out", str(a), *extra]) == 0
        assert cli.main([sub, "--config", str(path), "--out", str(b), *extra]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    assert {"report.csv", "sweep.csv", "fig2c.csv", "fig2d.csv", "fig5.csv", "table1.csv"} <= set(files)
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_sweep_rows_and_series(tmp_path):
    cfg = small_config(tmp_path)
    reports = cli.sweep_pe(cfg, [1.0, 4.0])
    assert [(r.pe, r.scheme) for r in reports] == [
        (p, s) for p in (1.0, 4.0) for s in ("galerkin", "supg-gauged", "supg-gauge-free")
    ]
    out = tmp_path / "out"
    fig5 = read_csv(out / "fig5.csv")
    assert {r["scheme"] for r in fig5} == {"supg-gauge-free"} and len(fig5) == 2
    fig2c = read_csv(out / "fig2c.csv")
    assert list(fig2c[0]) == ["pe", "scheme", "alpha", "peak_divA_pct"] and len(fig2c) == 6
    by = {(r.pe, r.scheme): r for r in reports}
    assert float(fig2c[1]["peak_divA_pct"]) == by[(1.0, "supg-gauged")].peak_divA_pct


def test_single_entry_sweep_matches_run(tmp_path):
    cfg = small_config(tmp_path)
    run = cli.run_case(cfg, write=False)
    sweep = cli.sweep_pe(cfg, cfg.pe, write=False)
    assert [r.row(False) for r in run] == [r.row(False) for r in sweep]


def test_failure_isolation(tmp_path, monkeypatch):
    cfg = small_config(tmp_path)
    clean = cli.sweep_pe(cfg, [1.0, 4.0], write=False)
    real = cli.solve_case

    def flaky(mesh, material, config, source, **kw):
        if config.scheme is Scheme.SUPG_GAUGED and abs(config.u_z) > 0 and cli._current_pe == 4.0:
            raise SingularMatrixError("forced singular", pivot=7)
        return real(mesh, material, config, source, **kw)

    orig_velocity = cli.case_velocity

    def tracking(config, mesh, pe=None):
        cli._current_pe = pe
        return orig_velocity(config, mesh, pe)

    monkeypatch.setattr(cli, "solve_case", flaky)
    monkeypatch.setattr(cli, "case_velocity", tracking, raising=True)
    monkeypatch.setattr(cli, "_current_pe", None, raising=False)
    dirty = cli.sweep_pe(cfg, [1.0, 4.0], write=True)
    status = [r.status for r in dirty]
    assert status.count("ok") == 5
    bad = [r for r in dirty if r.status != "ok"]
    assert bad[0].scheme == "supg-gauged" and bad[0].pe == 4.0 and "forced singular" in bad[0].status
    assert math.isnan(bad[0].peak_interface_error_pct)
    for c, d in zip(clean, dirty):
        if d.status == "ok":
            assert c.row(False) == d.row(False)
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert sum(r["status"] != "ok" for r in rows) == 1


def test_sweep_exit_code_reports_failed_cells(tmp_path, monkeypatch):
    path, _ = write_config(tmp_path)

    def broken(*a, **kw):
        raise SingularMatrixError("always", pivot=0)

    monkeypatch.setattr(cli, "solve_case", broken)
    assert cli.main(["sweep", "--config", str(path), "--pe", "1"]) == 1
    assert cli.main(["condition", "--config", str(path), "--pe", "1", "--alpha", "0"]) == 1


def test_condition_table_metadata(tmp_path):
    path, _ = write_config(tmp_path)
    out = tmp_path / "cond"
    code = cli.main([
        "condition", "--config", str(path), "--pe", "1,3", "--alpha", "0", "0.05",
        "--alpha-convention", "without-mu", "--out", str(out),
    ])
    assert code == 0
    rows = read_csv(out / "table1.csv")
    assert list(rows[0]) == list(cli.TABLE_COLUMNS)
    assert [(float(r["pe"]), r["scheme"], float(r["alpha"])) for r in rows] == [
        (p, s, a) for p in (1.0, 3.0)
        for s, a in (("supg-gauge-free", 0.0), ("supg-gauge-free", 0.05), ("supg-gauged", 0.0))
    ]
    assert all(float(r["condition_estimate"]) >= 1.0 for r in rows)
    meta = yaml.safe_load((out / "table1.meta.yaml").read_text())
    assert meta["alpha_convention"] == "without-mu"
    assert "1-norm" in meta["condition_norm"]


def test_reference_command_and_cache(tmp_path):
    path, _ = write_config(tmp_path)
    cache = tmp_path / "cache"
    args = ["reference", "--config", str(path), "--pe", "1", "2", "--ref-cache", str(cache)]
    assert cli.main(args) == 0
    assert len(list(cache.glob("ref-*.npz"))) == 2
    first = (tmp_path / "out" / "reference.csv").read_text()
    assert cli.main(args + ["--no-generate-ref"]) == 0
    assert (tmp_path / "out" / "reference.csv").read_text() == first
    assert cli.main(["reference", "--config", str(path), "--pe", "5", "--ref-cache", str(cache),
                     "--no-generate-ref"]) == 1


def test_missing_reference_is_an_error(tmp_path):
    path, _ = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--no-generate-ref"]) == 2


def test_galerkin_reference_kind(tmp_path):
    cfg = small_config(tmp_path, reference={"kind": "galerkin"}, pe=[0.4])
    reports = cli.run_case(cfg, write=False)
    gal = reports[0]
    # the reference is the base Galerkin solution itself
    assert gal.peak_interface_error_pct == pytest.approx(0.0, abs=1e-10)
    assert gal.peak_divA_pct > 0


def test_dump_mesh(tmp_path):
    path, _ = write_config(tmp_path)
    assert cli.main(["dump-mesh", "--config", str(path)]) == 0
    text = (tmp_path / "out" / "mesh.txt").read_text()
    assert str(24 * 8) in text


def test_zero_applied_field(tmp_path):
    cfg = small_config(tmp_path, source={"amplitude": 0.0})
    reports = cli.run_case(cfg)
    for r in reports:
        assert r.status == "ok"
        assert (r.peak_bx_ref, r.peak_interface_error_pct, r.peak_divA_pct,
                r.air_current_ratio_pct, r.oscillation_metric) == (0.0,) * 5
    rows = read_csv(tmp_path / "out" / "fields-supg-gauged.csv")
    for name in ("Ay", "Az", "bx", "divA", "jy"):
        assert all(float(r[name]) == 0.0 for r in rows)


def test_cli_scheme_and_alpha_flags(tmp_path):
    path, _ = write_config(tmp_path)
    args = cli.build_parser().parse_args(
        ["run", "--config", str(path), "--scheme", "supg-gauge-free", "--scheme", "galerkin", "--alpha", "0,0.1"]
    )
    cfg = cli.config_from_args(args)
    assert [s.label for s in cfg.schemes] == ["supg-gauge-free-a0", "supg-gauge-free-a0.1", "galerkin"]


def test_bad_inputs_exit_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("pe: [1]\nu_z: 2\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    path, _ = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--pe", "1", "2"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


def test_source_settings_round_trip():
    cfg = CaseConfig(source=SourceSettings(kind="gaussian", amplitude=0.5, center=0.1),
                     output=OutputSettings(dir="x", vtk=True))
    assert CaseConfig.parse(cfg.dump()) == cfg
    g = SlabGeometry()
    assert cfg.source_field().halfwidth == g.field_halfwidth
    assert np.isfinite(cfg.source_field()(np.array([0.0]))).all()
