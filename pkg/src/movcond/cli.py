"""Command-line driver: single runs, Pe sweeps, condition tables, references.

Outputs land in the configured output directory:

``report.csv`` / ``sweep.csv``
    one ``CaseReport`` row per (Pe, scheme, alpha).
``fields-<label>.csv``
    nodal dump with columns ``y,z,region,Ay,Az,phi,bx,divA,jy``.
``fig2c.csv``, ``fig2d.csv``, ``fig5.csv``
    long-format ``pe,scheme,alpha,<quantity>`` series.
``table1.csv`` plus ``table1.meta.yaml``
    condition estimates and errors per (Pe, alpha).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import postproc
from .config import CaseConfig, ConfigError, ReferenceSettings, SchemeSpec
from .linalg import SingularMatrixError
from .mesh import Mesh, build_slab_mesh, write_mesh_dump
from .reference import ReferenceError, cached_galerkin_reference, cached_modal_reference
from .schemes import Scheme, peclet_element, velocity_for_peclet
from .solve import SolveError, condition_estimates, solve_case

log = logging.getLogger("movcond")

CELL_ERRORS = (SingularMatrixError, SolveError, ReferenceError, ValueError, ArithmeticError)


def case_velocity(config: CaseConfig, mesh: Mesh, pe: float | None = None) -> tuple[float, float]:
    """``(pe, u_z)`` for the case; ``pe`` overrides the config."""
    dl = float(mesh.dlz.max())
    mat = config.material
    if pe is None and config.u_z is not None:
        u = config.u_z
        return float(peclet_element(mat.sigma, mat.mu, u, dl)), u
    if pe is None:
        if len(config.pe) != 1:
            raise ConfigError("a single run needs exactly one Pe value")
        pe = config.pe[0]
    return float(pe), velocity_for_peclet(pe, mat, dl)


def generate_reference(config: CaseConfig, u_z: float, settings: ReferenceSettings | None = None):
    """Reference b_x for one velocity, cached when a cache directory is set."""
    s = settings or config.reference
    src = config.source_field()
    if s.kind == "modal":
        return cached_modal_reference(
            s.cache_dir, config.geometry, config.material, src, u_z,
            n_modes=s.n_modes, n_store=s.n_store, generate=s.generate,
        )
    return cached_galerkin_reference(
        s.cache_dir, config.geometry, config.discretization, config.material, src, u_z,
        y_factor=s.y_factor, max_element_pe=s.max_element_pe,
        element_cap=s.element_cap, generate=s.generate,
    )


def _is_zero(sol) -> bool:
    return not (np.any(sol.ay) or np.any(sol.az))


def case_report(sol, ref, spec: SchemeSpec, pe: float, kappa: float, wall: float) -> postproc.CaseReport:
    peak = float(ref.peak_bx())
    if peak == 0.0 and _is_zero(sol):
        # no applied field: nothing to normalize, every metric is zero
        return postproc.CaseReport(pe, spec.scheme.value, spec.alpha, 0.0, 0.0, 0.0, 0.0, 0.0, kappa, wall)
    return postproc.CaseReport(
        pe=pe,
        scheme=spec.scheme.value,
        alpha=spec.alpha,
        peak_bx_ref=peak,
        peak_interface_error_pct=postproc.peak_interface_error(sol, ref),
        peak_divA_pct=postproc.peak_divA_pct(sol, ref),
        air_current_ratio_pct=postproc.air_current_ratio(sol.derived(), sol.mesh),
        oscillation_metric=postproc.oscillation_metric(sol, ref),
        condition_estimate=kappa,
        wall_time=wall,
    )


def _solve_cell(config, mesh, spec, u_z, pe, ref, with_condition=True):
    t0 = time.perf_counter()
    keep: dict = {}
    sol = solve_case(mesh, config.material, config.scheme_config(spec, u_z), config.source_field(), keep=keep)
    kappa = condition_estimates(keep["solved"]) if with_condition else {"equilibrated": math.nan}
    rep = case_report(sol, ref, spec, pe, kappa["equilibrated"], time.perf_counter() - t0)
    return sol, rep, kappa


def _out_dir(config: CaseConfig) -> Path:
    out = Path(config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_case(config: CaseConfig, write: bool = True) -> list[postproc.CaseReport]:
    """Every configured scheme at the single configured Pe (or u_z)."""
    mesh = build_slab_mesh(config.geometry, config.discretization)
    pe, u = case_velocity(config, mesh)
    ref = generate_reference(config, u)
    reports, solutions = [], []
    for spec in config.schemes:
        sol, rep, _ = _solve_cell(config, mesh, spec, u, pe, ref)
        reports.append(rep)
        solutions.append((spec, sol))
    if write:
        out = _out_dir(config)
        postproc.write_report_csv(reports, out / "report.csv", config.output.timing)
        for spec, sol in solutions:
            if config.output.fields:
                postproc.write_field_csv(sol, out / f"fields-{spec.label}.csv")
            if config.output.vtk:
                postproc.write_vtk(sol, out / f"fields-{spec.label}.vtk")
    return reports


def sweep_pe(config: CaseConfig, pe_list, write: bool = True) -> list[postproc.CaseReport]:
    """One report per (Pe, scheme); failed cells carry a ``failed:`` status."""
    pe_list = [float(p) for p in pe_list]
    if not pe_list or any(not p > 0 for p in pe_list):
        raise ConfigError("pe_list must be nonempty and positive")
    mesh = build_slab_mesh(config.geometry, config.discretization)
    reports = []
    for pe in pe_list:
        _, u = case_velocity(config, mesh, pe)
        try:
            ref = generate_reference(config, u)
        except CELL_ERRORS as exc:
            log.error("reference at Pe=%g failed: %s", pe, exc)
            reports += [postproc.CaseReport.failed(pe, s.scheme.value, s.alpha, str(exc)) for s in config.schemes]
            continue
        for spec in config.schemes:
            try:
                _, rep, _ = _solve_cell(config, mesh, spec, u, pe, ref)
            except CELL_ERRORS as exc:
                log.error("cell Pe=%g %s failed: %s", pe, spec.label, exc)
                rep = postproc.CaseReport.failed(pe, spec.scheme.value, spec.alpha, str(exc))
            log.info("Pe=%g %s: %s", pe, spec.label, rep.status)
            reports.append(rep)
    if write:
        out = _out_dir(config)
        timing = config.output.timing
        postproc.write_report_csv(reports, out / "sweep.csv", timing)
        write_series(reports, out / "fig2c.csv", "peak_divA_pct")
        write_series(reports, out / "fig2d.csv", "peak_interface_error_pct")
        write_series(
            [r for r in reports if r.scheme == Scheme.SUPG_GAUGE_FREE.value],
            out / "fig5.csv", "peak_interface_error_pct",
        )
    return reports


def write_series(reports, path: Path, quantity: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"pe,scheme,alpha,{quantity}\n")
        for r in reports:
            v = getattr(r, quantity)
            fh.write(f"{r.pe!r},{r.scheme},{r.alpha!r},{'nan' if math.isnan(v) else repr(v)}\n")


TABLE_COLUMNS = (
    "pe", "scheme", "alpha", "condition_estimate", "condition_raw",
    "peak_interface_error_pct", "status",
)


def condition_table(config: CaseConfig, pe_list, alpha_list, write: bool = True) -> list[dict]:
    """Condition estimate and interface error per (Pe, alpha), plus gauged SU/PG."""
    if not list(pe_list) or not list(alpha_list):
        raise ConfigError("pe_list and alpha_list must be nonempty")
    specs = [SchemeSpec(Scheme.SUPG_GAUGE_FREE, a) for a in alpha_list] + [SchemeSpec(Scheme.SUPG_GAUGED)]
    mesh = build_slab_mesh(config.geometry, config.discretization)
    rows = []
    for pe in pe_list:
        pe = float(pe)
        _, u = case_velocity(config, mesh, pe)
        try:
            ref = generate_reference(config, u)
        except CELL_ERRORS as exc:
            ref, ref_err = None, str(exc)
        for spec in specs:
            row = dict(pe=pe, scheme=spec.scheme.value, alpha=spec.alpha)
            try:
                if ref is None:
                    raise ReferenceError(ref_err)
                _, rep, kappa = _solve_cell(config, mesh, spec, u, pe, ref)
                row.update(
                    condition_estimate=kappa["equilibrated"], condition_raw=kappa["raw"],
                    peak_interface_error_pct=rep.peak_interface_error_pct, status="ok",
                )
            except CELL_ERRORS as exc:
                log.error("cell Pe=%g %s failed: %s", pe, spec.label, exc)
                row.update(
                    condition_estimate=math.nan, condition_raw=math.nan,
                    peak_interface_error_pct=math.nan, status=f"failed: {exc}",
                )
            rows.append(row)
    if write:
        out = _out_dir(config)
        with open(out / "table1.csv", "w") as fh:
            fh.write(",".join(TABLE_COLUMNS) + "\n")
            for r in rows:
                fh.write(",".join(postproc.format_value(r[c]) for c in TABLE_COLUMNS) + "\n")
        meta = {
            "alpha_convention": config.alpha_convention,
            "alpha_term": "alpha/mu * grad-div" if config.alpha_convention == "with-mu" else "alpha * grad-div",
            "condition_norm": "1-norm, Hager-Higham estimate of ||A^-1||_1",
            "condition_estimate": "row then column max-norm equilibrated matrix R A C",
            "condition_raw": "matrix as assembled (SI units)",
            "reference": config.reference.kind,
            "discretization": config.to_dict()["discretization"],
        }
        (out / "table1.meta.yaml").write_text(yaml.safe_dump(meta, sort_keys=False))
    return rows


# -- argument handling -----------------------------------------------------


def _floats(values) -> list[float]:
    out = []
    for v in values:
        out += [float(x) for x in str(v).split(",") if x.strip()]
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="movcond", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "solve one Pe for every configured scheme"),
        ("sweep", "Pe sweep with figure series"),
        ("condition", "condition-number table"),
        ("reference", "build and cache reference solutions"),
        ("dump-mesh", "write the mesh listing"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path)
        s.add_argument("--scheme", action="append", choices=[x.value for x in Scheme])
        s.add_argument("--pe", nargs="+")
        s.add_argument("--alpha", nargs="+")
        s.add_argument("--out")
        s.add_argument("--ref-cache")
        s.add_argument("--no-generate-ref", action="store_true")
        s.add_argument("--alpha-convention", choices=["with-mu", "without-mu"])
        s.add_argument("--vtk", action="store_true", help="also write legacy VTK fields")
    return p


def config_from_args(args) -> CaseConfig:
    cfg = CaseConfig.load(args.config) if args.config else CaseConfig()
    if args.scheme:
        alphas = _floats(args.alpha) if args.alpha else [0.0]
        specs = []
        for name in args.scheme:
            sch = Scheme(name)
            specs += [SchemeSpec(sch, a) for a in alphas] if sch.gauge_free else [SchemeSpec(sch)]
        cfg = replace(cfg, schemes=tuple(specs))
    elif args.alpha and args.command != "condition":
        cfg = replace(cfg, schemes=tuple(
            SchemeSpec(s.scheme, a) for s in cfg.schemes
            for a in (_floats(args.alpha) if s.scheme.gauge_free else [0.0])
        ))
    if args.pe:
        cfg = cfg.with_pe(_floats(args.pe))
    if args.alpha_convention:
        cfg = replace(cfg, alpha_convention=args.alpha_convention)
    ref = cfg.reference
    if args.ref_cache:
        ref = replace(ref, cache_dir=args.ref_cache)
    if args.no_generate_ref:
        ref = replace(ref, generate=False)
    out = cfg.output
    if args.out:
        out = replace(out, dir=args.out)
    if args.vtk:
        out = replace(out, vtk=True)
    return replace(cfg, reference=ref, output=out)


def _failed(rows) -> int:
    return sum(1 for r in rows if not str(r["status"] if isinstance(r, dict) else r.status).startswith("ok"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            reports = run_case(cfg)
            _print_reports(reports)
            return 0
        if args.command == "sweep":
            pes = cfg.pe if cfg.pe is not None else [case_velocity(cfg, build_slab_mesh(cfg.geometry, cfg.discretization))[0]]
            reports = sweep_pe(cfg, pes)
            _print_reports(reports)
            return 1 if _failed(reports) else 0
        if args.command == "condition":
            pes = cfg.pe if cfg.pe is not None else [50.0, 200.0, 1000.0]
            alphas = _floats(args.alpha) if args.alpha else [0.0, 0.05, 0.10]
            rows = condition_table(cfg, pes, alphas)
            for r in rows:
                print(f"Pe={r['pe']:g} {r['scheme']} alpha={r['alpha']:g} "
                      f"kappa={r['condition_estimate']:.4e} err={r['peak_interface_error_pct']:.3f}% {r['status']}")
            return 1 if _failed(rows) else 0
        if args.command == "reference":
            return _reference_command(cfg)
        if args.command == "dump-mesh":
            mesh = build_slab_mesh(cfg.geometry, cfg.discretization)
            path = _out_dir(cfg) / "mesh.txt"
            write_mesh_dump(mesh, path)
            print(f"{mesh.n_nodes} nodes, {mesh.n_elements} elements -> {path}")
            return 0
    except (ConfigError, ReferenceError, SingularMatrixError, SolveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def _reference_command(cfg: CaseConfig) -> int:
    mesh = build_slab_mesh(cfg.geometry, cfg.discretization)
    pes = cfg.pe if cfg.pe is not None else [None]
    failed = 0
    lines = ["pe,u_z,kind,peak_bx,status"]
    for pe in pes:
        pe_v, u = case_velocity(cfg, mesh, pe)
        try:
            ref = generate_reference(cfg, u)
            lines.append(f"{pe_v!r},{u!r},{cfg.reference.kind},{float(ref.peak_bx())!r},ok")
        except CELL_ERRORS as exc:
            failed += 1
            lines.append(f"{pe_v!r},{u!r},{cfg.reference.kind},nan,failed: {exc}")
    path = _out_dir(cfg) / "reference.csv"
    path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 1 if failed else 0


def _print_reports(reports) -> None:
    for r in reports:
        if r.status != "ok":
            print(f"Pe={r.pe:g} {r.scheme} alpha={r.alpha:g}: {r.status}")
            continue
        print(
            f"Pe={r.pe:g} {r.scheme} alpha={r.alpha:g}: err={r.peak_interface_error_pct:.3f}% "
            f"divA={r.peak_divA_pct:.1f}% air={r.air_current_ratio_pct:.2f}% "
            f"osc={r.oscillation_metric:.3f} kappa={r.condition_estimate:.3e}"
        )


if __name__ == "__main__":
    sys.exit(main())
