"""
メインモジュール

三球面評価ツールキットのコマンドラインを提供します。

サブコマンド:
    barrier          障壁 u0(t) の表を CSV に出力
    solve            p-ラプラス Dirichlet 問題を解き、場と報告を出力
    verify           保存した場で三球面評価と増大条件（H^{-1} の発散と S^{-2} 積分の減衰）の診断を実行
    inequality-scan  一次元不等式と I(p) 包絡の無作為検証
    hadamard         古典的な三円定理の検証
    study            格子細分による収束表
    growth           外半径 S を増やした族で増大条件を診断

設定は --config の JSON を基にし、明示したフラグがそれを上書きします。
終了コードは 0（成功）、1（判定の失敗）、2（設定の不正、stdout に JSON）です。
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Annotated, Any, Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from tqdm import tqdm

from .barrier import BarrierSpec, barrier_derivative, barrier_u0, barrier_values, xi
from .config import (
    BOUND_TOLERANCE,
    DEFAULT_ENVELOPE_SAMPLES,
    DEFAULT_SCAN_SAMPLES,
    DEFAULT_SEED,
    DEFAULT_SPHERE_DENSITY,
    EPSILON_SCHEDULE,
    HADAMARD_DENSITY,
    MAX_DIMENSION,
    MIN_CELLS_PER_AXIS,
    MIN_SPHERE_DENSITY,
    P_MAX,
    SCAN_P_MAX,
    SCAN_P_MIN,
    SLAB_FACTOR,
    SOLVER_MAX_ITERATIONS,
    SOLVER_TOLERANCE,
    STUDY_CELLS_BY_DIMENSION,
    output_dir,
)
from .errors import ConfigurationError, DomainError, SolverConvergenceError, ToolkitError
from .fieldio import read_field, write_field
from .geometry import INTERIOR, GridField, KAnnulus, node_points
from .inequalities import scan_envelope, scan_inequalities
from .session import init_session, log_session_event
from .solver import (
    PLaplaceProblem,
    barrier_boundary,
    parse_boundary_selector,
    solve_barrier_reference,
    solve_dirichlet,
)
from .utils import format_float, observed_orders
from .verifier import (
    H_of_t,
    WeightProfile,
    condition_star4,
    condition_star4b,
    discrepancy_integral,
    extremal_eta,
    hadamard_classical_check,
    normalize,
    three_spheres_check,
)


# =========================
# 実行設定（pydantic）
# =========================
class RunConfig(BaseModel):
    """全サブコマンドに共通の設定。"""

    model_config = ConfigDict(extra="forbid")

    output_dir: Path | None = None
    seed: int = Field(DEFAULT_SEED, ge=0)
    threads: int = Field(1, ge=1)
    quiet: bool = False

    def resolved_output_dir(self) -> Path:
        return self.output_dir if self.output_dir is not None else output_dir()


class GeometryConfig(RunConfig):
    n: int = Field(2, ge=2, le=MAX_DIMENSION)
    k: int = Field(2, ge=1)
    p: float = Field(2.0, gt=1.0, le=P_MAX)

    @model_validator(mode="after")
    def check_codimension(self) -> "GeometryConfig":
        if self.k > self.n:
            raise ValueError(f"k={self.k} must not exceed n={self.n}")
        return self


class BarrierConfig(GeometryConfig):
    r: float = Field(1.0, gt=0.0)
    R: float = Field(2.0, gt=0.0)
    samples: int = Field(101, ge=2)

    @model_validator(mode="after")
    def check_radii(self) -> "BarrierConfig":
        if not self.r < self.R:
            raise ValueError(f"Radii must satisfy r < R, got r={self.r}, R={self.R}")
        return self


class AnnulusConfig(GeometryConfig):
    alpha: float = Field(1.0, gt=0.0)
    beta: float = Field(2.0, gt=0.0)
    slab_halfwidth: float | None = Field(None, gt=0.0)
    epsilon_schedule: list[float] = Field(default_factory=lambda: list(EPSILON_SCHEDULE), min_length=1)
    tolerance: float = Field(SOLVER_TOLERANCE, gt=0.0)
    max_iterations: int = Field(SOLVER_MAX_ITERATIONS, ge=1)

    @model_validator(mode="after")
    def check_annulus(self) -> "AnnulusConfig":
        if not self.alpha < self.beta:
            raise ValueError(f"Radii must satisfy alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        return self

    def annulus(self) -> KAnnulus:
        return KAnnulus(self.n, self.k, self.alpha, self.beta, self.slab_halfwidth)

    def barrier(self) -> BarrierSpec:
        return BarrierSpec(self.alpha, self.beta, self.k, self.p, self.n)


class SolveConfig(AnnulusConfig):
    cells: int = Field(64, ge=MIN_CELLS_PER_AXIS)
    boundary: str = "barrier"
    name: str = Field("field", min_length=1)


class StudyConfig(AnnulusConfig):
    cells: list[Annotated[int, Field(ge=MIN_CELLS_PER_AXIS)]] | None = None

    @model_validator(mode="after")
    def check_cells(self) -> "StudyConfig":
        if self.cells is not None and (
            len(self.cells) < 2 or any(b <= a for a, b in zip(self.cells, self.cells[1:]))
        ):
            raise ValueError(f"cells must list at least two strictly increasing sizes, got {self.cells}")
        return self

    def resolved_cells(self) -> list[int]:
        if self.cells is not None:
            return list(self.cells)
        return list(STUDY_CELLS_BY_DIMENSION[self.n])


class GrowthConfig(AnnulusConfig):
    """外半径 S を増やす族。alpha が r、beta が中間の R です。"""

    outer_radii: list[float] = Field(default_factory=lambda: [3.0, 4.0, 6.0, 8.0], min_length=2)
    cells: int = Field(48, ge=MIN_CELLS_PER_AXIS)
    boundary: str = "perturbed-barrier:0.5,1"
    t_list: list[float] | None = None
    density: int = Field(128, ge=MIN_SPHERE_DENSITY)
    condition_samples: int = Field(24, ge=2)

    @model_validator(mode="after")
    def check_outer_radii(self) -> "GrowthConfig":
        S = self.outer_radii
        if any(b <= a for a, b in zip(S, S[1:])) or not S[0] > self.beta:
            raise ValueError(f"outer_radii must increase strictly and start above beta={self.beta}, got {S}")
        return self

    def cells_for(self, S: float) -> int:
        """最小の S で cells、それ以外は格子幅が揃うように比例させたセル数。"""
        return max(self.cells, int(round(self.cells * S / self.outer_radii[0])))

    def family_annulus(self, S: float) -> KAnnulus:
        L = self.slab_halfwidth
        if self.k < self.n and L is None:
            L = SLAB_FACTOR * self.outer_radii[-1]
        return KAnnulus(self.n, self.k, self.alpha, float(S), L, unbounded=True)


class VerifyConfig(RunConfig):
    field: Path
    p: float | None = Field(None, gt=1.0, le=P_MAX)
    r: float | None = Field(None, gt=0.0)
    R: float | None = Field(None, gt=0.0)
    t_list: list[float] | None = None
    density: int = Field(DEFAULT_SPHERE_DENSITY, ge=MIN_SPHERE_DENSITY)
    tolerance: float = Field(BOUND_TOLERANCE, gt=0.0)
    discrete_reference: bool = True
    conditions: bool = True
    condition_samples: int = Field(24, ge=2)


class InequalityScanConfig(RunConfig):
    samples: int = Field(DEFAULT_SCAN_SAMPLES, ge=1)
    p_min: float = Field(SCAN_P_MIN, gt=1.0)
    p_max: float = Field(SCAN_P_MAX, le=P_MAX)
    envelope_samples: int = Field(DEFAULT_ENVELOPE_SAMPLES, ge=0)

    @model_validator(mode="after")
    def check_range(self) -> "InequalityScanConfig":
        if not self.p_min < self.p_max:
            raise ValueError(f"Scan range must satisfy p_min < p_max, got [{self.p_min}, {self.p_max}]")
        return self


class HadamardConfig(RunConfig):
    coefficients: list[float | str] | None = None
    coefficients_csv: Path | None = None
    min_power: int = Field(0, ge=0)
    radii: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0], min_length=3, max_length=3)
    density: int = Field(HADAMARD_DENSITY, ge=16)

    @model_validator(mode="after")
    def check_source(self) -> "HadamardConfig":
        if (self.coefficients is None) == (self.coefficients_csv is None):
            raise ValueError("Give exactly one of coefficients or coefficients_csv")
        if self.coefficients is not None:
            for value in self.coefficients:
                _parse_complex(value)
        return self

    def parsed_coefficients(self) -> np.ndarray:
        if self.coefficients is not None:
            return np.array([_parse_complex(v) for v in self.coefficients], dtype=complex)
        return _read_coefficients_csv(self.coefficients_csv)


def _parse_complex(value: float | str) -> complex:
    try:
        return complex(str(value).replace(" ", ""))
    except ValueError as exc:
        raise ValueError(f"Invalid coefficient {value!r}") from exc


def _read_coefficients_csv(path: Path) -> np.ndarray:
    """re, im 列（im は省略可）の CSV から係数を読み込みます。"""
    try:
        with Path(path).open(encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        raise ConfigurationError(f"Cannot read coefficients CSV {path}: {exc}") from exc
    if not rows or "re" not in rows[0]:
        raise ConfigurationError(f"Coefficients CSV {path} needs a header with column 're'")
    try:
        return np.array([complex(float(row["re"]), float(row.get("im") or 0.0)) for row in rows])
    except ValueError as exc:
        raise ConfigurationError(f"Invalid number in coefficients CSV {path}: {exc}") from exc


# =========================
# 出力ヘルパー
# =========================
_STEP = 0


def _event(kind: str, detail: str) -> None:
    """セッションログにイベントを追記します（ステップ番号は実行ごとに連番）。"""
    global _STEP
    _STEP += 1
    log_session_event(step=_STEP, kind=kind, detail=detail)


def _jsonable(value: Any) -> Any:
    """JSON に書けない値（numpy 型、非有限値、Path、複素数）を変換します。"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else format_float(x)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    return value


def _write_json(path: Path, payload: Any) -> Path:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _event("artifact", str(path))
    return path


def _write_csv(path: Path, header: list[str], rows: list[list[Any]]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    _event("artifact", str(path))
    return path


def _fail(command: str | None, exc: BaseException) -> int:
    """機械可読なエラー JSON を stdout に出し、終了コード 2 を返します。"""
    message = str(exc).replace("\n", "; ")
    print(json.dumps({"error": type(exc).__name__, "message": message, "command": command}))
    return 2


# =========================
# サブコマンド
# =========================
def _run_barrier(cfg: BarrierConfig, out: Path) -> bool:
    spec = BarrierSpec(cfg.r, cfg.R, cfg.k, cfg.p, cfg.n)
    t = np.linspace(cfg.r, cfg.R, cfg.samples)
    u0 = barrier_u0(spec, t)
    du0 = barrier_derivative(spec, t)
    _write_csv(out / "barrier.csv", ["t", "u0", "du0_dt"], [[a, b, c] for a, b, c in zip(t, u0, du0)])
    _write_json(
        out / "barrier.json",
        {
            "spec": spec.to_dict(),
            "exponent": spec.exponent,
            "log_branch": spec.log_branch,
            "xi_R": xi(spec.r, spec.R, spec.k, spec.p),
        },
    )
    print(f"[barrier] {cfg.samples} rows -> {out / 'barrier.csv'}", file=sys.stderr)
    return True


def _run_solve(cfg: SolveConfig, out: Path) -> bool:
    annulus = cfg.annulus()
    spec = cfg.barrier()
    data = parse_boundary_selector(cfg.boundary, spec, annulus.truncation)
    problem = PLaplaceProblem.on_annulus(
        annulus,
        cfg.p,
        data,
        cfg.cells,
        epsilon_schedule=tuple(cfg.epsilon_schedule),
        tolerance=cfg.tolerance,
        max_iterations=cfg.max_iterations,
    )
    metadata = {
        "p": cfg.p,
        "boundary": cfg.boundary,
        "barrier": spec.to_dict(),
        "cells": cfg.cells,
        "epsilon_schedule": list(cfg.epsilon_schedule),
        "tolerance": cfg.tolerance,
        "max_iterations": cfg.max_iterations,
    }
    _event("stage", f"solve n={cfg.n} k={cfg.k} p={cfg.p} cells={cfg.cells} boundary={cfg.boundary}")

    try:
        field, report = solve_dirichlet(problem, verbose=not cfg.quiet)
        converged = report.converged
    except SolverConvergenceError as exc:
        print(f"[solve] {exc}", file=sys.stderr)
        field, report = exc.field, exc.report
        converged = False

    field = GridField(field.grid, field.values, field.mask, field.annulus, metadata)
    write_field(out / cfg.name, field)
    _event("artifact", str(out / f"{cfg.name}.bin"))
    _write_json(out / f"{cfg.name}-report.json", report.to_dict())
    print(
        f"[solve] energy={report.energy:.12g} iterations={report.iterations} "
        f"weak_residual={report.weak_residual:.3e} converged={converged} ({report.stop_reason})",
        file=sys.stderr,
    )
    return converged


def _weight_samples(
    v: GridField, spec: BarrierSpec, annulus: KAnnulus, upper: float, samples: int, density: int
) -> tuple[WeightProfile | None, list[float]]:
    """(r, upper) の内部の等間隔点で H(t) を評価します（勾配が取れない半径は飛ばします）。"""
    ts: list[float] = []
    Hs: list[float] = []
    skipped: list[float] = []
    for t in np.linspace(spec.r, upper, samples + 2)[1:-1]:
        try:
            Hs.append(H_of_t(v, spec, annulus, spec.p, float(t), density))
            ts.append(float(t))
        except DomainError:
            skipped.append(float(t))
    if len(ts) < 2:
        return None, skipped
    return WeightProfile(np.array(ts), np.array(Hs), annulus.truncation), skipped


def _conditions(cfg: VerifyConfig, field, annulus: KAnnulus, spec: BarrierSpec, Mr: float, MR: float) -> dict:
    """正規化した場について H(t) を評価し、増大条件（H^{-1} の発散と S^{-2} 積分の減衰）の診断をまとめます。"""
    v = normalize(field, Mr, MR)
    profile, skipped = _weight_samples(v, spec, annulus, spec.R, cfg.condition_samples, cfg.density)
    if profile is None:
        return {"note": "fewer than two radii with an available gradient", "skipped": skipped}

    star4 = condition_star4(profile)
    extremal = extremal_eta(profile)
    integrals = [discrepancy_integral(v, spec, S) for S in profile.t]
    star4b = condition_star4b(profile.t, integrals, profile)
    return {
        "t": profile.t,
        "H": profile.H,
        "skipped": skipped,
        "truncation": annulus.truncation,
        "h_divergence": star4.to_dict(),
        "growth_decay": star4b.to_dict(),
        "capacity": extremal.capacity,
        "extremal_energy": extremal.energy,
        "extremal_eta": extremal.eta,
        "degenerate": extremal.degenerate,
    }


def _comparison_inputs(
    cfg: VerifyConfig, field: GridField, annulus: KAnnulus, spec: BarrierSpec
) -> tuple[Callable | None, GridField | None]:
    """
    sidecar のメタデータから、場を解いたときの境界データと障壁データの離散解を復元します。

    メタデータがない場（手で作った場など）では (None, None) を返し、補間と閉形式の u0 で評価します。
    """
    metadata = field.metadata
    if "boundary" not in metadata or "barrier" not in metadata:
        return None, None
    solved = BarrierSpec(**metadata["barrier"])
    data = parse_boundary_selector(metadata["boundary"], solved, annulus.truncation)
    on_edges = math.isclose(spec.r, annulus.alpha) and math.isclose(spec.R, annulus.beta)
    if not (cfg.discrete_reference and on_edges):
        return data, None
    print("[verify] solving the barrier data on the same grid for the comparison", file=sys.stderr)
    reference = solve_barrier_reference(
        field,
        spec,
        epsilon_schedule=tuple(metadata.get("epsilon_schedule", EPSILON_SCHEDULE)),
        tolerance=float(metadata.get("tolerance", SOLVER_TOLERANCE)),
        max_iterations=int(metadata.get("max_iterations", SOLVER_MAX_ITERATIONS)),
    )
    return data, reference


def _run_verify(cfg: VerifyConfig, out: Path) -> bool:
    field = read_field(cfg.field)
    annulus = field.annulus
    if annulus is None:
        raise ConfigurationError(f"Field {cfg.field} carries no annulus in its sidecar")
    p = cfg.p if cfg.p is not None else field.metadata.get("p")
    if p is None:
        raise ConfigurationError(f"Field {cfg.field} has no exponent p; pass --p")
    r = cfg.r if cfg.r is not None else annulus.alpha
    R = cfg.R if cfg.R is not None else annulus.beta
    t_list = cfg.t_list if cfg.t_list is not None else np.linspace(r, R, 9)[1:-1].tolist()
    spec = BarrierSpec(float(r), float(R), annulus.k, float(p), annulus.n)
    data, reference = _comparison_inputs(cfg, field, annulus, spec)

    report = three_spheres_check(
        field,
        annulus,
        r,
        R,
        t_list,
        spec,
        cfg.tolerance,
        density=cfg.density,
        threads=cfg.threads,
        boundary_data=data,
        reference=reference,
    )
    _write_json(out / "bound_report.json", report.to_dict())
    _write_csv(
        out / "bound.csv",
        ["t", "M", "bound", "margin", "normalized_margin", "analytic_margin", "unresolved"],
        [
            [row.t, row.M, row.bound, row.margin, row.normalized_margin, row.analytic_margin, int(row.unresolved)]
            for row in report.rows
        ],
    )
    worst = min(row.normalized_margin for row in report.rows)
    print(
        f"[verify] M(r)={report.Mr:.6g} M(R)={report.MR:.6g} ({report.limits}, {report.comparison}) "
        f"worst margin={worst:.3e}",
        file=sys.stderr,
    )
    if report.note:
        print(f"[verify] {report.note}", file=sys.stderr)

    if cfg.conditions:
        conditions = _conditions(cfg, field, annulus, spec, report.Mr, report.MR)
        _write_json(out / "conditions.json", conditions)
        if "h_divergence" in conditions:
            print(
                f"[verify] H divergence: {conditions['h_divergence']['verdict']}, "
                f"growth decay: {conditions['growth_decay']['verdict']}",
                file=sys.stderr,
            )
    return report.verdict


def _run_inequality_scan(cfg: InequalityScanConfig, out: Path) -> bool:
    rows = scan_inequalities(cfg.samples, cfg.p_min, cfg.p_max, cfg.seed, progress=not cfg.quiet)
    envelope = None
    if cfg.envelope_samples > 0:
        envelope = scan_envelope(cfg.envelope_samples, cfg.p_min, cfg.p_max, cfg.seed, progress=not cfg.quiet)
        rows = rows + envelope.rows
        _write_json(
            out / "envelope.json",
            {
                "samples": cfg.envelope_samples,
                "ratio_min": envelope.ratio_min,
                "ratio_max": envelope.ratio_max,
                "max_quadrature_error": envelope.max_quadrature_error,
            },
        )
    _write_csv(
        out / "inequality_scan.csv",
        ["inequality", "samples", "violations", "worst_margin", "worst_a", "worst_b", "worst_p"],
        [[r.inequality, r.samples, r.violations, r.worst_margin, r.worst_a, r.worst_b, r.worst_p] for r in rows],
    )
    violations = sum(r.violations for r in rows)
    print(f"[scan] {len(rows)} inequalities, {violations} violations", file=sys.stderr)
    return violations == 0


def _run_hadamard(cfg: HadamardConfig, out: Path) -> bool:
    coefficients = cfg.parsed_coefficients()
    result = hadamard_classical_check(coefficients, cfg.radii, min_power=cfg.min_power, density=cfg.density)
    payload = result.to_dict()
    payload["coefficients"] = [[c.real, c.imag] for c in coefficients.tolist()]
    payload["min_power"] = cfg.min_power
    _write_json(out / "hadamard.json", payload)
    print(f"[hadamard] log gap={result.log_gap:.6g} holds={result.holds}", file=sys.stderr)
    return result.holds


def _run_study(cfg: StudyConfig, out: Path) -> bool:
    annulus = cfg.annulus()
    spec = cfg.barrier()
    rows: list[list[Any]] = []
    h_values: list[float] = []
    errors: list[float] = []
    all_converged = True

    for cells in tqdm(cfg.resolved_cells(), desc="[study] grids", disable=cfg.quiet, file=sys.stderr):
        problem = PLaplaceProblem.on_annulus(
            annulus,
            cfg.p,
            barrier_boundary(spec),
            cells,
            epsilon_schedule=tuple(cfg.epsilon_schedule),
            tolerance=cfg.tolerance,
            max_iterations=cfg.max_iterations,
        )
        try:
            field, report = solve_dirichlet(problem)
            converged = report.converged
        except SolverConvergenceError as exc:
            field, report = exc.field, exc.report
            converged = False
        all_converged = all_converged and converged
        interior = field.mask == INTERIOR
        exact = barrier_values(spec, node_points(field.grid)[interior])
        error = float(np.max(np.abs(field.values[interior] - exact)))
        h = max(field.grid.spacing)
        h_values.append(h)
        errors.append(error)
        rows.append([cells, h, error, report.iterations, report.weak_residual, int(converged), report.stop_reason])
        _event("stage", f"cells={cells} h={h!r} error={error!r} converged={converged}")

    orders = [math.nan] + observed_orders(h_values, errors)
    _write_csv(
        out / "study.csv",
        ["cells", "h", "max_error", "observed_order", "iterations", "weak_residual", "converged", "stop_reason"],
        [row[:3] + [order] + row[3:] for row, order in zip(rows, orders)],
    )
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    print(
        f"[study] errors {' > '.join(f'{e:.3e}' for e in errors)} decreasing={decreasing}",
        file=sys.stderr,
    )
    return decreasing and all_converged


def _run_growth(cfg: GrowthConfig, out: Path) -> bool:
    """
    外半径 S を増やしながら D_{r,S} で解き、S ごとに H(t)（t in (r, S)）と Q(S) を求めて
    増大条件の診断に渡します。r = alpha、R = beta は固定です。
    """
    spec = cfg.barrier()
    t_list = cfg.t_list if cfg.t_list is not None else np.linspace(cfg.alpha, cfg.beta, 7)[1:-1].tolist()
    rows: list[list[Any]] = []
    S_values: list[float] = []
    integrals: list[float] = []
    largest: WeightProfile | None = None
    all_converged = True

    for S in tqdm(cfg.outer_radii, desc="[growth] outer radii", disable=cfg.quiet, file=sys.stderr):
        annulus = cfg.family_annulus(S)
        data = parse_boundary_selector(cfg.boundary, spec, annulus.truncation)
        cells = cfg.cells_for(S)
        problem = PLaplaceProblem.on_annulus(
            annulus,
            cfg.p,
            data,
            cells,
            epsilon_schedule=tuple(cfg.epsilon_schedule),
            tolerance=cfg.tolerance,
            max_iterations=cfg.max_iterations,
        )
        try:
            field, report = solve_dirichlet(problem)
            converged = report.converged
        except SolverConvergenceError as exc:
            field, report = exc.field, exc.report
            converged = False
        all_converged = all_converged and converged

        bound = three_spheres_check(
            field,
            annulus,
            cfg.alpha,
            cfg.beta,
            t_list,
            spec,
            density=cfg.density,
            threads=cfg.threads,
            boundary_data=data,
        )
        v = normalize(field, bound.Mr, bound.MR)
        profile, _ = _weight_samples(v, spec, annulus, S, cfg.condition_samples, cfg.density)
        inverse = condition_star4(profile).partial_integrals[-1] if profile is not None else math.nan
        integral = discrepancy_integral(v, spec, S)
        worst = min(row.normalized_margin for row in bound.rows)
        rows.append(
            [S, cells, max(field.grid.spacing), int(converged), bound.Mr, bound.MR, worst, inverse, integral, integral / S**2]
        )
        S_values.append(float(S))
        integrals.append(integral)
        if profile is not None:
            largest = profile
        _event("stage", f"S={S!r} cells={cells} integral={integral!r} converged={converged}")

    _write_csv(
        out / "growth.csv",
        ["S", "cells", "h", "converged", "M_r", "M_R", "worst_margin", "inverse_integral", "discrepancy", "Q"],
        rows,
    )
    payload: dict[str, Any] = {
        "r": cfg.alpha,
        "R": cfg.beta,
        "boundary": cfg.boundary,
        "t_list": t_list,
        "truncation": cfg.family_annulus(cfg.outer_radii[-1]).truncation,
    }
    if largest is None:
        payload["note"] = "fewer than two radii with an available gradient"
    else:
        star4 = condition_star4(largest)
        star4b = condition_star4b(S_values, integrals, largest)
        payload.update(
            {"t": largest.t, "H": largest.H, "h_divergence": star4.to_dict(), "growth_decay": star4b.to_dict()}
        )
        print(
            f"[growth] H divergence: {star4.verdict}, growth decay: {star4b.verdict}",
            file=sys.stderr,
        )
    _write_json(out / "growth.json", payload)
    return all_converged


COMMANDS: dict[str, tuple[type[RunConfig], Callable[[Any, Path], bool]]] = {
    "barrier": (BarrierConfig, _run_barrier),
    "solve": (SolveConfig, _run_solve),
    "verify": (VerifyConfig, _run_verify),
    "inequality-scan": (InequalityScanConfig, _run_inequality_scan),
    "hadamard": (HadamardConfig, _run_hadamard),
    "study": (StudyConfig, _run_study),
    "growth": (GrowthConfig, _run_growth),
}


def run(command: str, config: dict | RunConfig) -> int:
    """
    サブコマンドを実行します。

    Args:
        command: サブコマンド名
        config: 設定の辞書、または検証済みの RunConfig

    Returns:
        終了コード（0: すべての判定が成立、1: 判定の失敗、2: 設定の不正）
    """
    global _STEP
    if command not in COMMANDS:
        return _fail(command, ConfigurationError(f"Unknown command {command!r}"))
    model, handler = COMMANDS[command]
    try:
        cfg = config if isinstance(config, model) else model.model_validate(config)
    except ValidationError as exc:
        return _fail(command, exc)

    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    _STEP = 0
    init_session(command=command, seed=cfg.seed, output_dir=out)
    _event("config", cfg.model_dump_json())

    try:
        ok = handler(cfg, out)
    except ToolkitError as exc:
        _event("error", f"{type(exc).__name__}: {exc}")
        return _fail(command, exc)

    _event("verdict", "pass" if ok else "fail")
    return 0 if ok else 1


# =========================
# 引数解析
# =========================
def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with the base configuration (flags override it)")
    common.add_argument("--output-dir", help="Output directory (default: THREE_SPHERES_OUTPUT_DIR or ./results)")
    common.add_argument("--seed", type=int, help=f"Random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, help="Thread cap; 1 is bit-reproducible")
    common.add_argument("--quiet", action="store_true", help="Disable progress bars")
    return common


def _geometry_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, help="Ambient dimension (2..4)")
    parser.add_argument("--k", type=int, help="Number of radial coordinates (1..n)")
    parser.add_argument("--p", type=float, help="Exponent p > 1")


def _annulus_arguments(parser: argparse.ArgumentParser) -> None:
    _geometry_arguments(parser)
    parser.add_argument("--alpha", type=float, help="Inner radius")
    parser.add_argument("--beta", type=float, help="Outer radius")
    parser.add_argument("--slab-halfwidth", type=float, help="Half width of the truncation slab (default 4*beta)")
    parser.add_argument("--epsilon-schedule", type=float, nargs="+", help="Decreasing regularization schedule")
    parser.add_argument("--tolerance", type=float, help="Relative gradient tolerance")
    parser.add_argument("--max-iterations", type=int, help="Iteration cap over all stages")


def build_parser() -> argparse.ArgumentParser:
    """サブコマンドごとの引数パーサーを組み立てます（未指定のフラグは名前空間に現れません）。"""
    common = _common_parser()
    parser = argparse.ArgumentParser(description="Three-spheres toolkit for p-harmonic functions")
    sub = parser.add_subparsers(dest="command")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS)

    p = add("barrier", "Tabulate the radial barrier u0(t)")
    _geometry_arguments(p)
    p.add_argument("--r", type=float, help="Inner radius")
    p.add_argument("--R", type=float, help="Outer radius")
    p.add_argument("--samples", type=int, help="Number of rows")

    p = add("solve", "Solve the p-Laplace Dirichlet problem on a k-annulus")
    _annulus_arguments(p)
    p.add_argument("--cells", type=int, help="Cells per axis")
    p.add_argument("--boundary", help="barrier | constant:c | perturbed-barrier:amplitude,mode")
    p.add_argument("--name", help="Base name of the field files")

    p = add("verify", "Check the three-spheres bound on a solved field")
    p.add_argument("--field", help="Field path (.bin/.json pair, extension optional)")
    p.add_argument("--p", type=float, help="Exponent (default: taken from the field)")
    p.add_argument("--r", type=float, help="Inner sphere radius (default alpha)")
    p.add_argument("--R", type=float, help="Outer sphere radius (default beta)")
    p.add_argument("--t-list", type=float, nargs="+", help="Intermediate radii")
    p.add_argument("--density", type=int, help="Sphere sampling density")
    p.add_argument("--tolerance", type=float, help="Normalized margin tolerance")
    p.add_argument(
        "--analytic-comparison",
        dest="discrete_reference",
        action="store_false",
        help="Compare with the closed-form barrier instead of the barrier solved on the same grid",
    )
    p.add_argument("--no-conditions", dest="conditions", action="store_false", help="Skip conditions.json")
    p.add_argument("--condition-samples", type=int, help="Radii used for the weight profile")

    p = add("inequality-scan", "Random scan of the one-dimensional inequalities")
    p.add_argument("--samples", type=int, help="Samples for the inequality scan")
    p.add_argument("--p-min", type=float, help="Lower end of the p range")
    p.add_argument("--p-max", type=float, help="Upper end of the p range")
    p.add_argument("--envelope-samples", type=int, help="Samples for the I(p) envelope scan (0 skips it)")

    p = add("hadamard", "Classical three-circles check for a polynomial or series")
    p.add_argument("--coefficients", nargs="+", help="Coefficients c_j, e.g. 1 0.5 2+1j")
    p.add_argument("--coefficients-csv", help="CSV with columns re, im")
    p.add_argument("--min-power", type=int, help="Power of the first coefficient")
    p.add_argument("--radii", type=float, nargs=3, help="r1 < r2 < r3")
    p.add_argument("--density", type=int, help="Angular samples per circle")

    p = add("study", "Grid-refinement convergence table against the radial barrier")
    _annulus_arguments(p)
    p.add_argument("--cells", type=int, nargs="+", help="Increasing cells per axis")

    p = add("growth", "Growth conditions on D_{r,S} for increasing outer radii S")
    _annulus_arguments(p)
    p.add_argument("--outer-radii", type=float, nargs="+", help="Increasing outer radii S > beta")
    p.add_argument("--cells", type=int, help="Cells per axis at the smallest S (same spacing for larger S)")
    p.add_argument("--boundary", help="barrier | constant:c | perturbed-barrier:amplitude,mode")
    p.add_argument("--t-list", type=float, nargs="+", help="Radii in (alpha, beta) for the bound")
    p.add_argument("--density", type=int, help="Sphere sampling density")
    p.add_argument("--condition-samples", type=int, help="Radii in (alpha, S) for the weight profile")

    return parser


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must contain a JSON object")
    return data


def main(argv: list[str] | None = None) -> int:
    """
    メイン実行関数。

    コマンドライン引数を解析し、サブコマンドを実行します。

    Args:
        argv: コマンドライン引数のリスト（テスト用）

    Returns:
        終了コード（0: 成功、1: 判定の失敗、2: 設定の不正）
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help(sys.stderr)
        return 2

    overrides = {k: v for k, v in vars(args).items() if k != "command"}
    config_path = overrides.pop("config", None)
    try:
        data = _load_config(config_path) if config_path else {}
    except ConfigurationError as exc:
        return _fail(args.command, exc)
    data.update(overrides)
    print(f"[config] {args.command} {sorted(data)}", file=sys.stderr)
    return run(args.command, data)


if __name__ == "__main__":
    raise SystemExit(main())
