"""
p-ラプラス ソルバーモジュール

切り詰めた k-環状領域（または直方体）上の Dirichlet 問題を、
正則化した離散 p-Dirichlet エネルギーの最小化で解きます。

- eps の継続法: epsilon_schedule の各段を前段の解から開始します。
- 探索方向: 内部ノードのヘッセ行列による減衰 Newton 方向。
  降下方向にならない場合は対角前処理した勾配方向に切り替えます。
- 直線探索: Armijo 条件によるバックトラック（受理された反復のエネルギーは単調非増加）。
- 停止判定: 内部ノードのエネルギー勾配の最大ノルムが tolerance * (初期ノルム) 以下。
  直線探索の失敗やエネルギーの停滞（相対変化 STAGNATION 以下）で止まった段は、相対勾配が sqrt(tolerance)
  以下なら次の段へ進みます。最終段の勾配が tolerance を満たさなければ converged=False です。

動径データの閉形式の解（solve_radial_ode）と弱形式の残差推定（weak_residual）もここで提供します。
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import spsolve

from .barrier import BarrierSpec, barrier_values, u0_continued, u0_derivative_continued
from .config import (
    ARMIJO,
    CONTRACTION,
    EPSILON_SCHEDULE,
    MAX_BACKTRACKS,
    P_MAX,
    SLAB_FACTOR,
    SOLVER_MAX_ITERATIONS,
    SOLVER_TOLERANCE,
    STAGNATION,
    WEAK_RESIDUAL_TRIALS,
)
from .errors import ConfigurationError, DegeneracyError, DomainError, SolverConvergenceError
from .geometry import (
    BOUNDARY,
    INTERIOR,
    OUTSIDE,
    GridField,
    GridSpec,
    KAnnulus,
    build_grid,
    classify,
    dk_array,
    node_points,
)
from .stencil import cell_flux, cell_gradients, energy, energy_gradient_array, hessian
from .utils import make_rng

BoundaryData = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class PLaplaceProblem:
    """
    離散 Dirichlet 問題の指定。

    mask を省略すると annulus からノードを分類します。
    boundary_data は形 (m, n) の点を受け取り長さ m の値を返す関数です。
    """

    annulus: KAnnulus | None
    p: float
    boundary_data: BoundaryData
    grid: GridSpec
    mask: np.ndarray | None = None
    epsilon_schedule: tuple[float, ...] = EPSILON_SCHEDULE
    tolerance: float = SOLVER_TOLERANCE
    max_iterations: int = SOLVER_MAX_ITERATIONS
    initial_guess: np.ndarray | None = None

    def __post_init__(self) -> None:
        p = float(self.p)
        if not (math.isfinite(p) and p > 1.0):
            raise DomainError(f"Exponent p must be > 1, got {self.p}")
        if p > P_MAX:
            raise ConfigurationError(f"Exponent p={p} exceeds p_max={P_MAX}")
        schedule = tuple(float(e) for e in self.epsilon_schedule)
        if not schedule or any(e <= 0 for e in schedule):
            raise ConfigurationError(f"epsilon_schedule must be non-empty and positive, got {schedule}")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise ConfigurationError(f"epsilon_schedule must be strictly decreasing, got {schedule}")
        if not self.tolerance > 0:
            raise ConfigurationError(f"tolerance must be > 0, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        object.__setattr__(self, "epsilon_schedule", schedule)

        if self.mask is None:
            if self.annulus is None:
                raise ConfigurationError("Either an annulus or an explicit mask is required")
            mask = classify(self.annulus.contains(node_points(self.grid)))
        else:
            mask = np.asarray(self.mask, dtype=np.int8)
            if mask.shape != self.grid.shape:
                raise ConfigurationError(f"Mask shape {mask.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def on_annulus(
        cls, annulus: KAnnulus, p: float, boundary_data: BoundaryData, cells_per_axis: int, **kwargs
    ) -> "PLaplaceProblem":
        """k-環状領域を覆う格子上の問題を作ります。"""
        grid, mask = build_grid(annulus, cells_per_axis)
        return cls(annulus, p, boundary_data, grid, mask=mask, **kwargs)


@dataclass
class StageRecord:
    """eps 継続法の1段の記録。"""

    epsilon: float
    iterations: int
    energy: float
    gradient_norm: float
    stopped_by: str
    newton_steps: int = 0
    gradient_steps: int = 0
    energy_history: list[float] = field(default_factory=list)


@dataclass
class SolveReport:
    """
    ソルバーの結果報告。

    gradient_norm は内部ノードのエネルギー勾配の最大ノルム、
    relative_gradient_norm はそれを初期ノルムで割ったものです。
    stop_reason は最終段の停止理由（gradient, line_search, stagnation, max_iterations）です。
    weak_residual は試験関数が置けない粗い格子では NaN です。
    """

    energy: float
    iterations: int
    gradient_norm: float
    weak_residual: float
    converged: bool = True
    epsilon: float = 0.0
    initial_gradient_norm: float = 0.0
    relative_gradient_norm: float = 0.0
    stop_reason: str = "gradient"
    stages: list[StageRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def discrete_energy(field: GridField, p: float, eps: float) -> float:
    """
    離散エネルギー sum_cells (|grad u|_cell^2 + eps^2)^{p/2} * h^n を返します。

    セル勾配は片側差分の平均、和は有効セル（頂点がすべて OUTSIDE でないセル）にわたります。
    """
    return energy(field.filled(0.0), field.mask, field.grid.spacing, float(p), float(eps))


def energy_gradient(field: GridField, p: float, eps: float) -> np.ndarray:
    """
    全ノードに対するエネルギー勾配 dE/du を返します（OUTSIDE ノードは NaN）。
    """
    grad = energy_gradient_array(field.filled(0.0), field.mask, field.grid.spacing, float(p), float(eps))
    grad[field.mask == OUTSIDE] = np.nan
    return grad


def _log(verbose: bool, message: str) -> None:
    if verbose:
        print(message, file=sys.stderr)


def solve_dirichlet(problem: PLaplaceProblem, *, verbose: bool = False) -> tuple[GridField, SolveReport]:
    """
    Dirichlet 問題を解きます。

    Args:
        problem: 問題の指定
        verbose: 段ごとの進捗を stderr に出すかどうか

    Returns:
        (解の GridField, SolveReport)

    直線探索の失敗や停滞で最終段が tolerance を満たさずに止まった場合は例外を送らず、
    converged=False と stop_reason を報告に記録して返します。

    Raises:
        SolverConvergenceError: max_iterations 以内に収束しない場合、または相対勾配が
            sqrt(tolerance) を超えたまま直線探索が失敗した場合（最良の反復値と報告を保持）
    """
    grid = problem.grid
    mask = problem.mask
    spacing = grid.spacing
    p = float(problem.p)
    interior = mask == INTERIOR
    boundary = mask == BOUNDARY

    pts = node_points(grid)
    u = np.zeros(grid.shape, dtype=float)
    bvals = np.asarray(problem.boundary_data(pts[boundary]), dtype=float)
    if bvals.shape != (int(boundary.sum()),) or not np.all(np.isfinite(bvals)):
        raise ConfigurationError("Boundary data must return one finite value per boundary node")
    u[boundary] = bvals
    if problem.initial_guess is not None:
        u[interior] = np.asarray(problem.initial_guess, dtype=float)[interior]
    else:
        u[interior] = float(np.mean(bvals)) if bvals.size else 0.0

    free = np.flatnonzero(interior.ravel())
    stages: list[StageRecord] = []
    total = 0
    reference = None
    grad_norm = 0.0
    eps = problem.epsilon_schedule[0]
    tol = float(problem.tolerance)

    def make_report(converged: bool, residual: float) -> SolveReport:
        ref = reference or 0.0
        return SolveReport(
            stop_reason=stages[-1].stopped_by if stages else "gradient",
            energy=energy(u, mask, spacing, p, eps),
            iterations=total,
            gradient_norm=grad_norm,
            weak_residual=residual,
            converged=converged,
            epsilon=eps,
            initial_gradient_norm=ref,
            relative_gradient_norm=grad_norm / ref if ref > 0 else 0.0,
            stages=stages,
        )

    for eps in problem.epsilon_schedule:
        current = energy(u, mask, spacing, p, eps)
        grad = energy_gradient_array(u, mask, spacing, p, eps)[interior]
        grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if reference is None:
            reference = grad_norm
        threshold = tol * reference
        record = StageRecord(eps, 0, current, grad_norm, "gradient", energy_history=[current])
        _log(verbose, f"[solve] stage eps={eps:g} start energy={current:.12g} |grad|={grad_norm:.3e}")

        while grad_norm > threshold:
            if total >= problem.max_iterations:
                record.stopped_by = "max_iterations"
                stages.append(record)
                field_out = GridField(grid, u, mask, problem.annulus)
                report = make_report(False, math.nan)
                raise SolverConvergenceError(
                    f"Solver did not converge within max_iterations={problem.max_iterations} "
                    f"(eps={eps:g}, relative gradient {grad_norm / reference:.3e} > {tol:g})",
                    field=field_out,
                    report=report,
                )

            H = hessian(u, mask, spacing, p, eps)[free][:, free].tocsc()
            directions = []
            newton = spsolve(H, -grad)
            if np.all(np.isfinite(newton)) and float(grad @ newton) < 0:
                directions.append(("newton", newton))
            diag = H.diagonal()
            scaled = -grad / np.where(diag > 0, diag, 1.0)
            directions.append(("gradient", scaled))

            accepted = None
            for kind, direction in directions:
                slope = float(grad @ direction)
                step = 1.0
                for _ in range(MAX_BACKTRACKS):
                    trial = u.copy()
                    trial.ravel()[free] += step * direction
                    trial_energy = energy(trial, mask, spacing, p, eps)
                    if trial_energy <= current + ARMIJO * step * slope:
                        accepted = (kind, trial, trial_energy)
                        break
                    step *= CONTRACTION
                if accepted is not None:
                    break

            relative = grad_norm / reference
            if accepted is None:
                if relative <= math.sqrt(tol):
                    record.stopped_by = "line_search"
                    break
                record.stopped_by = "line_search"
                stages.append(record)
                raise SolverConvergenceError(
                    f"Line search failed at eps={eps:g} with relative gradient {relative:.3e}",
                    field=GridField(grid, u, mask, problem.annulus),
                    report=make_report(False, math.nan),
                )

            kind, u, new_energy = accepted
            total += 1
            record.iterations += 1
            if kind == "newton":
                record.newton_steps += 1
            else:
                record.gradient_steps += 1
            change = abs(current - new_energy)
            current = new_energy
            record.energy_history.append(current)
            grad = energy_gradient_array(u, mask, spacing, p, eps)[interior]
            grad_norm = float(np.max(np.abs(grad)))

            if (
                grad_norm > threshold
                and change <= STAGNATION * abs(current)
                and grad_norm / reference <= math.sqrt(tol)
            ):
                record.stopped_by = "stagnation"
                break

        record.energy = current
        record.gradient_norm = grad_norm
        stages.append(record)
        _log(
            verbose,
            f"[solve] stage eps={eps:g} done iterations={record.iterations} "
            f"energy={current:.12g} |grad|={grad_norm:.3e} ({record.stopped_by})",
        )

    solution = GridField(grid, u, mask, problem.annulus)
    converged = grad_norm <= tol * (reference or 0.0)
    if not converged:
        _log(
            verbose,
            f"[solve] stopped by {stages[-1].stopped_by} at relative gradient "
            f"{grad_norm / reference:.3e} > {tol:g}",
        )
    try:
        residual = weak_residual(solution, p, WEAK_RESIDUAL_TRIALS, 0, eps=eps)
    except DegeneracyError as exc:
        _log(verbose, f"[solve] {exc}")
        residual = math.nan
    return solution, make_report(converged, residual)


@dataclass(frozen=True)
class RadialProfile:
    """
    d_k の関数として与えられる動径解 f(t) = value_r + (value_R - value_r) xi(r, t) / xi(r, R)。
    """

    r: float
    R: float
    k: int
    p: float
    value_r: float
    value_R: float

    @property
    def barrier(self) -> BarrierSpec:
        return BarrierSpec(self.r, self.R, self.k, self.p, max(self.k, 2))

    def __call__(self, t, *, extend: bool = False):
        """半径 t での値。extend=True なら [r, R] の外も同じ式で延長します。"""
        t_arr = np.asarray(t, dtype=float)
        if not extend and (np.any(t_arr < self.r) or np.any(t_arr > self.R)):
            raise DomainError(f"Radius outside [{self.r}, {self.R}]: got {t}")
        value = self.value_r + (self.value_R - self.value_r) * u0_continued(self.barrier, t_arr)
        value = np.where(t_arr == self.r, self.value_r, np.where(t_arr == self.R, self.value_R, value))
        return float(value) if np.ndim(t) == 0 else value

    def derivative(self, t):
        value = (self.value_R - self.value_r) * u0_derivative_continued(self.barrier, t)
        return float(value) if np.ndim(t) == 0 else value

    def at_points(self, points) -> np.ndarray:
        """任意点での f(d_k(x))。穴の奥 d_k < r/2 は r/2 で打ち切ります。"""
        d = dk_array(np.asarray(points, dtype=float), self.k)
        t = np.maximum(d, 0.5 * self.r)
        return self.value_r + (self.value_R - self.value_r) * u0_continued(self.barrier, t)


def solve_radial_ode(
    r: float, R: float, k: int, p: float, value_r: float, value_R: float
) -> RadialProfile:
    """
    動径 Dirichlet データに対する閉形式の解を返します。

    Raises:
        DomainError: r <= 0、R <= r、p <= 1 の場合
    """
    if not (float(r) > 0 and float(R) > float(r)):
        raise DomainError(f"Radii must satisfy 0 < r < R, got r={r}, R={R}")
    BarrierSpec(float(r), float(R), int(k), float(p), max(int(k), 2))
    return RadialProfile(float(r), float(R), int(k), float(p), float(value_r), float(value_R))


def barrier_boundary(spec: BarrierSpec) -> BoundaryData:
    """障壁 u0(d_k) を境界値とします（内外は連続延長）。"""

    def data(points: np.ndarray) -> np.ndarray:
        return barrier_values(spec, points)

    return data


def constant_boundary(c: float) -> BoundaryData:
    """定数 c を境界値とします。"""
    c = float(c)

    def data(points: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(points).shape[0], c)

    return data


def radial_boundary(profile: RadialProfile) -> BoundaryData:
    """動径解 f(d_k) を境界値とします。"""
    return profile.at_points


def perturbed_barrier_boundary(
    spec: BarrierSpec, amplitude: float, mode: int, slab_halfwidth: float | None = None
) -> BoundaryData:
    """
    外側の境界値だけを amplitude (1 - cos(mode theta)) / 2 だけ下げた障壁データ。

    外側は d_k >= (r + R)/2 のノードです。theta は k >= 2 では (x_1, x_2) の偏角、
    k = 1 では theta = pi x_2 / L（L はスラブ半幅）とします。
    下げたデータは障壁以下なので、比較原理から解は障壁の下にあります。
    """
    amplitude = float(amplitude)
    if amplitude < 0:
        raise ConfigurationError(f"Perturbation amplitude must be >= 0, got {amplitude}")
    L = float(slab_halfwidth) if slab_halfwidth is not None else SLAB_FACTOR * spec.R
    middle = 0.5 * (spec.r + spec.R)

    def data(points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        values = barrier_values(spec, pts)
        if spec.k >= 2:
            theta = np.arctan2(pts[:, 1], pts[:, 0])
        else:
            theta = math.pi * pts[:, 1] / L
        outer = dk_array(pts, spec.k) >= middle
        values[outer] -= amplitude * (1.0 - np.cos(mode * theta[outer])) / 2.0
        return values

    return data


def parse_boundary_selector(
    selector: str, spec: BarrierSpec, slab_halfwidth: float | None = None
) -> BoundaryData:
    """
    境界データの指定文字列を解釈します。

    "barrier" | "constant:c" | "perturbed-barrier:amplitude,mode"

    Raises:
        ConfigurationError: 解釈できない場合
    """
    text = selector.strip()
    name, _, argument = text.partition(":")
    try:
        if name == "barrier" and not argument:
            return barrier_boundary(spec)
        if name == "constant":
            return constant_boundary(float(argument))
        if name == "perturbed-barrier":
            amplitude, mode = argument.split(",")
            return perturbed_barrier_boundary(spec, float(amplitude), int(mode), slab_halfwidth)
    except ValueError as exc:
        raise ConfigurationError(f"Invalid boundary selector {selector!r}: {exc}") from exc
    raise ConfigurationError(
        f"Unknown boundary selector {selector!r} "
        "(expected 'barrier', 'constant:c' or 'perturbed-barrier:amplitude,mode')"
    )


def solve_barrier_reference(
    field: GridField,
    spec: BarrierSpec,
    *,
    epsilon_schedule: tuple[float, ...] = EPSILON_SCHEDULE,
    tolerance: float = SOLVER_TOLERANCE,
    max_iterations: int = SOLVER_MAX_ITERATIONS,
) -> GridField:
    """
    field と同じ格子・マスクで障壁データの離散解を求めます（三球面評価の比較関数）。

    ソルバーの設定を field を解いたときと揃えれば、障壁データで解いた field とビット単位で一致します。

    Raises:
        SolverConvergenceError: 比較関数が収束しない場合
    """
    problem = PLaplaceProblem(
        field.annulus,
        spec.p,
        barrier_boundary(spec),
        field.grid,
        mask=field.mask,
        epsilon_schedule=tuple(epsilon_schedule),
        tolerance=tolerance,
        max_iterations=max_iterations,
    )
    reference, report = solve_dirichlet(problem)
    if not report.converged:
        raise SolverConvergenceError(
            f"Barrier reference stopped by {report.stop_reason} at relative gradient "
            f"{report.relative_gradient_norm:.3e}",
            field=reference,
            report=report,
        )
    return reference


def _bump(grid: GridSpec, center: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """テンソル積の余弦バンプ prod_j (1 + cos(pi (x_j - c_j)/w_j)) / 2（台は |x_j - c_j| < w_j）。"""
    phi = np.ones(grid.shape)
    for j, axis in enumerate(grid.axes()):
        s = (axis - center[j]) / widths[j]
        factor = np.where(np.abs(s) < 1.0, 0.5 * (1.0 + np.cos(math.pi * s)), 0.0)
        shape = [1] * grid.n
        shape[j] = axis.size
        phi = phi * factor.reshape(shape)
    return phi


def weak_residual(field: GridField, p: float, trials: int, seed: int, *, eps: float = 0.0) -> float:
    """
    弱形式の残差 |sum_cells <|grad v|^{p-2} grad v, grad phi> h^n| / sum_cells |grad phi| h^n を
    無作為な余弦バンプ phi について最大化した値を返します。

    バンプの台は内部ノードだけを含むように棄却法で選びます。

    Args:
        field: 評価する場
        p: 指数
        trials: バンプの数（>= 1）
        seed: 乱数シード
        eps: 流束の正則化（既定 0）

    Returns:
        残差の推定値

    Raises:
        DegeneracyError: 内部ノードだけを台に持つバンプが1つも置けない場合
    """
    if int(trials) < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    grid = field.grid
    spacing = np.asarray(grid.spacing)
    lower = np.asarray(grid.lower, dtype=float)
    upper = np.asarray(grid.upper, dtype=float)
    rng = make_rng(seed)
    volume = grid.cell_volume

    flux, active = cell_flux(field.filled(0.0), field.mask, grid.spacing, float(p), float(eps))
    interior = field.interior
    worst = 0.0
    found = 0
    for _ in range(int(trials) * 1000):
        if found >= int(trials):
            break
        widths = rng.uniform(2.0 * spacing, np.maximum(0.25 * (upper - lower), 2.5 * spacing))
        center = rng.uniform(lower + widths, upper - widths)
        phi = _bump(grid, center, widths)
        support = phi > 0
        if not support.any() or np.any(support & ~interior):
            continue
        found += 1
        grad_phi = cell_gradients(phi, grid.spacing)
        pairing = float(np.sum(flux * grad_phi)) * volume
        scale = float(np.sum(np.sqrt(np.sum(grad_phi ** 2, axis=0))[active])) * volume
        if scale > 0:
            worst = max(worst, abs(pairing) / scale)
    if found == 0:
        raise DegeneracyError(
            f"No cosine bump with interior-only support fits on the grid {grid.shape}; "
            "the weak residual is undefined"
        )
    return worst
