"""
検証モジュール

解いた場から k-球面上の最大値 M(t) を取り出し、三球面評価

    M(t) <= (M(R) - M(r)) u0(t) + M(r)

を検証します。加えて、重み H(t)、増大条件（int H^{-1} dt の発散と S^{-2} 積分の減衰）の傾向診断、
極値関数 eta_hat と容量、Hölder の連鎖、古典的な Hadamard の三円定理を扱います。

M(t) は標本点での多重線形補間の最大値であり、真の上限ではありません。
k < n ではすべての面積分・体積分がスラブで切り詰められます。
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .barrier import BarrierSpec, barrier_gradient, barrier_u0, barrier_values
from .config import (
    BOUND_TOLERANCE,
    BOUNDED_EXPONENT,
    DEFAULT_SPHERE_DENSITY,
    DIVERGING_EXPONENT,
    HADAMARD_DENSITY,
    HADAMARD_SLACK,
    PERSISTENT_SLOPE,
    VANISHING_SLOPE,
)
from .errors import ConfigurationError, DegeneracyError, DomainError
from .geometry import GridField, KAnnulus, dk_array, node_points, sample_ksphere
from .utils import loglog_slope


def _parallel_map(func: Callable, items: Sequence, threads: int) -> list:
    """threads > 1 ならスレッドプールで評価します（結果は入力順）。"""
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _sphere_values(field: GridField, annulus: KAnnulus, t: float, density: int, closed: bool):
    pts, weights = sample_ksphere(annulus, t, density, closed=closed)
    values = field.interpolate(pts)
    # 境界球面は接するセルの一部が OUTSIDE になりうるので、取れる標本だけを使う
    missing = np.all(np.isnan(values)) if closed else np.any(np.isnan(values))
    if missing:
        raise DomainError(
            f"Sphere of radius t={t} leaves the region where the field is defined"
        )
    return pts, weights, values


def max_on_sphere(
    field: GridField, annulus: KAnnulus, t: float, density: int, *, closed: bool = False
) -> float:
    """
    Sigma_k(t) 上の標本点で場を多重線形補間し、その最大値を返します。

    Args:
        field: 格子上の場
        annulus: 標本化に使う k-環状領域（切り詰め幅を含む）
        t: 半径（alpha < t < beta、closed=True なら閉区間）
        density: 球面の標本密度
        closed: 境界球面も許すかどうか

    Raises:
        DomainError: t が領域外、または標本点が場の定義域を外れる場合
    """
    _, _, values = _sphere_values(field, annulus, t, density, closed)
    return float(np.nanmax(values))


def normalize(field: GridField, Mr: float, MR: float) -> GridField:
    """
    v_{r,R} = (v - M(r)) / (M(R) - M(r)) を返します。

    Raises:
        DegeneracyError: M(R) <= M(r) の場合
    """
    if not MR > Mr:
        raise DegeneracyError(
            f"Normalization undefined: M(R)={MR} <= M(r)={Mr} "
            "(the hypothesis M(R) > M(r) is violated)"
        )
    return field.with_values((field.values - Mr) / (MR - Mr))


def _sphere_limit(
    field: GridField,
    annulus: KAnnulus,
    t: float,
    density: int,
    boundary_data: Callable[[np.ndarray], np.ndarray] | None,
) -> float:
    """
    閉じた球面 Sigma_k(t) 上の最大値。

    t が領域の境界 alpha / beta に一致し boundary_data があれば、境界への上極限である
    Dirichlet データの最大値を返します。それ以外は補間値の最大値です。
    """
    on_edge = math.isclose(t, annulus.alpha) or math.isclose(t, annulus.beta)
    if boundary_data is None or not on_edge:
        return max_on_sphere(field, annulus, t, density, closed=True)
    pts, _ = sample_ksphere(annulus, t, density, closed=True)
    values = np.asarray(boundary_data(pts), dtype=float)
    if values.shape != (pts.shape[0],) or not np.all(np.isfinite(values)):
        raise ConfigurationError("Boundary data must return one finite value per sphere sample")
    return float(np.max(values))


@dataclass(frozen=True)
class BoundRow:
    """
    半径 t ごとの判定。

    analytic_margin は閉形式の u0 を比較関数にしたときの正規化マージンです
    （比較関数が u0 のときは normalized_margin と同じ値）。
    """

    t: float
    M: float
    bound: float
    margin: float
    normalized_margin: float
    unresolved: bool = False
    analytic_margin: float = math.nan


@dataclass(frozen=True)
class BoundReport:
    """三球面評価の報告。"""

    rows: list[BoundRow]
    r: float
    R: float
    Mr: float
    MR: float
    truncation: float | None
    tolerance: float
    density: int
    verdict: bool
    note: str = ""
    comparison: str = "analytic"
    limits: str = "interpolated"

    def to_dict(self) -> dict:
        return asdict(self)


def three_spheres_check(
    field: GridField,
    annulus: KAnnulus,
    r: float,
    R: float,
    t_list: Sequence[float],
    barrier_spec: BarrierSpec,
    tolerance: float = BOUND_TOLERANCE,
    *,
    density: int = DEFAULT_SPHERE_DENSITY,
    threads: int = 1,
    boundary_data: Callable[[np.ndarray], np.ndarray] | None = None,
    reference: GridField | None = None,
) -> BoundReport:
    """
    各 t で M(t) <= (M(R) - M(r)) u(t) + M(r) を検証します。

    M(r)、M(R) は閉じた球面 Sigma_k(r)、Sigma_k(R) 上の最大値です。r / R が領域の境界で
    boundary_data を渡した場合は、補間ではなく Dirichlet データの最大値（上極限）を使います。
    比較関数 u は既定では閉形式の u0 です。reference（同じ格子とマスクで障壁データを解いた離散解）を
    渡すと、その球面最大値を同じ方法で正規化した u_h(t) = (M_ref(t) - M_ref(r)) / (M_ref(R) - M_ref(r))
    を使います。離散解どうしを比べるので、障壁データそのものの解ではマージンが丸め誤差の範囲で 0 になります。

    margin = bound - M(t)、判定は margin / (M(R) - M(r)) >= -tolerance です。
    密度を2倍にして M(t) が tolerance を超えて変わる半径は unresolved とします。

    Args:
        field: 検証する場
        annulus: 標本化に使う k-環状領域
        r: 内側の球面の半径
        R: 外側の球面の半径
        t_list: 中間の半径
        barrier_spec: 障壁の指定（半径は r, R と一致）
        tolerance: 正規化マージンの許容誤差
        density: 球面の標本密度
        threads: スレッド数
        boundary_data: 場を解いたときの境界データ（省略可）
        reference: 障壁データの離散解（省略可、r = alpha かつ R = beta のときのみ）

    Raises:
        DomainError: 半径の順序が不正な場合、球面が場の定義域を外れる場合、
            または annulus.unbounded で R が外半径 S 未満でない場合
        DegeneracyError: M(R) <= M(r) の場合
        ConfigurationError: reference の格子やマスクが場と異なる場合、または r, R が領域の境界でない場合
    """
    r = float(r)
    R = float(R)
    ts = [float(t) for t in t_list]
    if not ts:
        raise ConfigurationError("t_list must not be empty")
    if not (annulus.alpha <= r < min(ts) and max(ts) < R <= annulus.beta):
        raise DomainError(
            f"Radii must satisfy alpha={annulus.alpha} <= r={r} < min(t) and "
            f"max(t) < R={R} <= beta={annulus.beta}"
        )
    if not (math.isclose(barrier_spec.r, r) and math.isclose(barrier_spec.R, R)):
        raise ConfigurationError(
            f"Barrier radii ({barrier_spec.r}, {barrier_spec.R}) do not match (r, R)=({r}, {R})"
        )
    if annulus.unbounded and not R < annulus.beta:
        raise DomainError(
            f"The outer radius S={annulus.beta} stands in for infinity; R={R} must be smaller"
        )

    Mr = _sphere_limit(field, annulus, r, density, boundary_data)
    MR = _sphere_limit(field, annulus, R, density, boundary_data)
    if not MR > Mr:
        raise DegeneracyError(
            f"Normalization undefined: M(R)={MR} <= M(r)={Mr} "
            "(the hypothesis M(R) > M(r) is violated)"
        )
    span = MR - Mr
    on_edge = math.isclose(r, annulus.alpha) or math.isclose(R, annulus.beta)

    if reference is None:
        def comparison(t: float) -> float:
            return barrier_u0(barrier_spec, t)
    else:
        if not (math.isclose(r, annulus.alpha) and math.isclose(R, annulus.beta)):
            raise ConfigurationError(
                f"A discrete barrier reference needs r = alpha and R = beta, got r={r}, R={R}"
            )
        if reference.grid.shape != field.grid.shape or not np.array_equal(reference.mask, field.mask):
            raise ConfigurationError("Reference field must share the grid and mask of the checked field")
        barrier_data = None
        if boundary_data is not None:
            def barrier_data(points: np.ndarray) -> np.ndarray:
                return barrier_values(barrier_spec, points)
        ref_r = _sphere_limit(reference, annulus, r, density, barrier_data)
        ref_R = _sphere_limit(reference, annulus, R, density, barrier_data)
        if not ref_R > ref_r:
            raise DegeneracyError(f"Reference maxima do not increase: {ref_R} <= {ref_r}")

        def comparison(t: float) -> float:
            return (max_on_sphere(reference, annulus, t, density) - ref_r) / (ref_R - ref_r)

    def evaluate(t: float) -> BoundRow:
        M = max_on_sphere(field, annulus, t, density)
        finer = max_on_sphere(field, annulus, t, 2 * density)
        bound = span * comparison(t) + Mr
        margin = bound - M
        return BoundRow(
            t=t,
            M=M,
            bound=bound,
            margin=margin,
            normalized_margin=margin / span,
            unresolved=abs(finer - M) > tolerance * span,
            analytic_margin=(span * barrier_u0(barrier_spec, t) + Mr - M) / span,
        )

    rows = _parallel_map(evaluate, ts, threads)
    verdict = all(row.normalized_margin >= -tolerance for row in rows)
    note = ""
    if annulus.truncation is not None:
        note = f"truncated: margins refer to the slab |x_j| <= {annulus.truncation} for j > k"
    if annulus.unbounded:
        outer = f"outer radius S={annulus.beta} stands in for infinity"
        note = f"{note}; {outer}" if note else outer
    return BoundReport(
        rows=rows,
        r=r,
        R=R,
        Mr=Mr,
        MR=MR,
        truncation=annulus.truncation,
        tolerance=float(tolerance),
        density=int(density),
        verdict=verdict,
        note=note,
        comparison="analytic" if reference is None else "discrete-barrier",
        limits="boundary-data" if boundary_data is not None and on_edge else "interpolated",
    )


def _weighted_integrand(v, u, grad_v_norm, grad_u_norm, p: float):
    exponent = abs(p - 2.0)
    return (v - u) ** 2 * (np.power(grad_v_norm, exponent) + np.power(grad_u_norm, exponent))


def H_of_t(
    v_field: GridField,
    barrier_spec: BarrierSpec,
    annulus: KAnnulus,
    p: float,
    t: float,
    density: int,
) -> float:
    """
    H(t) = int_{Sigma_k(t)} |v - u|^2 (|grad v|^{|p-2|} + |grad u|^{|p-2|}) dH^{n-1} を返します。

    v とその勾配（差分）は補間、u とその勾配は解析式で評価します。
    p = 2 では重みは 2 です。

    Raises:
        DomainError: t が領域外、または球面が場の定義域を外れる場合
    """
    pts, weights, v = _sphere_values(v_field, annulus, t, density, closed=False)
    grad_v = v_field.interpolate_gradient(pts)
    if np.any(np.isnan(grad_v)):
        raise DomainError(f"Gradient of the field is unavailable on the sphere t={t}")
    u = barrier_values(barrier_spec, pts)
    grad_u = barrier_gradient(barrier_spec, pts)
    integrand = _weighted_integrand(
        v, u, np.linalg.norm(grad_v, axis=-1), np.linalg.norm(grad_u, axis=-1), float(p)
    )
    return float(np.sum(weights * integrand))


@dataclass(frozen=True, eq=False)
class WeightProfile:
    """標本化された重み H(t)（t は狭義単調増加、H >= 0）。"""

    t: np.ndarray
    H: np.ndarray
    truncation: float | None = None

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        H = np.asarray(self.H, dtype=float)
        if t.ndim != 1 or t.shape != H.shape or t.size < 2:
            raise ConfigurationError("Weight profile needs matching 1-D t and H with at least two samples")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("Weight profile t-grid must be strictly increasing")
        if np.any(~np.isfinite(H)) or np.any(H < 0):
            raise DomainError("Weight profile H must be finite and >= 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "H", H)


def weight_profile(
    v_field: GridField,
    barrier_spec: BarrierSpec,
    annulus: KAnnulus,
    t_grid: Sequence[float],
    density: int,
    *,
    threads: int = 1,
) -> WeightProfile:
    """t_grid の各点で H(t) を評価します。"""
    p = barrier_spec.p
    values = _parallel_map(
        lambda t: H_of_t(v_field, barrier_spec, annulus, p, float(t), density), list(t_grid), threads
    )
    return WeightProfile(np.asarray(t_grid, dtype=float), np.asarray(values), annulus.truncation)


def _largest_decade(t: np.ndarray) -> np.ndarray:
    """t >= max(t)/10 の標本（標本が2点未満なら全部）。"""
    keep = t >= t[-1] / 10.0
    if int(keep.sum()) < 2:
        keep = np.ones_like(t, dtype=bool)
    return keep


@dataclass(frozen=True)
class Star4Diagnostic:
    """増大条件 int_r^inf H^{-1} dt = inf の傾向診断。"""

    S: list[float]
    partial_integrals: list[float]
    growth_exponent: float
    partial_slope: float
    verdict: str
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def condition_star4(profile: WeightProfile) -> Star4Diagnostic:
    """
    部分積分 P(S) = int_{t_0}^S H^{-1} dt（台形則）と、H^{-1} ~ t^gamma の指数を返します。

    gamma は最大の一桁区間での log H^{-1} 対 log t の最小二乗の傾きです。
    gamma >= DIVERGING_EXPONENT なら diverging-trend、gamma <= BOUNDED_EXPONENT なら
    bounded-trend、それ以外は inconclusive です。有限の計算は発散を証明しません。
    """
    t, H = profile.t, profile.H
    if np.any(H == 0):
        first = int(np.flatnonzero(H == 0)[0])
        inverse = 1.0 / np.where(H > 0, H, 1.0)
        partial = np.concatenate(([0.0], integrate.cumulative_trapezoid(inverse, t)))
        partial[max(first, 1):] = math.inf
        return Star4Diagnostic(
            S=t.tolist(),
            partial_integrals=partial.tolist(),
            growth_exponent=math.inf,
            partial_slope=math.nan,
            verdict="diverging-trend",
            note="exact: H vanishes on the sampled grid, so the integrand 1/H is infinite there",
        )

    inverse = 1.0 / H
    partial = np.concatenate(([0.0], integrate.cumulative_trapezoid(inverse, t)))
    window = _largest_decade(t)
    gamma = loglog_slope(t[window], inverse[window])
    slope = loglog_slope(t[window], partial[window])
    if gamma >= DIVERGING_EXPONENT:
        verdict = "diverging-trend"
    elif gamma <= BOUNDED_EXPONENT:
        verdict = "bounded-trend"
    else:
        verdict = "inconclusive"
    return Star4Diagnostic(
        S=t.tolist(),
        partial_integrals=partial.tolist(),
        growth_exponent=gamma,
        partial_slope=slope,
        verdict=verdict,
        note="trend only: a finite sample never certifies divergence",
    )


@dataclass(frozen=True)
class HolderChain:
    """(S - r)^2 / P(S) <= int_r^S H dt の各 S での余裕。"""

    S: list[float]
    lhs: list[float]
    rhs: list[float]
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def holder_chain(t, H, r: float | None = None) -> HolderChain:
    """
    Hölder の連鎖 (S - r)^2 (int_r^S H^{-1})^{-1} <= int_r^S H を各標本点 S で評価します。

    両方の積分に同じ台形則（正の重み）を使うので、離散でも Cauchy-Schwarz により厳密に成り立ちます。
    r を省略すると t の先頭を使い、r は t の先頭と一致する必要があります。
    """
    t = np.asarray(t, dtype=float)
    H = np.asarray(H, dtype=float)
    start = t[0] if r is None else float(r)
    if not math.isclose(start, t[0]):
        raise DomainError(f"Hölder chain starts at r={start}, but the profile starts at {t[0]}")
    inverse = np.divide(1.0, H, out=np.full_like(H, np.inf), where=H > 0)
    with np.errstate(invalid="ignore"):
        partial = np.concatenate(([0.0], integrate.cumulative_trapezoid(inverse, t)))
        mass = np.concatenate(([0.0], integrate.cumulative_trapezoid(H, t)))
    length = t - start
    lhs = np.zeros_like(t)
    positive = (partial > 0) & np.isfinite(partial)
    lhs[positive] = length[positive] ** 2 / partial[positive]
    holds = bool(np.all(lhs <= mass * (1.0 + 1e-12) + 1e-300))
    return HolderChain(S=t.tolist(), lhs=lhs.tolist(), rhs=mass.tolist(), holds=holds)


def weighted_discrepancy(v_field: GridField, barrier_spec: BarrierSpec) -> np.ndarray:
    """
    ノードごとの |v - u|^2 (|grad v|^{|p-2|} + |grad u|^{|p-2|})（OUTSIDE と勾配が取れないノードは NaN）。
    """
    pts = node_points(v_field.grid)
    grad_v = np.stack(v_field.gradient_arrays(), axis=-1)
    u = barrier_values(barrier_spec, pts)
    grad_u = barrier_gradient(barrier_spec, pts)
    return _weighted_integrand(
        v_field.values,
        u,
        np.linalg.norm(grad_v, axis=-1),
        np.linalg.norm(grad_u, axis=-1),
        barrier_spec.p,
    )


def discrepancy_integral(v_field: GridField, barrier_spec: BarrierSpec, S: float) -> float:
    """
    int_{D_{r,S}} |v - u|^2 (|grad v|^{|p-2|} + |grad u|^{|p-2|}) dm を節点求積で返します。

    r < d_k < S の内部ノードにわたって和をとります。
    """
    integrand = weighted_discrepancy(v_field, barrier_spec)
    d = dk_array(node_points(v_field.grid), barrier_spec.k)
    region = v_field.interior & (d > barrier_spec.r) & (d < float(S)) & np.isfinite(integrand)
    return float(np.sum(integrand[region])) * v_field.grid.cell_volume


@dataclass(frozen=True)
class Star4bDiagnostic:
    """増大条件 lim S^{-2} int_{D_{r,S}} ... = 0 の傾向診断。"""

    S: list[float]
    Q: list[float]
    slope: float
    verdict: str
    holder: HolderChain | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def condition_star4b(
    S_values: Sequence[float],
    integrals: Sequence[float],
    profile: WeightProfile | None = None,
    r: float | None = None,
) -> Star4bDiagnostic:
    """
    Q(S) = S^{-2} int_{D_{r,S}} ... の列と、その減衰の傾向を返します。

    すべて 0 なら limit-zero（厳密）、log Q 対 log S の傾きが VANISHING_SLOPE 以下なら
    vanishing-trend、PERSISTENT_SLOPE 以上なら persistent-trend、それ以外は inconclusive です。
    profile を渡すと Hölder の連鎖も評価します。
    """
    S = np.asarray(S_values, dtype=float)
    values = np.asarray(integrals, dtype=float)
    if S.shape != values.shape or S.size < 1:
        raise ConfigurationError("S_values and integrals must be non-empty and of equal length")
    Q = values / S ** 2
    if np.all(Q == 0):
        slope, verdict = -math.inf, "limit-zero"
    else:
        window = _largest_decade(S)
        slope = loglog_slope(S[window], Q[window])
        if math.isnan(slope):
            verdict = "inconclusive"
        elif slope <= VANISHING_SLOPE:
            verdict = "vanishing-trend"
        elif slope >= PERSISTENT_SLOPE:
            verdict = "persistent-trend"
        else:
            verdict = "inconclusive"
    holder = holder_chain(profile.t, profile.H, r) if profile is not None else None
    return Star4bDiagnostic(S=S.tolist(), Q=Q.tolist(), slope=slope, verdict=verdict, holder=holder)


def bounded_integral_check(S_values: Sequence[float], integrals: Sequence[float], total: float) -> dict:
    """
    全体の積分が total 以下なら Q(S) <= total / S^2 -> 0 となることを確かめます。
    """
    S = np.asarray(S_values, dtype=float)
    values = np.asarray(integrals, dtype=float)
    Q = values / S ** 2
    upper = float(total) / S ** 2
    return {
        "S": S.tolist(),
        "Q": Q.tolist(),
        "upper": upper.tolist(),
        "holds": bool(np.all(Q <= upper * (1.0 + 1e-12))),
    }


@dataclass(frozen=True, eq=False)
class ExtremalResult:
    """極値関数 eta_hat と容量。"""

    t: np.ndarray
    eta: np.ndarray
    capacity: float
    energy: float
    degenerate: bool = False
    interval_weights: np.ndarray = field(default=None, repr=False)

    def competitor_energy(self, eta) -> float:
        """同じ格子上の競合関数 eta の int eta'^2 H dt。"""
        return competitor_energy(self.t, self.interval_weights, eta)


def _interval_weights(H: np.ndarray) -> np.ndarray:
    """区間ごとの調和平均 2 / (1/H_i + 1/H_{i+1})（どちらかが 0 なら 0）。"""
    left, right = H[:-1], H[1:]
    positive = (left > 0) & (right > 0)
    out = np.zeros_like(left)
    out[positive] = 2.0 / (1.0 / left[positive] + 1.0 / right[positive])
    return out


def competitor_energy(t, interval_weights, eta) -> float:
    """sum_i (eta_{i+1} - eta_i)^2 H*_i / h_i。"""
    t = np.asarray(t, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return float(np.sum(np.diff(eta) ** 2 * np.asarray(interval_weights) / np.diff(t)))


def extremal_eta(profile: WeightProfile) -> ExtremalResult:
    """
    eta_hat(s) = int_{t_0}^s H^{-1} / int_{t_0}^{t_end} H^{-1} と容量 (int H^{-1})^{-1} を返します。

    区間ごとの調和平均の重みを使うので、int eta_hat'^2 H = 容量 と、
    同じ端点値の競合関数 eta に対する int eta'^2 H >= 容量 が丸め誤差の範囲で成り立ちます。
    H が 0 になる区間があれば容量 0、eta_hat はその区間で等分に跳び、degenerate=True とします。
    """
    t, H = profile.t, profile.H
    h = np.diff(t)
    weights = _interval_weights(H)
    zero = weights == 0
    if np.any(zero):
        steps = np.where(zero, 1.0 / int(zero.sum()), 0.0)
        eta = np.concatenate(([0.0], np.cumsum(steps)))
        eta[-1] = 1.0
        return ExtremalResult(t, eta, 0.0, 0.0, True, weights)

    resistance = h / weights
    total = float(np.sum(resistance))
    eta = np.concatenate(([0.0], np.cumsum(resistance) / total))
    eta[-1] = 1.0
    capacity = 1.0 / total
    energy = competitor_energy(t, weights, eta)
    return ExtremalResult(t, eta, capacity, energy, False, weights)


@dataclass(frozen=True)
class HadamardResult:
    """古典的な三円定理の判定。"""

    radii: tuple[float, float, float]
    maxima: tuple[float, float, float]
    log_gap: float
    convexity: float
    three_spheres_margin: float
    subharmonic_margin: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _circle_maximum(coefficients: np.ndarray, powers: np.ndarray, radius: float, density: int) -> float:
    """円周上の |f| の最大値。標本の局所最大ごとに有界一次元最適化で精密化します。"""

    def modulus(theta):
        z = radius * np.exp(1j * np.asarray(theta, dtype=float))
        return np.abs(np.sum(coefficients[:, None] * z[None, :] ** powers[:, None], axis=0))

    theta = 2.0 * math.pi * np.arange(density) / density
    samples = modulus(theta)
    step = 2.0 * math.pi / density
    # |f|^2 は次数 < len(c) の三角多項式なので、局所最大は高々 len(c) 個
    peaks = np.flatnonzero((samples >= np.roll(samples, 1)) & (samples >= np.roll(samples, -1)))
    peaks = peaks[np.argsort(-samples[peaks], kind="stable")][: 2 * coefficients.size]
    best = float(samples.max())
    for index in peaks:
        if samples[index] < best * (1.0 - 1e-3):
            continue
        refined = optimize.minimize_scalar(
            lambda s: -float(modulus(np.array([s]))[0]),
            bounds=(theta[index] - step, theta[index] + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(refined.fun))
    return best


def hadamard_classical_check(
    coefficients,
    radii: Sequence[float],
    *,
    min_power: int = 0,
    density: int = HADAMARD_DENSITY,
) -> HadamardResult:
    """
    f(z) = sum_j c_j z^{min_power + j} について M(r2)^{log(r3/r1)} <= M(r1)^{log(r3/r2)} M(r3)^{log(r2/r1)}
    を対数形で確かめます。

    M(r) は円周上の等角度標本の最大値を有界一次元最適化で精密化したものです。
    あわせて log M(e^s) の2階差分商と、n = k = 2, p = 2 の対数障壁を log M に適用した
    三球面評価の余裕、|f| に適用した（劣調和関数としての）余裕を報告します。

    Raises:
        DomainError: 半径の順序が不正な場合
        DegeneracyError: 3つの最大値がすべて 0 の場合
    """
    c = np.asarray(coefficients, dtype=complex).ravel()
    if c.size == 0 or not np.all(np.isfinite(c)):
        raise ConfigurationError("Coefficients must be a non-empty list of finite numbers")
    r1, r2, r3 = (float(v) for v in radii)
    if not 0.0 < r1 < r2 < r3:
        raise DomainError(f"Radii must satisfy 0 < r1 < r2 < r3, got {tuple(radii)}")
    powers = np.arange(int(min_power), int(min_power) + c.size)
    M = tuple(_circle_maximum(c, powers, r, int(density)) for r in (r1, r2, r3))
    if all(m == 0.0 for m in M):
        raise DegeneracyError("All three circle maxima vanish; the inequality is undefined")

    a, b, total = math.log(r3 / r2), math.log(r2 / r1), math.log(r3 / r1)
    u0_mid = b / total
    subharmonic = (M[2] - M[0]) * u0_mid + M[0] - M[1]
    if M[1] == 0.0:
        gap = math.inf
        convexity = math.inf
        margin = math.inf
    elif M[0] == 0.0 or M[2] == 0.0:
        gap = -math.inf
        convexity = -math.inf
        margin = -math.inf
    else:
        L1, L2, L3 = (math.log(m) for m in M)
        gap = a * L1 + b * L3 - total * L2
        convexity = 2.0 * ((L3 - L2) / a - (L2 - L1) / b) / total
        margin = (L3 - L1) * u0_mid + L1 - L2
    scale = max(1.0, *(abs(math.log(m)) * total for m in M if m > 0))
    return HadamardResult(
        radii=(r1, r2, r3),
        maxima=M,
        log_gap=gap,
        convexity=convexity,
        three_spheres_margin=margin,
        subharmonic_margin=subharmonic,
        holds=gap >= -HADAMARD_SLACK * scale,
    )
