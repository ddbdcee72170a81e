"""
障壁関数モジュール

k-環状領域上の閉形式の動径 p-調和関数

    xi(r, t)  = int_r^t s^{(1-k)/(p-1)} ds
    u0(t)     = xi(r, t) / xi(r, R)
    u(x)      = u0(d_k(x))

とその勾配、および離散 p-ラプラシアン残差を提供します。

指数 e = q + 1 = (p - k)/(p - 1) を使い、xi = r^e expm1(e log(t/r)) / e と評価します。
|e| < LOG_BRANCH_THRESHOLD では対数分岐 log(t/r) を使います。
expm1 の形は e -> 0 で対数分岐に連続につながり、桁落ちしません。
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .config import EPSILON_SCHEDULE, LOG_BRANCH_THRESHOLD, MAX_DIMENSION, P_MAX
from .errors import ConfigurationError, DomainError
from .geometry import OUTSIDE, GridField, GridSpec, KAnnulus, classify, dk_array, node_points
from .stencil import active_cells, cell_gradients, divergence_residual


def _check_exponent(p: float) -> float:
    p = float(p)
    if not (math.isfinite(p) and p > 1.0):
        raise DomainError(f"Exponent p must be > 1, got {p}")
    return p


@dataclass(frozen=True)
class BarrierSpec:
    """障壁 u0^{k,p} を定める半径・指数・次元の組。"""

    r: float
    R: float
    k: int
    p: float
    n: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and math.isfinite(self.R) and 0.0 < self.r < self.R):
            raise DomainError(f"Barrier radii must satisfy 0 < r < R, got r={self.r}, R={self.R}")
        _check_exponent(self.p)
        if self.p > P_MAX:
            raise ConfigurationError(f"Exponent p={self.p} exceeds p_max={P_MAX}")
        if not 2 <= self.n <= MAX_DIMENSION:
            raise ConfigurationError(f"Dimension n must satisfy 2 <= n <= {MAX_DIMENSION}, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise DomainError(f"Symmetry index k must satisfy 1 <= k <= n={self.n}, got {self.k}")

    @property
    def exponent(self) -> float:
        """e = q + 1 = (p - k)/(p - 1)。"""
        return (self.p - self.k) / (self.p - 1.0)

    @property
    def log_branch(self) -> bool:
        return abs(self.exponent) < LOG_BRANCH_THRESHOLD

    def annulus(self, slab_halfwidth: float | None = None) -> KAnnulus:
        """障壁の定義域 D_{r,R}。"""
        return KAnnulus(self.n, self.k, self.r, self.R, slab_halfwidth=slab_halfwidth)

    def to_dict(self) -> dict:
        return {"r": self.r, "R": self.R, "k": self.k, "p": self.p, "n": self.n}


def xi(r: float, t: float, k: int, p: float) -> float:
    """
    xi(r, t) = int_r^t s^{(1-k)/(p-1)} ds を閉形式で返します。

    Args:
        r: 下端 (> 0)
        t: 上端 (>= r)
        k: 対称性の指数
        p: 指数 (> 1)

    Returns:
        xi(r, t) >= 0

    Raises:
        DomainError: r <= 0、t < r、p <= 1 の場合
    """
    p = _check_exponent(p)
    r = float(r)
    t = float(t)
    if not r > 0.0:
        raise DomainError(f"Lower radius r must be > 0, got {r}")
    if t < r:
        raise DomainError(f"Upper radius t={t} must be >= r={r}")
    e = (p - k) / (p - 1.0)
    log_ratio = math.log(t / r)
    if abs(e) < LOG_BRANCH_THRESHOLD:
        return log_ratio
    return r ** e * math.expm1(e * log_ratio) / e


def u0_continued(spec: BarrierSpec, t):
    """u0 を t > 0 の任意の値で評価します（[r, R] の外は同じ式による連続延長）。"""
    t = np.asarray(t, dtype=float)
    log_t = np.log(t / spec.r)
    log_R = math.log(spec.R / spec.r)
    if spec.log_branch:
        return log_t / log_R
    e = spec.exponent
    return np.expm1(e * log_t) / math.expm1(e * log_R)


def u0_derivative_continued(spec: BarrierSpec, t):
    t = np.asarray(t, dtype=float)
    log_R = math.log(spec.R / spec.r)
    if spec.log_branch:
        return 1.0 / (t * log_R)
    e = spec.exponent
    return e * np.exp(e * np.log(t / spec.r)) / (t * math.expm1(e * log_R))


def _check_radius(spec: BarrierSpec, t, extend: bool) -> np.ndarray:
    t_arr = np.asarray(t, dtype=float)
    upper = math.inf if extend else spec.R
    if np.any(np.isnan(t_arr)) or np.any(t_arr < spec.r) or np.any(t_arr > upper):
        raise DomainError(
            f"Radius outside [{spec.r}, {spec.R}]"
            + (" (extension allows t > R only)" if extend else "")
            + f": got {t}"
        )
    return t_arr


def barrier_u0(spec: BarrierSpec, t, *, extend: bool = False):
    """
    正規化された障壁 u0(t) = xi(r, t) / xi(r, R) を返します。

    Args:
        spec: 障壁の指定
        t: 半径（スカラーまたは配列）
        extend: True なら t > R も同じ式で延長して評価する

    Returns:
        u0(t)。t がスカラーなら float

    Raises:
        DomainError: t が [r, R] の外（extend=True では t < r）の場合
    """
    t_arr = _check_radius(spec, t, extend)
    value = u0_continued(spec, t_arr)
    # 端点は正規化どおり厳密に 0 と 1
    value = np.where(t_arr == spec.r, 0.0, np.where(t_arr == spec.R, 1.0, value))
    return float(value) if np.ndim(t) == 0 else value


def barrier_derivative(spec: BarrierSpec, t, *, extend: bool = False):
    """u0'(t) = t^{q} / xi(r, R) を返します。"""
    t_arr = _check_radius(spec, t, extend)
    value = u0_derivative_continued(spec, t_arr)
    return float(value) if np.ndim(t) == 0 else value


def barrier_gradient(spec: BarrierSpec, points) -> np.ndarray:
    """
    u(x) = u0(d_k(x)) の解析的勾配を返します。

    grad u = u0'(d_k) x_i / d_k（i <= k）、i > k の成分は 0 です。
    d_k = 0 の点では 0 を返します。

    Args:
        spec: 障壁の指定
        points: 形 (..., n) の点

    Returns:
        形 (..., n) の勾配
    """
    pts = np.asarray(points, dtype=float)
    d = dk_array(pts, spec.k)
    positive = d > 0
    safe = np.where(positive, d, 1.0)
    scale = np.where(positive, u0_derivative_continued(spec, safe) / safe, 0.0)
    grad = np.zeros_like(pts)
    grad[..., : spec.k] = pts[..., : spec.k] * scale[..., None]
    return grad


def barrier_values(spec: BarrierSpec, points) -> np.ndarray:
    """
    任意点で u0(d_k(x)) を評価します（穴の内側と外側は連続延長）。

    穴の奥 d_k < r/2 のノードは d_k = r/2 で打ち切ります。
    """
    d = dk_array(np.asarray(points, dtype=float), spec.k)
    return u0_continued(spec, np.maximum(d, 0.5 * spec.r))


def barrier_field(
    spec: BarrierSpec, grid: GridSpec, mask: np.ndarray | None = None
) -> tuple[GridField, np.ndarray]:
    """
    格子上の障壁場とその解析的勾配を返します。

    mask を省略すると、格子のボックスから切り詰め幅を読み取って D_{r,R} でノードを分類します。
    境界ノード（d_k が r 未満・R 超のものを含む）は同じ式の連続延長で値を持ちます。

    Args:
        spec: 障壁の指定
        grid: 格子
        mask: ノード分類（省略可）

    Returns:
        (GridField, gradient)。gradient は形 (*shape, n)、OUTSIDE ノードでは NaN
    """
    if grid.n != spec.n:
        raise ConfigurationError(f"Grid dimension {grid.n} does not match barrier n={spec.n}")
    pts = node_points(grid)
    if mask is None:
        slab = float(grid.upper[spec.k]) if spec.k < spec.n else None
        mask = classify(spec.annulus(slab).contains(pts))
    mask = np.asarray(mask, dtype=np.int8)
    used = mask != OUTSIDE

    values = np.full(grid.shape, np.nan)
    values[used] = barrier_values(spec, pts[used])
    gradient = np.full(pts.shape, np.nan)
    gradient[used] = barrier_gradient(spec, pts[used])

    field = GridField(grid, values, mask, spec.annulus(float(grid.upper[spec.k]) if spec.k < spec.n else None))
    return field, gradient


def plap_residual_report(field: GridField, p: float) -> tuple[float, float]:
    """
    内部ノード上の離散 p-ラプラシアンの最大ノルムと、使った正則化 eps を返します。

    p < 2 で勾配 0 の有効セルがある場合のみ、ソルバーの最終 eps で正則化します。
    それ以外は eps = 0 です。
    """
    p = _check_exponent(p)
    u = field.filled(0.0)
    eps = 0.0
    if p < 2.0:
        g = cell_gradients(u, field.grid.spacing)
        s = np.sum(g ** 2, axis=0)
        if np.any((s == 0.0) & active_cells(field.mask)):
            eps = float(EPSILON_SCHEDULE[-1])
            print(f"[residual] zero cell gradient with p={p}; regularized with eps={eps}", file=sys.stderr)
    residual = divergence_residual(u, field.mask, field.grid.spacing, p, eps)
    interior = field.interior
    if not np.any(interior):
        return 0.0, eps
    return float(np.max(np.abs(residual[interior]))), eps


def plap_residual(field: GridField, p: float) -> float:
    """内部ノード上の離散 p-ラプラシアン -div(|grad u|^{p-2} grad u) の最大ノルム。"""
    return plap_residual_report(field, p)[0]
