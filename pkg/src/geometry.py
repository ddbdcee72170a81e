"""
幾何モジュール

k-環状領域 D_{alpha,beta}、異方的距離 d_k、一様テンソル格子とノード分類、
k-球面 Sigma_k(t) 上の求積点の生成を担当します。

k < n のとき Sigma_k(t) は有界でないため、k+1 番目以降の座標はスラブ |x_j| <= L に
切り詰めます。以降の「Sigma_k(t) 上の測度」はすべてこの切り詰め後の測度です。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .config import MAX_DIMENSION, MIN_CELLS_PER_AXIS, MIN_SPHERE_DENSITY, SLAB_FACTOR
from .errors import ConfigurationError, DomainError


# ノード分類
OUTSIDE = 0
INTERIOR = 1
BOUNDARY = 2


@dataclass(frozen=True)
class KAnnulus:
    """
    k-環状領域 D_{alpha,beta} = {x in R^n : alpha < d_k(x) < beta}。

    beta は常に有限です。unbounded=True は D_{alpha,inf} を外半径 beta = S で近似した領域で、
    外側の球面 Sigma_k(S) は本当の境界ではありません。三球面評価では R < S が必要です。
    """

    n: int
    k: int
    alpha: float
    beta: float
    slab_halfwidth: float | None = None
    unbounded: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigurationError(f"Dimension n must be an integer >= 2, got {self.n!r}")
        if self.n > MAX_DIMENSION:
            raise ConfigurationError(
                f"Dimension n={self.n} is not supported (n <= {MAX_DIMENSION})"
            )
        if not isinstance(self.k, (int, np.integer)) or not 1 <= self.k <= self.n:
            raise DomainError(f"Symmetry index k must satisfy 1 <= k <= n={self.n}, got {self.k!r}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError(
                f"Radii must be finite (use unbounded=True with a finite outer radius), "
                f"got alpha={self.alpha}, beta={self.beta}"
            )
        if not 0.0 <= self.alpha < self.beta:
            raise DomainError(
                f"Radii must satisfy 0 <= alpha < beta, got alpha={self.alpha}, beta={self.beta}"
            )
        if self.k < self.n:
            L = self.slab_halfwidth
            if L is None:
                object.__setattr__(self, "slab_halfwidth", SLAB_FACTOR * float(self.beta))
            elif not (math.isfinite(L) and L > 0):
                raise ConfigurationError(f"Slab half-width must be positive, got {L}")

    @property
    def truncation(self) -> float | None:
        """スラブ半幅 L（k = n のときは切り詰めなしで None）。"""
        if self.k == self.n:
            return None
        return float(self.slab_halfwidth)

    def surface_measure(self, t: float) -> float:
        """
        切り詰め後の Sigma_k(t) の (n-1) 次元測度 |S^{k-1}| t^{k-1} (2L)^{n-k} を返します。
        """
        measure = _unit_sphere_measure(self.k) * float(t) ** (self.k - 1)
        if self.k < self.n:
            measure *= (2.0 * self.truncation) ** (self.n - self.k)
        return measure

    def contains(self, points) -> np.ndarray:
        """各点が切り詰め後の領域の内部にあるかどうかを返します。"""
        pts = np.asarray(points, dtype=float)
        d = dk_array(pts, self.k)
        inside = (d > self.alpha) & (d < self.beta)
        if self.k < self.n:
            inside &= np.all(np.abs(pts[..., self.k:]) < self.truncation, axis=-1)
        return inside

    def to_dict(self) -> dict:
        """JSON 化用の辞書を返します。"""
        return {
            "n": int(self.n),
            "k": int(self.k),
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "slab_halfwidth": self.truncation,
            "unbounded": bool(self.unbounded),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KAnnulus":
        """to_dict の逆変換。"""
        return cls(
            n=int(data["n"]),
            k=int(data["k"]),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            slab_halfwidth=(
                None if data.get("slab_halfwidth") is None else float(data["slab_halfwidth"])
            ),
            unbounded=bool(data.get("unbounded", False)),
        )


@dataclass(frozen=True)
class GridSpec:
    """
    バウンディングボックス上の一様テンソル格子。

    cells[i] 個のセル（cells[i]+1 個のノード）を軸 i に持ちます。
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.lower) == len(self.upper) == len(self.cells)):
            raise ConfigurationError("Grid lower/upper/cells must have the same length")
        for c in self.cells:
            if int(c) < MIN_CELLS_PER_AXIS:
                raise ConfigurationError(
                    f"cells_per_axis must be >= {MIN_CELLS_PER_AXIS}, got {c}"
                )
        for lo, hi in zip(self.lower, self.upper):
            if not hi > lo:
                raise ConfigurationError(f"Grid box must have upper > lower, got [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        """ノード配列の形。"""
        return tuple(int(c) + 1 for c in self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (float(hi) - float(lo)) / int(c)
            for lo, hi, c in zip(self.lower, self.upper, self.cells)
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        """各軸のノード座標。"""
        return [
            np.linspace(float(lo), float(hi), int(c) + 1)
            for lo, hi, c in zip(self.lower, self.upper, self.cells)
        ]

    def to_dict(self) -> dict:
        return {
            "lower": [float(v) for v in self.lower],
            "upper": [float(v) for v in self.upper],
            "cells": [int(c) for c in self.cells],
        }


@dataclass(frozen=True, eq=False)
class GridField:
    """
    格子上のスカラー場とノード分類マスク。

    値は OUTSIDE 以外のノードで有限です。OUTSIDE ノードの値は NaN で保持します。
    配列は書き込み不可のコピーとして保持し、作成後は変更しません。
    """

    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray
    annulus: KAnnulus | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        mask = np.array(self.mask, dtype=np.int8, copy=True)
        if values.shape != self.grid.shape or mask.shape != self.grid.shape:
            raise ConfigurationError(
                f"Field shape {values.shape} / mask shape {mask.shape} do not match grid {self.grid.shape}"
            )
        used = mask != OUTSIDE
        if not np.all(np.isfinite(values[used])):
            raise DomainError("Field values must be finite on interior and boundary nodes")
        values[~used] = np.nan
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.mask == BOUNDARY

    def with_values(self, values) -> "GridField":
        """同じ格子・マスクで値だけを差し替えた場を返します。"""
        return GridField(self.grid, values, self.mask, self.annulus, dict(self.metadata))

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """OUTSIDE ノードを fill で埋めた書き込み可能なコピーを返します。"""
        out = np.array(self.values, copy=True)
        out[self.mask == OUTSIDE] = fill
        return out

    def interpolate(self, points) -> np.ndarray:
        """
        多重線形補間で任意点の値を返します。

        OUTSIDE ノードを頂点に持つセル内の点やボックス外の点は NaN になります。
        """
        interp = RegularGridInterpolator(
            tuple(self.grid.axes()),
            self.values,
            method="linear",
            bounds_error=False,
            fill_value=np.nan,
        )
        pts = np.asarray(points, dtype=float)
        return interp(pts.reshape(-1, self.grid.n)).reshape(pts.shape[:-1])

    def gradient_arrays(self) -> list[np.ndarray]:
        """
        ノード上の勾配成分を返します。

        両隣が使えれば中心差分、片側だけなら片側差分、どちらもなければ NaN です。
        OUTSIDE ノードは NaN です。
        """
        used = self.mask != OUTSIDE
        grads = []
        for axis, h in enumerate(self.grid.spacing):
            hi = [slice(None)] * self.grid.n
            lo = [slice(None)] * self.grid.n
            hi[axis] = slice(1, None)
            lo[axis] = slice(None, -1)
            diff = (self.values[tuple(hi)] - self.values[tuple(lo)]) / h
            forward = np.full(self.grid.shape, np.nan)
            backward = np.full(self.grid.shape, np.nan)
            forward[tuple(lo)] = diff
            backward[tuple(hi)] = diff
            central = 0.5 * (forward + backward)
            g = np.where(
                np.isfinite(central), central, np.where(np.isfinite(forward), forward, backward)
            )
            g[~used] = np.nan
            grads.append(g)
        return grads

    def interpolate_gradient(self, points) -> np.ndarray:
        """差分勾配（gradient_arrays）を多重線形補間して任意点で返します（形 (..., n)）。"""
        pts = np.asarray(points, dtype=float)
        comps = []
        for g in self.gradient_arrays():
            interp = RegularGridInterpolator(
                tuple(self.grid.axes()), g, method="linear", bounds_error=False, fill_value=np.nan
            )
            comps.append(interp(pts.reshape(-1, self.grid.n)).reshape(pts.shape[:-1]))
        return np.stack(comps, axis=-1)


def d_k(point, k: int) -> float:
    """
    先頭 k 座標のユークリッドノルム d_k(x) = (x_1^2 + ... + x_k^2)^{1/2} を返します。

    Args:
        point: 長さ n の実数ベクトル
        k: 1 <= k <= n

    Returns:
        d_k(x) >= 0

    Raises:
        DomainError: k が範囲外の場合
    """
    x = np.asarray(point, dtype=float).ravel()
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= x.size:
        raise DomainError(f"k must satisfy 1 <= k <= n={x.size}, got {k!r}")
    return float(np.linalg.norm(x[:k]))


def dk_array(points, k: int) -> np.ndarray:
    """d_k を最後の軸に沿ってベクトル化して評価します。"""
    pts = np.asarray(points, dtype=float)
    if not 1 <= k <= pts.shape[-1]:
        raise DomainError(f"k must satisfy 1 <= k <= n={pts.shape[-1]}, got {k!r}")
    return np.sqrt(np.sum(pts[..., :k] ** 2, axis=-1))


def _unit_sphere_measure(k: int) -> float:
    """R^k の単位球面 S^{k-1} の測度（k=1 では2点の計数測度 2）。"""
    return 2.0 * math.pi ** (k / 2.0) / math.gamma(k / 2.0)


def _sin_power_antiderivative(j: int, x: np.ndarray) -> np.ndarray:
    """F_j(x) = int_0^x sin^j(s) ds を漸化式で評価します。"""
    if j == 0:
        return np.asarray(x, dtype=float)
    if j == 1:
        return 1.0 - np.cos(x)
    return -np.sin(x) ** (j - 1) * np.cos(x) / j + (j - 1) / j * _sin_power_antiderivative(j - 2, x)


def _unit_sphere_rule(k: int, density: int) -> tuple[np.ndarray, np.ndarray]:
    """
    R^k の単位球面上の求積則。

    k=1 は2点、k=2 は等角度点、k>=3 は極角の帯（帯の測度は厳密値）と S^{k-2} の積です。
    """
    if k == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if k == 2:
        theta = 2.0 * math.pi * np.arange(density) / density
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return pts, np.full(density, 2.0 * math.pi / density)

    sub_pts, sub_w = _unit_sphere_rule(k - 1, density)
    bands = max(2, density // 2)
    edges = np.linspace(0.0, math.pi, bands + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    band = _sin_power_antiderivative(k - 2, edges[1:]) - _sin_power_antiderivative(k - 2, edges[:-1])

    first = np.repeat(np.cos(mids), sub_pts.shape[0])[:, None]
    rest = (np.sin(mids)[:, None, None] * sub_pts[None, :, :]).reshape(-1, k - 1)
    pts = np.concatenate([first, rest], axis=1)
    weights = np.outer(band, sub_w).ravel()
    return pts, weights


def sample_ksphere(
    annulus: KAnnulus, t: float, density: int, *, closed: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """
    切り詰め後の Sigma_k(t) 上の求積点と重みを返します。

    先頭 k 座標は球面則、残りの n-k 座標は [-L, L] 上の台形則のテンソル積です。

    Args:
        annulus: 対象の k-環状領域
        t: 球面の半径（alpha < t < beta、closed=True なら閉区間を許す）
        density: 角度方向の点数
        closed: 境界球面 t = alpha, t = beta も許すかどうか

    Returns:
        (points, weights)。points の形は (m, n)、weights の総和は切り詰め後の測度

    Raises:
        DomainError: t が領域外の場合
        ConfigurationError: density が小さすぎる場合
    """
    t = float(t)
    inside = (annulus.alpha <= t <= annulus.beta and t > 0) if closed else (annulus.alpha < t < annulus.beta)
    if not inside:
        raise DomainError(
            f"Radius t={t} outside ({annulus.alpha}, {annulus.beta}) of the k-annulus"
        )
    if int(density) < MIN_SPHERE_DENSITY:
        raise ConfigurationError(f"Sphere density must be >= {MIN_SPHERE_DENSITY}, got {density}")

    n, k = annulus.n, annulus.k
    sphere_pts, sphere_w = _unit_sphere_rule(k, int(density))
    sphere_pts = t * sphere_pts
    sphere_w = t ** (k - 1) * sphere_w
    if k == n:
        return sphere_pts, sphere_w

    L = annulus.truncation
    m = max(3, int(density) // 4 + 1)
    axial = np.linspace(-L, L, m)
    axial_w = np.full(m, 2.0 * L / (m - 1))
    axial_w[[0, -1]] *= 0.5

    grids = np.meshgrid(*([axial] * (n - k)), indexing="ij")
    slab_pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([axial_w] * (n - k)), indexing="ij")
    slab_w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)

    pts = np.concatenate(
        [
            np.repeat(sphere_pts, slab_pts.shape[0], axis=0),
            np.tile(slab_pts, (sphere_pts.shape[0], 1)),
        ],
        axis=1,
    )
    weights = np.outer(sphere_w, slab_w).ravel()
    return pts, weights


def node_points(grid: GridSpec) -> np.ndarray:
    """格子ノードの座標を形 (*shape, n) で返します。"""
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    return np.stack(mesh, axis=-1)


def classify(interior: np.ndarray) -> np.ndarray:
    """
    内部ノード集合からマスクを作ります。

    内部でなく、3^n 近傍に内部ノードを持つノードを境界（Dirichlet）とします。
    """
    interior = np.asarray(interior, dtype=bool)
    structure = np.ones((3,) * interior.ndim, dtype=bool)
    near = ndimage.binary_dilation(interior, structure=structure)
    mask = np.full(interior.shape, OUTSIDE, dtype=np.int8)
    mask[near & ~interior] = BOUNDARY
    mask[interior] = INTERIOR
    return mask


def build_grid(annulus: KAnnulus, cells_per_axis: int) -> tuple[GridSpec, np.ndarray]:
    """
    切り詰め後の k-環状領域を覆う格子とノード分類を作ります。

    ボックスは先頭 k 軸が [-beta, beta]、残りの軸が [-L, L] です。
    ノードは d_k の厳密評価で分類し、セル内の幾何は扱いません。

    Args:
        annulus: 対象の k-環状領域
        cells_per_axis: 各軸のセル数（>= 8）

    Returns:
        (GridSpec, mask)

    Raises:
        ConfigurationError: cells_per_axis < 8 の場合
    """
    if int(cells_per_axis) < MIN_CELLS_PER_AXIS:
        raise ConfigurationError(
            f"cells_per_axis must be >= {MIN_CELLS_PER_AXIS}, got {cells_per_axis}"
        )
    n, k = annulus.n, annulus.k
    half = [float(annulus.beta)] * k + [annulus.truncation] * (n - k)
    grid = GridSpec(
        lower=tuple(-h for h in half),
        upper=tuple(half),
        cells=(int(cells_per_axis),) * n,
    )
    return grid, classify(annulus.contains(node_points(grid)))


def box_grid(lower, upper, cells_per_axis: int) -> tuple[GridSpec, np.ndarray]:
    """
    直方体領域の格子を作ります。最外層のノードを境界、それ以外を内部とします。
    """
    n = len(lower)
    grid = GridSpec(tuple(float(v) for v in lower), tuple(float(v) for v in upper), (int(cells_per_axis),) * n)
    interior = np.zeros(grid.shape, dtype=bool)
    interior[(slice(1, -1),) * n] = True
    return grid, classify(interior)
