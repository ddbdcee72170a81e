"""
離散ステンシルモジュール

一様テンソル格子上の離散 p-Dirichlet エネルギー

    E_eps(u) = sum_{active cells} (|g_cell|^2 + eps^2)^{p/2} * V

とその勾配・ヘッセ行列を評価します。セル勾配 g_cell は各軸の片側差分を
セルの 2^{n-1} 本の辺で平均したものです。すべての頂点が OUTSIDE でないセルを
有効セルと呼びます。

ソルバーと残差評価（障壁・検証）は同じステンシルを共有します。
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from scipy import sparse

from .geometry import OUTSIDE


@lru_cache(maxsize=None)
def corner_offsets(n: int) -> tuple[tuple[int, ...], ...]:
    """セルの 2^n 個の頂点オフセット（辞書順）。"""
    return tuple(itertools.product((0, 1), repeat=n))


def gradient_operator(spacing) -> np.ndarray:
    """
    頂点値からセル勾配への線形写像 B（形 (n, 2^n)）を返します。

    B[j, c] = sign_j(c) / (2^{n-1} h_j)、sign_j(c) は c_j = 1 なら +1、0 なら -1。
    """
    h = np.asarray(spacing, dtype=float)
    n = h.size
    corners = np.array(corner_offsets(n), dtype=float)
    return ((2.0 * corners - 1.0) / (2.0 ** (n - 1) * h)).T


def _corner_slice(offset: tuple[int, ...], cells: tuple[int, ...]) -> tuple[slice, ...]:
    return tuple(slice(o, o + c) for o, c in zip(offset, cells))


def corner_values(u: np.ndarray) -> np.ndarray:
    """ノード値から各セルの頂点値を集めます（形 (2^n, *cells)）。"""
    cells = tuple(s - 1 for s in u.shape)
    return np.stack([u[_corner_slice(o, cells)] for o in corner_offsets(u.ndim)])


def cell_gradients(u: np.ndarray, spacing) -> np.ndarray:
    """セル勾配（形 (n, *cells)）。"""
    B = gradient_operator(spacing)
    return np.tensordot(B, corner_values(u), axes=([1], [0]))


def active_cells(mask: np.ndarray) -> np.ndarray:
    """すべての頂点が OUTSIDE でないセル。"""
    used = np.asarray(mask) != OUTSIDE
    cells = tuple(s - 1 for s in used.shape)
    active = np.ones(cells, dtype=bool)
    for o in corner_offsets(used.ndim):
        active &= used[_corner_slice(o, cells)]
    return active


def _weights(s: np.ndarray, p: float) -> np.ndarray:
    """w = s^{(p-2)/2}。s = 0 では流束の極限（p = 2 で 1、それ以外 0）を使います。"""
    positive = s > 0
    w = np.zeros_like(s)
    w[positive] = s[positive] ** ((p - 2.0) / 2.0)
    if p == 2.0:
        w[~positive] = 1.0
    return w


def energy(u: np.ndarray, mask: np.ndarray, spacing, p: float, eps: float) -> float:
    """
    離散エネルギー E_eps(u) を返します。

    総和は有効セルを辞書順に並べた np.sum で行うので、同じ入力には同じ値を返します。
    """
    g = cell_gradients(u, spacing)
    active = active_cells(mask)
    s = np.sum(g[:, active] ** 2, axis=0) + eps * eps
    volume = float(np.prod(spacing))
    return float(np.sum(s ** (p / 2.0)) * volume)


def cell_flux(u: np.ndarray, mask: np.ndarray, spacing, p: float, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """
    セル流束 (|g|^2 + eps^2)^{(p-2)/2} g を返します。無効セルの流束は 0 です。

    Returns:
        (flux, active)。flux の形は (n, *cells)
    """
    g = cell_gradients(u, spacing)
    active = active_cells(mask)
    s = np.sum(g ** 2, axis=0) + eps * eps
    w = _weights(s, p)
    flux = w * g
    flux[:, ~active] = 0.0
    return flux, active


def energy_gradient_array(u: np.ndarray, mask: np.ndarray, spacing, p: float, eps: float) -> np.ndarray:
    """
    全ノードに対するエネルギー勾配 dE/du を返します（境界ノードの成分も含む）。
    """
    flux, _ = cell_flux(u, mask, spacing, p, eps)
    B = gradient_operator(spacing)
    volume = float(np.prod(spacing))
    per_corner = np.tensordot(B.T, flux, axes=([1], [0])) * (p * volume)

    grad = np.zeros(u.shape, dtype=float)
    cells = tuple(s - 1 for s in u.shape)
    for c, o in enumerate(corner_offsets(u.ndim)):
        grad[_corner_slice(o, cells)] += per_corner[c]
    return grad


def divergence_residual(u: np.ndarray, mask: np.ndarray, spacing, p: float, eps: float) -> np.ndarray:
    """
    ノードごとの離散 p-ラプラシアン -div(|grad u|^{p-2} grad u) の近似値。

    エネルギー勾配を p * V で割ったもので、ソルバーの停止判定と同じステンシルです。
    """
    volume = float(np.prod(spacing))
    return energy_gradient_array(u, mask, spacing, p, eps) / (p * volume)


def hessian(u: np.ndarray, mask: np.ndarray, spacing, p: float, eps: float) -> sparse.csr_matrix:
    """
    全ノードに対するエネルギーのヘッセ行列を疎行列で組み立てます。

    セルごとに H_cell = B^T A B V、A = p w [I + (p-2) g g^T / (|g|^2 + eps^2)] です。
    eps > 0 を前提とします（p < 2 で g = 0 のとき A は発散するため）。
    """
    n = u.ndim
    cells = tuple(s - 1 for s in u.shape)
    active = active_cells(mask)
    B = gradient_operator(spacing)
    volume = float(np.prod(spacing))

    g = cell_gradients(u, spacing)[:, active]
    s = np.sum(g ** 2, axis=0) + eps * eps
    w = _weights(s, p)
    ratio = np.divide((p - 2.0) * w, s, out=np.zeros_like(s), where=s > 0)
    A = np.einsum("jk,m->jkm", np.eye(n), w) + np.einsum("jm,km,m->jkm", g, g, ratio)
    A *= p
    block = np.einsum("jc,jkm,kd->cdm", B, A, B) * volume

    index = np.arange(int(np.prod(u.shape))).reshape(u.shape)
    corner_index = np.stack([index[_corner_slice(o, cells)][active] for o in corner_offsets(n)])
    C = corner_index.shape[0]
    rows = np.broadcast_to(corner_index[:, None, :], (C, C, corner_index.shape[1])).ravel()
    cols = np.broadcast_to(corner_index[None, :, :], (C, C, corner_index.shape[1])).ravel()
    size = index.size
    return sparse.coo_matrix((block.ravel(), (rows, cols)), shape=(size, size)).tocsr()
