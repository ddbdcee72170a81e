"""
ユーティリティモジュール

汎用的なヘルパー関数を提供します。
CSV 用の数値整形、マスクのランレングス符号化、
乱数生成器の構築、両対数の傾き推定などの機能を含みます。
"""

import math

import numpy as np


def format_float(x: float) -> str:
    """
    CSV 出力用に浮動小数を整形します。

    repr は往復可能な最短表現なので、同じ値は常に同じ文字列になります。
    """
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def make_rng(seed: int) -> np.random.Generator:
    """シードから決定的な乱数生成器を作ります。"""
    return np.random.default_rng(int(seed))


def rle_encode(mask: np.ndarray) -> list[list[int]]:
    """
    マスク配列を行優先でランレングス符号化します。

    Args:
        mask: 整数マスク配列（任意次元）

    Returns:
        [値, 長さ] のリスト
    """
    flat = np.ascontiguousarray(mask).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: list[list[int]], shape: tuple[int, ...]) -> np.ndarray:
    """
    ランレングス符号をマスク配列に戻します。

    Args:
        runs: [値, 長さ] のリスト
        shape: 復元する配列の形

    Returns:
        int8 のマスク配列

    Raises:
        ValueError: 長さの合計が shape と一致しない場合
    """
    values = np.array([r[0] for r in runs], dtype=np.int8)
    lengths = np.array([r[1] for r in runs], dtype=np.int64)
    total = int(np.prod(shape))
    if int(lengths.sum()) != total:
        raise ValueError(
            f"Run-length total {int(lengths.sum())} does not match shape {shape} ({total} nodes)"
        )
    return np.repeat(values, lengths).reshape(shape)


def loglog_slope(x, y) -> float:
    """
    log y を log x に最小二乗で当てはめた傾きを返します。

    Args:
        x: 正の値の列
        y: 正の値の列

    Returns:
        傾き（点が2未満なら nan）
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if int(keep.sum()) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


def observed_orders(h, errors) -> list[float]:
    """
    連続する格子幅の組ごとの経験的収束次数 log(e1/e2)/log(h1/h2) を返します。
    """
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    orders: list[float] = []
    for i in range(1, len(h)):
        if e[i - 1] > 0 and e[i] > 0:
            orders.append(float(np.log(e[i - 1] / e[i]) / np.log(h[i - 1] / h[i])))
        else:
            orders.append(float("nan"))
    return orders
