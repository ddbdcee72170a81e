"""
不等式ラボモジュール

関数 g1, g2, g3、厳密な定数 C1-C4、合成定数 C5-C10 と、

    I(p) = int_0^1 |lambda a + (1 - lambda) b|^{p-2} d lambda

の上下界を実装し、標本で検証します。

x^m - 1 を含む比はすべて Q(x, m) = (x^m - 1)/(x - 1) = expm1(m L)/expm1(L)（L = log x）で評価し、
|x - 1| < SERIES_THRESHOLD では級数 m (1 + (m-1) d/2 + (m-1)(m-2) d^2/6) を使います。

定数の合成（p >= 2 / p < 2 の2分岐）:

    p >= 2:  C7 = C1 C3 / (p-1),  C8 = C4 / (p-1),  W = a^{p-2} + b^{p-2}
    p <  2:  C7 = C3 / (p-1),     C8 = C2 C4 / (p-1), W = (a^{2-p} + b^{2-p})^{-1}
    C9 = min(C7, 1/C8),  C10 = max(1/C7, C8)

共線なベクトル対について C7 W <= I(p) <= C8 W が成り立ちます。
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from tqdm import tqdm

from .config import (
    ENVELOPE_RELATIVE_SLACK,
    INEQUALITY_RELATIVE_SLACK,
    SCAN_P_MAX,
    SCAN_P_MIN,
    SERIES_THRESHOLD,
)
from .errors import DomainError, SingularCaseError
from .utils import make_rng


def _check_p(p) -> np.ndarray:
    p_arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr <= 1.0):
        raise DomainError(f"Exponent p must be > 1, got {p}")
    return p_arr


def _check_x(x) -> np.ndarray:
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 1.0)):
        raise DomainError(f"Argument x must be > 1, got {x}")
    return x_arr


def _scalar_or_array(value, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(value)
    return np.asarray(value)


def power_quotient(x, m):
    """
    Q(x, m) = (x^m - 1)/(x - 1) を x > 0 で評価します（x = 1 では m）。
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    delta = x - 1.0
    near = np.abs(delta) < SERIES_THRESHOLD
    L = np.log1p(np.where(near, 1.0, delta))
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.expm1(m * L) / np.expm1(L)
    series = m * (1.0 + (m - 1.0) * delta / 2.0 + (m - 1.0) * (m - 2.0) * delta ** 2 / 6.0)
    return np.where(near, series, direct)


def g1(x, p):
    """
    g1(x) = (x^{p-1} + 1)(x - 1) / ((x^{p-1} - 1)(x + 1))。

    Args:
        x: > 1（スカラーまたは配列）
        p: > 1

    Returns:
        g1(x)。p < 2 で (1, 1/(p-1))、p > 2 で (1/(p-1), 1)、p = 2 で 1

    Raises:
        DomainError: x <= 1 または p <= 1 の場合
    """
    x_arr = _check_x(x)
    p_arr = _check_p(p)
    with np.errstate(over="ignore", invalid="ignore"):
        value = (np.power(x_arr, p_arr - 1.0) + 1.0) / (x_arr + 1.0) / power_quotient(x_arr, p_arr - 1.0)
        # x^{p-1} のオーバーフロー時は極限 1
        value = np.where(np.isfinite(value), value, 1.0)
    return _scalar_or_array(value, x, p)


def g2(x, p):
    """g2(x) = (x^{p-1} - 1) / ((x - 1)(x^{p-2} + 1))。値は {1, (p-1)/2} の間。"""
    x_arr = _check_x(x)
    p_arr = _check_p(p)
    with np.errstate(over="ignore", invalid="ignore"):
        value = power_quotient(x_arr, p_arr - 1.0) / (np.power(x_arr, p_arr - 2.0) + 1.0)
    return _scalar_or_array(value, x, p)


def g3(x, p):
    """g3(x) = (x^{p-1} - 1)(x^{2-p} + 1) / (x - 1)。値は {1, 2(p-1)} の間。"""
    x_arr = _check_x(x)
    p_arr = _check_p(p)
    with np.errstate(over="ignore", invalid="ignore"):
        value = power_quotient(x_arr, p_arr - 1.0) * (np.power(x_arr, 2.0 - p_arr) + 1.0)
    return _scalar_or_array(value, x, p)


@dataclass(frozen=True)
class TightConstants:
    """指数 p に対する定数 C1-C10。"""

    p: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float
    C9: float
    C10: float

    @property
    def bound_name(self) -> str:
        """C3, C4 が属する不等式（p >= 2 なら weight_high、p < 2 なら weight_low）。"""
        return "weight_high" if self.p >= 2.0 else "weight_low"

    def to_dict(self) -> dict:
        return asdict(self)


def tight_constants(p: float) -> TightConstants:
    """
    指数 p の厳密な定数を返します。

    Raises:
        DomainError: p <= 1 の場合
    """
    p = float(_check_p(p))
    C1 = min(1.0, 1.0 / (p - 1.0))
    C2 = max(1.0, 1.0 / (p - 1.0))
    if p >= 2.0:
        C3 = min(1.0, (p - 1.0) / 2.0)
        C4 = max(1.0, (p - 1.0) / 2.0)
        C7 = C1 * C3 / (p - 1.0)
        C8 = C4 / (p - 1.0)
    else:
        C3 = min(1.0, 2.0 * (p - 1.0))
        C4 = max(1.0, 2.0 * (p - 1.0))
        C7 = C3 / (p - 1.0)
        C8 = C2 * C4 / (p - 1.0)
    C5 = 1.0 + abs(p - 2.0)
    C6 = 2.0 * C5 / min(1.0, p - 1.0)
    return TightConstants(
        p=p,
        C1=C1,
        C2=C2,
        C3=C3,
        C4=C4,
        C5=C5,
        C6=C6,
        C7=C7,
        C8=C8,
        C9=min(C7, 1.0 / C8),
        C10=max(1.0 / C7, C8),
    )


@dataclass(frozen=True)
class SampleVerdict:
    """
    1標本 (a, b, p) に対する差分商の挟み込みと重み W による挟み込みの判定。

    余裕は相対値（(右辺 - 左辺) / max(|右辺|, |左辺|)）です。
    """

    a: float
    b: float
    p: float
    bound_name: str
    difference_quotient: float
    quotient_lower_margin: float
    quotient_upper_margin: float
    bound_lower_margin: float
    bound_upper_margin: float

    @property
    def worst_margin(self) -> float:
        return min(
            self.quotient_lower_margin,
            self.quotient_upper_margin,
            self.bound_lower_margin,
            self.bound_upper_margin,
        )

    @property
    def holds(self) -> bool:
        return self.worst_margin >= -INEQUALITY_RELATIVE_SLACK


def _relative_margin(smaller, larger):
    """smaller <= larger の相対余裕。"""
    smaller = np.asarray(smaller, dtype=float)
    larger = np.asarray(larger, dtype=float)
    scale = np.maximum(np.abs(smaller), np.abs(larger))
    return np.where(scale > 0, (larger - smaller) / np.where(scale > 0, scale, 1.0), 0.0)


def _sample_sides(x, p):
    """
    b^{p-2} を単位とした各辺を返します（x = a/b > 1）。

    Returns:
        (difference quotient, 和の商 (a^{p-1}+b^{p-1})/(a+b), W の正規化値)
    """
    quotient = power_quotient(x, p - 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        opposite = (np.power(x, p - 1.0) + 1.0) / (x + 1.0)
        weight = np.where(
            p >= 2.0,
            np.power(x, p - 2.0) + 1.0,
            1.0 / (np.power(x, 2.0 - p) + 1.0),
        )
    return quotient, opposite, weight


def verify_sample(a: float, b: float, p: float) -> SampleVerdict:
    """
    差分商に関する2つの挟み込みを厳密な定数で評価します（W は p >= 2 と p < 2 で形が変わる）。

        C1 (a^{p-1} - b^{p-1})/(a - b) <= (a^{p-1} + b^{p-1})/(a + b) <= C2 (a^{p-1} - b^{p-1})/(a - b)
        C3 W <= (a^{p-1} - b^{p-1})/(a - b) <= C4 W

    式は a と b について対称なので、順序はどちらでも受け付けます。

    Raises:
        DomainError: a = b、a <= 0、b <= 0、p <= 1 の場合
    """
    a = float(a)
    b = float(b)
    p = float(_check_p(p))
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"Sample values must be positive, got a={a}, b={b}")
    if a == b:
        raise DomainError(f"Sample values must differ, got a=b={a}")
    hi, lo = max(a, b), min(a, b)
    x = hi / lo
    constants = tight_constants(p)
    quotient, opposite, weight = (float(v) for v in _sample_sides(x, p))
    return SampleVerdict(
        a=a,
        b=b,
        p=p,
        bound_name=constants.bound_name,
        difference_quotient=lo ** (p - 2.0) * quotient,
        quotient_lower_margin=float(_relative_margin(constants.C1 * quotient, opposite)),
        quotient_upper_margin=float(_relative_margin(opposite, constants.C2 * quotient)),
        bound_lower_margin=float(_relative_margin(constants.C3 * weight, quotient)),
        bound_upper_margin=float(_relative_margin(quotient, constants.C4 * weight)),
    )


def envelope_weight(gv, gu, p):
    """
    包絡の重み W を返します。

    p >= 2 では |grad v|^{p-2} + |grad u|^{p-2}、p < 2 では (|grad v|^{2-p} + |grad u|^{2-p})^{-1}。
    """
    gv = np.asarray(gv, dtype=float)
    gu = np.asarray(gu, dtype=float)
    p = float(p)
    if p >= 2.0:
        value = np.power(gv, p - 2.0) + np.power(gu, p - 2.0)
    else:
        with np.errstate(divide="ignore"):
            value = 1.0 / (np.power(gv, 2.0 - p) + np.power(gu, 2.0 - p))
    return _scalar_or_array(value, gv, gu)


def _check_magnitudes(gv, gu, p: float) -> None:
    if np.any(np.asarray(gv) < 0) or np.any(np.asarray(gu) < 0):
        raise DomainError(f"Gradient magnitudes must be >= 0, got gv={gv}, gu={gu}")
    if p < 2.0 and np.any((np.asarray(gv) == 0) & (np.asarray(gu) == 0)):
        raise SingularCaseError(f"I(p) diverges for gv = gu = 0 with p={p} < 2")


def I_p_bounds(gv, gu, p: float) -> tuple:
    """
    I(p) の包絡 (C9 W, C10 W) を返します。

    Args:
        gv: |grad v| >= 0
        gu: |grad u| >= 0
        p: > 1

    Returns:
        (lower, upper)

    Raises:
        SingularCaseError: p < 2 で gv = gu = 0 の場合
    """
    p = float(_check_p(p))
    _check_magnitudes(gv, gu, p)
    c = tight_constants(p)
    W = envelope_weight(gv, gu, p)
    return c.C9 * W, c.C10 * W


def tight_envelope(gv, gu, p: float) -> tuple:
    """緩和前の包絡 (C7 W, C8 W) を返します。"""
    p = float(_check_p(p))
    _check_magnitudes(gv, gu, p)
    c = tight_constants(p)
    W = envelope_weight(gv, gu, p)
    return c.C7 * W, c.C8 * W


def collinear_I_p(gv, gu, p: float, *, opposite=False):
    """
    共線なベクトル対に対する I(p) の閉形式。

    同じ向き: (a^{p-1} - b^{p-1}) / ((p-1)(a - b))、逆向き: (a^{p-1} + b^{p-1}) / ((p-1)(a + b))。
    """
    p = float(_check_p(p))
    _check_magnitudes(gv, gu, p)
    hi = np.maximum(np.asarray(gv, dtype=float), np.asarray(gu, dtype=float))
    lo = np.minimum(np.asarray(gv, dtype=float), np.asarray(gu, dtype=float))
    opposite = np.asarray(opposite, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        safe_lo = np.where(lo > 0, lo, 1.0)
        same = np.where(
            lo > 0,
            np.power(safe_lo, p - 2.0) * power_quotient(hi / safe_lo, p - 1.0) / (p - 1.0),
            np.power(hi, p - 2.0) / (p - 1.0),
        )
        total = hi + lo
        apart = (np.power(hi, p - 1.0) + np.power(lo, p - 1.0)) / ((p - 1.0) * np.where(total > 0, total, 1.0))
        value = np.where(opposite, apart, same)
        # 両方 0 （p >= 2）: 0^{p-2}
        value = np.where(total > 0, value, 1.0 if p == 2.0 else 0.0)
    return _scalar_or_array(value, gv, gu)


def I_p_quadrature(gv_vec, gu_vec, p: float) -> float:
    """
    I(p) = int_0^1 |lambda gv + (1 - lambda) gu|^{p-2} d lambda を数値積分します。

    線分が原点を通る場合は、その点の両側で代数的特異性の重み付き求積を使います。

    Raises:
        SingularCaseError: p < 2 で両ベクトルが 0 の場合
    """
    p = float(_check_p(p))
    gv = np.atleast_1d(np.asarray(gv_vec, dtype=float))
    gu = np.atleast_1d(np.asarray(gu_vec, dtype=float))
    d = gv - gu
    dd = float(d @ d)
    if dd == 0.0:
        norm = float(np.linalg.norm(gu))
        if norm == 0.0:
            if p < 2.0:
                raise SingularCaseError(f"I(p) diverges for gv = gu = 0 with p={p} < 2")
            return 1.0 if p == 2.0 else 0.0
        return norm ** (p - 2.0)

    lam = float(np.clip(-(gu @ d) / dd, 0.0, 1.0))
    closest = gu + lam * d
    scale = math.sqrt(dd)
    if float(np.linalg.norm(closest)) <= 1e-14 * max(float(np.linalg.norm(gu)), float(np.linalg.norm(gv))):
        # |gu + lambda d| = |d| |lambda - lambda*|
        factor = scale ** (p - 2.0)
        total = 0.0
        if lam > 0.0:
            left, _ = integrate.quad(lambda s: 1.0, 0.0, lam, weight="alg", wvar=(0.0, p - 2.0))
            total += left
        if lam < 1.0:
            right, _ = integrate.quad(lambda s: 1.0, lam, 1.0, weight="alg", wvar=(p - 2.0, 0.0))
            total += right
        return factor * total

    def integrand(s: float) -> float:
        return float(np.linalg.norm(gu + s * d)) ** (p - 2.0)

    points = [lam] if 0.0 < lam < 1.0 else None
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=points, limit=200, epsabs=0.0, epsrel=1e-12)
    return value


@dataclass(frozen=True)
class MonotonicityCheck:
    """ベクトル対に対する流束差の単調性と有界性の判定。"""

    pairing: float
    pairing_lower: float
    flux_difference: float
    flux_upper: float
    I_p: float

    @property
    def holds(self) -> bool:
        slack = 1e-9
        return (
            self.pairing >= self.pairing_lower * (1.0 - slack)
            and self.flux_difference <= self.flux_upper * (1.0 + slack)
        )


def _flux(z: np.ndarray, p: float) -> np.ndarray:
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        return np.zeros_like(z)
    return norm ** (p - 2.0) * z


def monotonicity_pairing(gv_vec, gu_vec, p: float) -> MonotonicityCheck:
    """
    <a - b, |a|^{p-2} a - |b|^{p-2} b> >= min{1, p-1} |a - b|^2 I(p) と
    ||a|^{p-2} a - |b|^{p-2} b| <= C5 |a - b| I(p) を評価します。
    """
    p = float(_check_p(p))
    a = np.atleast_1d(np.asarray(gv_vec, dtype=float))
    b = np.atleast_1d(np.asarray(gu_vec, dtype=float))
    integral = I_p_quadrature(a, b, p)
    diff = a - b
    flux_diff = _flux(a, p) - _flux(b, p)
    dist = float(np.linalg.norm(diff))
    return MonotonicityCheck(
        pairing=float(diff @ flux_diff),
        pairing_lower=min(1.0, p - 1.0) * dist ** 2 * integral,
        flux_difference=float(np.linalg.norm(flux_diff)),
        flux_upper=tight_constants(p).C5 * dist * integral,
        I_p=integral,
    )


@dataclass(frozen=True)
class ScanRow:
    """走査の1行（不等式ごとの最悪余裕）。"""

    inequality: str
    samples: int
    violations: int
    worst_margin: float
    worst_a: float
    worst_b: float
    worst_p: float

    def to_dict(self) -> dict:
        return asdict(self)


def _draw_samples(rng: np.random.Generator, count: int, p_min: float, p_max: float):
    a = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), count))
    b = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), count))
    p = rng.uniform(p_min, p_max, count)
    return a, b, p


def _check_scan_args(samples: int, p_min: float, p_max: float) -> None:
    if int(samples) < 1:
        raise DomainError(f"samples must be >= 1, got {samples}")
    if not 1.0 < p_min < p_max:
        raise DomainError(f"Scan range must satisfy 1 < p_min < p_max, got [{p_min}, {p_max}]")


class _Worst:
    """不等式ごとの最悪余裕を集計します。"""

    def __init__(self, name: str, slack: float) -> None:
        self.name = name
        self.slack = slack
        self.samples = 0
        self.violations = 0
        self.margin = math.inf
        self.where = (math.nan, math.nan, math.nan)

    def update(self, margins, a, b, p) -> None:
        margins = np.asarray(margins, dtype=float)
        if margins.size == 0:
            return
        self.samples += int(margins.size)
        self.violations += int(np.count_nonzero(margins < -self.slack))
        i = int(np.argmin(margins))
        if margins[i] < self.margin:
            self.margin = float(margins[i])
            self.where = (float(a[i]), float(b[i]), float(p[i]))

    def row(self) -> ScanRow:
        return ScanRow(self.name, self.samples, self.violations, self.margin, *self.where)


def scan_inequalities(
    samples: int,
    p_min: float = SCAN_P_MIN,
    p_max: float = SCAN_P_MAX,
    seed: int = 0,
    *,
    chunk: int = 10_000,
    progress: bool = True,
) -> list[ScanRow]:
    """
    差分商の挟み込みを無作為標本で検証し、不等式ごとの最悪余裕を返します。

    a, b は (1e-3, 1e3) で対数一様、p は (p_min, p_max) で一様に抽出します。
    a = b の標本は捨てます。

    Args:
        samples: 標本数
        p_min: p の下限
        p_max: p の上限
        seed: 乱数シード
        chunk: 一度にベクトル化して評価する標本数
        progress: tqdm の進捗表示

    Returns:
        ScanRow のリスト（quotient_lower, quotient_upper, weight_high_lower, weight_high_upper, weight_low_lower, weight_low_upper）
    """
    _check_scan_args(samples, p_min, p_max)
    rng = make_rng(seed)
    names = ["quotient_lower", "quotient_upper", "weight_high_lower", "weight_high_upper", "weight_low_lower", "weight_low_upper"]
    worst = {name: _Worst(name, INEQUALITY_RELATIVE_SLACK) for name in names}

    remaining = int(samples)
    with tqdm(total=remaining, desc="[scan] inequalities", disable=not progress, file=sys.stderr) as bar:
        while remaining > 0:
            count = min(chunk, remaining)
            a, b, p = _draw_samples(rng, count, p_min, p_max)
            keep = a != b
            a, b, p = a[keep], b[keep], p[keep]
            hi, lo = np.maximum(a, b), np.minimum(a, b)
            x = hi / lo

            C1 = np.minimum(1.0, 1.0 / (p - 1.0))
            C2 = np.maximum(1.0, 1.0 / (p - 1.0))
            upper_branch = p >= 2.0
            C3 = np.where(upper_branch, np.minimum(1.0, (p - 1.0) / 2.0), np.minimum(1.0, 2.0 * (p - 1.0)))
            C4 = np.where(upper_branch, np.maximum(1.0, (p - 1.0) / 2.0), np.maximum(1.0, 2.0 * (p - 1.0)))
            quotient, opposite, weight = _sample_sides(x, p)

            worst["quotient_lower"].update(_relative_margin(C1 * quotient, opposite), a, b, p)
            worst["quotient_upper"].update(_relative_margin(opposite, C2 * quotient), a, b, p)
            lower = _relative_margin(C3 * weight, quotient)
            upper = _relative_margin(quotient, C4 * weight)
            m = upper_branch
            worst["weight_high_lower"].update(lower[m], a[m], b[m], p[m])
            worst["weight_high_upper"].update(upper[m], a[m], b[m], p[m])
            worst["weight_low_lower"].update(lower[~m], a[~m], b[~m], p[~m])
            worst["weight_low_upper"].update(upper[~m], a[~m], b[~m], p[~m])

            remaining -= count
            bar.update(count)

    return [worst[name].row() for name in names]


@dataclass(frozen=True)
class EnvelopeScan:
    """I(p) 包絡の走査結果。"""

    rows: list[ScanRow]
    ratio_min: float
    ratio_max: float
    max_quadrature_error: float


def scan_envelope(
    samples: int,
    p_min: float = SCAN_P_MIN,
    p_max: float = SCAN_P_MAX,
    seed: int = 0,
    *,
    progress: bool = True,
) -> EnvelopeScan:
    """
    無作為な共線ベクトル対で I(p) を数値積分し、包絡 [C9 W, C10 W] と [C7 W, C8 W] を検証します。

    大きさは (1e-3, 1e3) で対数一様、向きは同方向・逆方向を等確率で選びます。
    経験的な比 I(p) / W の範囲と、閉形式に対する求積誤差も報告します。
    """
    _check_scan_args(samples, p_min, p_max)
    rng = make_rng(seed)
    a, b, p = _draw_samples(rng, int(samples), p_min, p_max)
    opposite = rng.random(int(samples)) < 0.5

    names = ["envelope_lower", "envelope_upper", "tight_lower", "tight_upper"]
    worst = {name: _Worst(name, ENVELOPE_RELATIVE_SLACK) for name in names}
    ratio_min, ratio_max, quad_error = math.inf, -math.inf, 0.0

    for i in tqdm(range(int(samples)), desc="[scan] envelope", disable=not progress, file=sys.stderr):
        pi = float(p[i])
        sign = -1.0 if opposite[i] else 1.0
        integral = I_p_quadrature(np.array([a[i]]), np.array([sign * b[i]]), pi)
        exact = float(collinear_I_p(a[i], b[i], pi, opposite=bool(opposite[i])))
        quad_error = max(quad_error, abs(integral - exact) / exact)

        c = tight_constants(pi)
        W = float(envelope_weight(a[i], b[i], pi))
        ratio = integral / W
        ratio_min, ratio_max = min(ratio_min, ratio), max(ratio_max, ratio)
        one = (np.array([a[i]]), np.array([b[i]]), np.array([pi]))
        worst["envelope_lower"].update([_relative_margin(c.C9 * W, integral)], *one)
        worst["envelope_upper"].update([_relative_margin(integral, c.C10 * W)], *one)
        worst["tight_lower"].update([_relative_margin(c.C7 * W, integral)], *one)
        worst["tight_upper"].update([_relative_margin(integral, c.C8 * W)], *one)

    return EnvelopeScan(
        rows=[worst[name].row() for name in names],
        ratio_min=ratio_min,
        ratio_max=ratio_max,
        max_quadrature_error=quad_error,
    )
