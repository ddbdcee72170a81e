"""
既定値モジュール

三球面評価ツールキットの数値パラメータと既定値をまとめます。
数値パラメータは CLI の設定（JSON / フラグ）で上書きします。
環境変数（または作業ディレクトリの .env）で変えられるのは次の2つだけです。

    THREE_SPHERES_OUTPUT_DIR   出力ディレクトリ（既定 ./results）
    THREE_SPHERES_SESSION_LOG  0 / false / off でセッションログを書かない
"""

import os
from pathlib import Path

try:
    from dotenv import load_dotenv  # type: ignore[import-not-found]
except ImportError:  # pragma: no cover
    load_dotenv = None

if load_dotenv is not None:
    load_dotenv(Path.cwd() / ".env")

OUTPUT_DIR_ENV = "THREE_SPHERES_OUTPUT_DIR"
SESSION_LOG_ENV = "THREE_SPHERES_SESSION_LOG"


def _setting(name: str) -> str | None:
    """THREE_SPHERES_* の環境変数。空白だけの値は未設定として扱います。"""
    value = os.environ.get(name, "").strip()
    return value or None


def output_dir() -> Path:
    """
    出力ディレクトリを返します。

    呼び出し時に評価するので、テストから環境変数を差し替えられます。
    """
    return Path(_setting(OUTPUT_DIR_ENV) or "results")


def session_log_enabled() -> bool:
    """ENABLE_SESSION_LOG を THREE_SPHERES_SESSION_LOG で上書きした値。"""
    value = _setting(SESSION_LOG_ENV)
    if value is None:
        return ENABLE_SESSION_LOG
    return value.lower() not in ("0", "false", "off", "no")


# 幾何設定
# k < n のとき有界でない方向をスラブ |x_j| <= L に切り詰める（既定 L = SLAB_FACTOR * beta）
SLAB_FACTOR = 4.0
MAX_DIMENSION = 4
MIN_CELLS_PER_AXIS = 8
MIN_SPHERE_DENSITY = 4
DEFAULT_SPHERE_DENSITY = 256

# 障壁関数（radial barrier）設定
P_MAX = 10.0
# |q+1| がこれ未満なら対数分岐 log(t/r) を使う
LOG_BRANCH_THRESHOLD = 1e-9

# 不等式ラボ設定
# |x-1| がこれ未満なら g 関数を級数展開で評価する
SERIES_THRESHOLD = 1e-6
INEQUALITY_RELATIVE_SLACK = 1e-12
ENVELOPE_RELATIVE_SLACK = 1e-9
DEFAULT_SCAN_SAMPLES = 100_000
DEFAULT_ENVELOPE_SAMPLES = 10_000
SCAN_P_MIN = 1.01
SCAN_P_MAX = 10.0

# ソルバー設定
EPSILON_SCHEDULE = (1e-2, 1e-4, 1e-8)
SOLVER_TOLERANCE = 1e-10
SOLVER_MAX_ITERATIONS = 10_000
ARMIJO = 1e-4
CONTRACTION = 0.5
MAX_BACKTRACKS = 60
# エネルギー停滞判定（相対）
STAGNATION = 1e-14
WEAK_RESIDUAL_TRIALS = 16

# 検証設定
BOUND_TOLERANCE = 1e-6
HADAMARD_DENSITY = 4096
HADAMARD_SLACK = 1e-10
# int H^{-1} dt の発散の傾向判定しきい値（H^{-1} ~ t^gamma の gamma）
DIVERGING_EXPONENT = -1.05
BOUNDED_EXPONENT = -1.2
# S^{-2} 積分の減衰の傾向判定しきい値（Q(S) ~ S^s の s）
VANISHING_SLOPE = -0.2
PERSISTENT_SLOPE = -0.05

# CLI 設定
STUDY_CELLS = (32, 64, 128, 256)
# 3次元以上では Newton 系が重くなるため、既定の細分列を小さくする
STUDY_CELLS_BY_DIMENSION = {2: STUDY_CELLS, 3: (16, 24, 32), 4: (8, 12, 16)}
DEFAULT_SEED = 20240501

# セッションログ
ENABLE_SESSION_LOG = True
SESSION_LOG_DETAIL_MAX_CHARS = 4000
