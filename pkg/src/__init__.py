"""
three-spheres パッケージ

p-調和関数に対する k-環状領域上の三球面評価を、数値的に構成・検証するためのパッケージです。

モジュール構成:
- config: 既定値と定数の管理
- errors: 例外の階層
- utils: 汎用ユーティリティ関数
- geometry: k-環状領域、格子、球面の標本化
- stencil: セル勾配ステンシル（エネルギー、勾配、Hessian）
- barrier: 動径障壁関数 u0
- inequalities: 一次元不等式と I(p) 包絡の検証
- solver: p-ラプラス Dirichlet 問題のソルバー
- verifier: 三球面評価と条件の診断、古典的な三円定理
- fieldio: 場のバイナリと JSON サイドカーの入出力
- session: セッション管理とログ記録
- main: コマンドライン
"""

__version__ = "1.0.0"

from . import barrier
from . import config
from . import errors
from . import fieldio
from . import geometry
from . import inequalities
from . import main
from . import session
from . import solver
from . import stencil
from . import utils
from . import verifier

__all__ = [
    "barrier",
    "config",
    "errors",
    "fieldio",
    "geometry",
    "inequalities",
    "main",
    "session",
    "solver",
    "stencil",
    "utils",
    "verifier",
]
