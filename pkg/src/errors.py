"""
例外モジュール

ツールキット全体で使う例外クラスを定義します。
CLI はこれらを終了コードと機械可読なエラー JSON に変換します。
"""


class ToolkitError(Exception):
    """ツールキット例外の基底クラス。"""


class DomainError(ToolkitError, ValueError):
    """引数が数学的な定義域の外にある場合（k の範囲外、t が (alpha, beta) の外など）。"""


class ConfigurationError(ToolkitError, ValueError):
    """構成パラメータが不正な場合（cells_per_axis < 8、不正な ε スケジュールなど）。"""


class DegeneracyError(ToolkitError, ValueError):
    """正規化が定義できない場合（M(R) <= M(r) など）。"""


class SingularCaseError(ToolkitError, ValueError):
    """p < 2 で両方の勾配が 0 となる特異ケース。"""


class SolverConvergenceError(ToolkitError, RuntimeError):
    """
    ソルバーが max_iterations 以内に収束しなかった場合。

    途中結果を黙って返さないため、最良の反復値と報告を保持します。
    """

    def __init__(self, message: str, *, field, report) -> None:
        super().__init__(message)
        self.field = field
        self.report = report
