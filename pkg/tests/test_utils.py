"""
ユーティリティ、設定、セッションログのテスト
"""

import math

import numpy as np
import pytest

from src import config, session
from src.utils import (
    format_float,
    loglog_slope,
    make_rng,
    observed_orders,
    rle_decode,
    rle_encode,
)


class TestFormatting:
    """CSV の数値整形。"""

    @pytest.mark.parametrize(
        "value,text",
        [(0.1, "0.1"), (1.0, "1.0"), (math.nan, "nan"), (math.inf, "inf"), (-math.inf, "-inf")],
    )
    def test_format_float(self, value, text):
        assert format_float(value) == text

    def test_format_float_round_trips(self):
        x = 1.0 / 3.0
        assert float(format_float(x)) == x


class TestRunLength:
    """マスクのランレングス符号。"""

    def test_known_runs(self):
        mask = np.array([[0, 0, 1], [1, 2, 2]], dtype=np.int8)
        assert rle_encode(mask) == [[0, 2], [1, 2], [2, 2]]
        assert np.array_equal(rle_decode([[0, 2], [1, 2], [2, 2]], (2, 3)), mask)

    def test_empty(self):
        assert rle_encode(np.zeros((0,), dtype=np.int8)) == []

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rle_decode([[0, 5]], (2, 3))


class TestNumerics:
    """乱数と傾き推定。"""

    def test_rng_is_deterministic(self):
        assert np.array_equal(make_rng(5).normal(size=4), make_rng(5).normal(size=4))

    def test_loglog_slope_of_power(self):
        x = np.geomspace(1.0, 100.0, 20)
        assert loglog_slope(x, 3.0 * x ** -1.5) == pytest.approx(-1.5, abs=1e-12)

    def test_loglog_slope_needs_two_points(self):
        assert math.isnan(loglog_slope([1.0, 2.0], [1.0, 0.0]))

    def test_observed_orders(self):
        h = [0.1, 0.05, 0.025]
        assert observed_orders(h, [4e-2, 1e-2, 2.5e-3]) == pytest.approx([2.0, 2.0])
        assert math.isnan(observed_orders(h, [1e-2, 0.0, 1e-3])[0])


class TestConfig:
    """環境変数による出力先の上書き。"""

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("THREE_SPHERES_OUTPUT_DIR", str(tmp_path))
        assert config.output_dir() == tmp_path

    def test_blank_value_falls_back(self, monkeypatch):
        monkeypatch.setenv("THREE_SPHERES_OUTPUT_DIR", "   ")
        assert config.output_dir().name == "results"


class TestSessionLog:
    """セッションログへの追記。"""

    def test_events_are_appended(self, tmp_path):
        path = session.init_session(command="barrier", seed=3, output_dir=tmp_path)
        session.log_session_event(step=1, kind="config", detail="line one\nline two")
        session.log_session_event(step=2, kind="verdict", detail="ok")
        text = path.read_text(encoding="utf-8")
        assert "command=barrier" in text and "seed=3" in text
        assert "step=1 kind=config" in text and "line one | line two" in text
        assert text.index("step=1") < text.index("step=2")

    def test_disabled_log(self, monkeypatch, tmp_path):
        monkeypatch.setenv("THREE_SPHERES_SESSION_LOG", "off")
        assert session.init_session(command="solve", seed=0, output_dir=tmp_path) is None
        session.log_session_event(step=1, kind="config", detail="ignored")
        assert list(tmp_path.iterdir()) == []

    def test_log_enabled_by_default(self, monkeypatch):
        monkeypatch.delenv("THREE_SPHERES_SESSION_LOG", raising=False)
        assert config.session_log_enabled() is config.ENABLE_SESSION_LOG

    @pytest.mark.parametrize("value,enabled", [("0", False), ("False", False), ("no", False), ("1", True), ("on", True)])
    def test_environment_switch(self, monkeypatch, value, enabled):
        monkeypatch.setenv("THREE_SPHERES_SESSION_LOG", value)
        assert config.session_log_enabled() is enabled


class TestCompactDetail:
    """ログ詳細の1行化。"""

    def test_lines_are_joined(self):
        assert session._compact_detail("  a\r\n\nb  \nc", 100) == "a | b | c"

    def test_long_detail_reports_dropped_length(self):
        assert session._compact_detail("x" * 10, 4) == "xxxx... (+6 chars)"

    def test_exact_limit_is_kept(self):
        assert session._compact_detail("abcd", 4) == "abcd"
