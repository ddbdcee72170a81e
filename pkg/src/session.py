"""
セッション管理モジュール

実行ごとのセッションログの記録を行います。
CLI の各実行は <output_dir>/<開始時刻>-session.log にイベントを追記します。
ログは決定的な成果物ではありません（CSV / JSON が成果物です）。
"""

from datetime import datetime
from pathlib import Path

from .config import SESSION_LOG_DETAIL_MAX_CHARS, session_log_enabled


# セッション開始時刻
_SESSION_START_DT = datetime.now()
_SESSION_START_STAMP = _SESSION_START_DT.strftime("%Y%m%d_%H%M%S")

# セッションログファイルのパス（init_session で設定される）
SESSION_LOG_PATH: Path | None = None

_COMMAND: str | None = None
_SEED: int | None = None


def init_session(*, command: str, seed: int | None, output_dir: Path) -> Path | None:
    """
    セッションログの出力先を設定します。

    Args:
        command: 実行中のサブコマンド
        seed: 乱数シード
        output_dir: 出力ディレクトリ

    Returns:
        セッションログのパス（無効化されていれば None）
    """
    global SESSION_LOG_PATH, _COMMAND, _SEED
    _COMMAND = command
    _SEED = seed
    if not session_log_enabled():
        SESSION_LOG_PATH = None
        return None
    SESSION_LOG_PATH = Path(output_dir) / f"{_SESSION_START_STAMP}-session.log"
    return SESSION_LOG_PATH


def _compact_detail(detail: str, limit: int) -> str:
    """
    イベントの詳細を1行にまとめます。

    空行を除いた各行の前後の空白を落として " | " でつなぎます。
    limit を超える分は "... (+N chars)" に置き換えます。
    """
    parts = [line.strip() for line in detail.splitlines() if line.strip()]
    text = " | ".join(parts)
    if len(text) <= limit:
        return text
    return f"{text[:limit]}... (+{len(text) - limit} chars)"


def _append_session_line(line: str) -> None:
    """
    セッションログファイルに行を追加します。

    Args:
        line: 追加する行
    """
    if SESSION_LOG_PATH is None:
        return
    SESSION_LOG_PATH.parent.mkdir(parents=True, exist_ok=True)
    with SESSION_LOG_PATH.open("a", encoding="utf-8") as f:
        f.write(line.rstrip("\n") + "\n")


def _ensure_session_header() -> None:
    """
    セッションログファイルにヘッダーを書き込みます（まだ存在しない場合）。
    """
    if SESSION_LOG_PATH is None or SESSION_LOG_PATH.exists():
        return
    SESSION_LOG_PATH.parent.mkdir(parents=True, exist_ok=True)
    header = (
        f"session_start={_SESSION_START_DT.isoformat(timespec='seconds')}\n"
        f"command={_COMMAND}\n"
        f"seed={_SEED}\n"
        "---\n"
    )
    SESSION_LOG_PATH.write_text(header, encoding="utf-8")


def log_session_event(*, step: int, kind: str, detail: str) -> None:
    """
    セッションイベントをログに記録します。

    Args:
        step: ステップ番号
        kind: イベントの種類（config / stage / artifact / verdict など）
        detail: イベントの詳細
    """
    if SESSION_LOG_PATH is None:
        return
    _ensure_session_header()
    ts = datetime.now().isoformat(timespec="seconds")
    text = _compact_detail(detail, SESSION_LOG_DETAIL_MAX_CHARS)
    _append_session_line(f"[{ts}] step={step} kind={kind}\n{text}\n")
