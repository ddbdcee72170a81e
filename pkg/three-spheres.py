"""
三球面評価ツールキットの実行スクリプト

src.main のコマンドラインを呼び出します。
"""

from src.main import main

if __name__ == "__main__":
    raise SystemExit(main())
