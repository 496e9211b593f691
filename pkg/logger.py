#!/usr/bin/env python3
"""
ロギング設定モジュール
ライブラリ・CLI全体で統一されたログ出力を提供
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional


class RuinLogger:
    """破産確率ソルバー用のロガー"""

    _instance = None
    _initialized = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._initialized:
            return

        self._initialized = True
        self.log_file: Optional[Path] = None
        self.setup_logging()

    @staticmethod
    def get_log_dir() -> Path:
        """
        ログディレクトリを取得

        Returns:
            環境変数 RUIN_LOG_DIR、未設定時は ~/.ruinprob
        """
        env_dir = os.environ.get('RUIN_LOG_DIR')
        if env_dir:
            return Path(env_dir).expanduser()
        return Path.home() / '.ruinprob'

    def setup_logging(self):
        """ロギングの設定"""
        logger = logging.getLogger('ruinprob')
        logger.setLevel(logging.DEBUG)
        logger.propagate = False

        # 既存のハンドラをクリア
        logger.handlers.clear()

        # ファイルハンドラ（詳細ログ）。書き込めない環境ではコンソールのみ
        try:
            log_dir = self.get_log_dir()
            log_dir.mkdir(parents=True, exist_ok=True)
            log_file = log_dir / 'ruinprob.log'
            file_handler = logging.FileHandler(log_file, encoding='utf-8')
        except OSError:
            file_handler = None

        if file_handler is not None:
            file_handler.setLevel(logging.DEBUG)
            file_formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            file_handler.setFormatter(file_formatter)
            logger.addHandler(file_handler)
            self.log_file = log_file

        # コンソールハンドラ（重要なログのみ）。stderrはCLIのエラー行専用
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(logging.INFO)
        console_formatter = logging.Formatter(
            '%(asctime)s - %(levelname)s - %(message)s',
            datefmt='%H:%M:%S'
        )
        console_handler.setFormatter(console_formatter)
        logger.addHandler(console_handler)

        logger.debug("=" * 60)
        logger.debug("ruinprob 起動")
        logger.debug(f"ログファイル: {self.log_file}")

    def get_logger(self, name: str = 'ruinprob') -> logging.Logger:
        """
        ロガーを取得

        Args:
            name: ロガー名（モジュール名を推奨）

        Returns:
            ロガーインスタンス（ruinprob 配下）
        """
        if name == 'ruinprob' or name.startswith('ruinprob.'):
            return logging.getLogger(name)
        return logging.getLogger(f'ruinprob.{name}')


# シングルトンインスタンス
_logger_instance = RuinLogger()


def get_logger(name: str = 'ruinprob') -> logging.Logger:
    """
    ロガーを取得する便利関数

    Args:
        name: ロガー名

    Returns:
        ロガーインスタンス

    Example:
        >>> from logger import get_logger
        >>> logger = get_logger(__name__)
        >>> logger.info("求解を開始しました")
    """
    return _logger_instance.get_logger(name)


def log_exception(logger: logging.Logger, message: str, exc: Exception):
    """
    例外情報を含むエラーログを出力

    Args:
        logger: ロガーインスタンス
        message: エラーメッセージ
        exc: 例外オブジェクト
    """
    logger.error(f"{message}: {type(exc).__name__}: {str(exc)}", exc_info=True)
