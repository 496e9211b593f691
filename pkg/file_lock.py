"""
ファイルロック機構
同じ出力ディレクトリへの複数プロセスからの同時書き込みを防止
"""
import os
import time
from pathlib import Path

from logger import get_logger

logger = get_logger(__name__)


class FileLock:
    """
    排他的なファイル作成による簡易ロック

    Args:
        lock_file_path: ロックファイルのパス
        timeout: ロック取得のタイムアウト秒数
        stale_after: これより古いロックは放棄されたものとみなす秒数
    """

    def __init__(self, lock_file_path, timeout: float = 10, stale_after: float = 60):
        self.lock_file_path = Path(lock_file_path)
        self.timeout = timeout
        self.stale_after = stale_after
        self.acquired = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.release()

    def acquire(self):
        """
        ロックを取得

        Raises:
            TimeoutError: タイムアウト時（古いロックは削除して再試行する）
        """
        start_time = time.time()

        while True:
            try:
                fd = os.open(self.lock_file_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                lock_info = f"PID: {os.getpid()}\nTime: {time.time()}\n"
                os.write(fd, lock_info.encode('utf-8'))
                os.close(fd)
                self.acquired = True
                return

            except FileExistsError:
                elapsed = time.time() - start_time
                if elapsed >= self.timeout:
                    if self._is_stale_lock():
                        logger.warning(f"古いロックを削除します: {self.lock_file_path}")
                        self._force_release()
                        continue
                    raise TimeoutError(
                        f"timed out after {self.timeout}s waiting for {self.lock_file_path}; "
                        f"another run may be writing to the same output directory")
                time.sleep(0.1)

    def release(self):
        """ロックを解放"""
        if self.acquired:
            try:
                self.lock_file_path.unlink(missing_ok=True)
            except OSError:
                pass
            self.acquired = False

    def _is_stale_lock(self) -> bool:
        try:
            if not self.lock_file_path.exists():
                return True
            age = time.time() - self.lock_file_path.stat().st_mtime
            return age > self.stale_after
        except OSError:
            # 判定できない場合は古くないとみなす
            return False

    def _force_release(self):
        try:
            self.lock_file_path.unlink(missing_ok=True)
        except OSError:
            pass
