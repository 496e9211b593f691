"""
結果保存・読み込みモジュール
出力ディレクトリへの CSV / JSON / JSON Lines / テキストの書き出し（ロック・原子的置換付き）
"""
import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from file_lock import FileLock
from logger import get_logger

logger = get_logger(__name__)

LOCK_NAME = '.ruinprob.lock'


def format_float(value: float) -> str:
    """CSV用の往復可能な17桁表記"""
    return format(float(value), '.17g')


def to_jsonable(value: Any) -> Any:
    """
    JSON に書ける値へ変換

    numpy のスカラー・配列は Python の値へ、NaN と ±∞ は None へ写す
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(data: Any) -> str:
    """決定的な JSON 文字列（キー順固定・インデント2）"""
    return json.dumps(to_jsonable(data), ensure_ascii=False, sort_keys=True,
                      indent=2, allow_nan=False) + '\n'


class ResultStore:
    """
    出力ディレクトリを管理するクラス

    書き込みは一時ファイルに書いてから os.replace で置換する。
    同じディレクトリへの並行実行は FileLock で直列化する。

    Args:
        out_dir: 出力ディレクトリ
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.lock_file = self.out_dir / LOCK_NAME

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _write(self, name: str, text: str) -> Path:
        target = self.path(name)
        tmp = target.with_name(f".{target.name}.tmp")
        with FileLock(self.lock_file):
            with open(tmp, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
            os.replace(tmp, target)
        logger.debug(f"書き込み: {target}")
        return target

    def write_text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
        """
        数値の表を CSV として保存

        Args:
            name: ファイル名
            header: 列名
            rows: 各行の数値
        """
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) for v in row])
        return self._write(name, buffer.getvalue())

    def write_json(self, name: str, data: Any) -> Path:
        return self._write(name, dumps(data))

    def write_jsonl(self, name: str, records: Iterable[Dict]) -> Path:
        """1行1レコードの JSON Lines（空なら空ファイル）"""
        lines = [json.dumps(to_jsonable(r), ensure_ascii=False, sort_keys=True, allow_nan=False)
                 for r in records]
        return self._write(name, ''.join(line + '\n' for line in lines))

    def read_json(self, name: str) -> Optional[Any]:
        if not self.exists(name):
            return None
        with open(self.path(name), 'r', encoding='utf-8') as f:
            return json.load(f)

    def read_jsonl(self, name: str) -> List[Dict]:
        if not self.exists(name):
            return []
        with open(self.path(name), 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]

    def read_csv(self, name: str) -> List[Dict[str, float]]:
        """CSV を列名→値の辞書のリストとして読む"""
        with open(self.path(name), 'r', encoding='utf-8', newline='') as f:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]
