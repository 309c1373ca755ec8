"""
結果出力モジュール

表（DataFrame）を CSV / JSON で書き出す。CSV の先頭には '#' で始まる
コメント行として解決済みの設定とそのハッシュを書き、同じ設定なら
本文はバイト単位で一致する。
"""

import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, TextIO, Union

import numpy as np
import pandas as pd

from .utils import config_hash, format_float

logger = logging.getLogger(__name__)

Output = Optional[Union[str, Path, TextIO]]


def _native(value: Any) -> Any:
    """numpy の値を JSON に書ける Python の値に変換"""
    if isinstance(value, np.ndarray):
        return [_native(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, dict):
        return {str(k): _native(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_native(v) for v in value]
    if value is pd.NA:
        return None
    return value


def comment_header(resolved: Dict[str, Any]) -> List[str]:
    """'# config_hash=...' と '# key=value' の行（キー順）"""
    lines = [f"# config_hash={config_hash(resolved)}"]
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, (list, tuple)):
            text = ",".join(format_float(v) for v in value)
        else:
            text = format_float(value)
        lines.append(f"# {key}={text}")
    return lines


def format_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """全セルを最短の往復可能な10進表現の文字列に変換"""
    formatted = frame.astype(object).where(frame.notna(), None)
    return formatted.map(format_float)


@contextmanager
def _open_output(output: Output) -> Iterator[TextIO]:
    if output is None:
        yield sys.stdout
    elif hasattr(output, 'write'):
        yield output
    else:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            yield f
        logger.info("wrote %s", path)


class ReportWriter:
    """
    結果の書き出しクラス

    resolved は Config.resolved() の出力（ヘッダとして毎回書く）
    """

    def __init__(self, resolved: Optional[Dict[str, Any]] = None, fmt: str = 'csv'):
        self.resolved = dict(resolved or {})
        self.fmt = fmt
        if fmt not in ('csv', 'json'):
            raise ValueError(f"unknown output format: {fmt}")

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)

    def write_table(self, frame: pd.DataFrame, output: Output = None) -> None:
        """DataFrame を設定の形式で書き出す"""
        with _open_output(output) as f:
            if self.fmt == 'csv':
                self._write_csv(frame, f)
            else:
                self._write_json({'rows': self._records(frame)}, f)

    def write_summary(self, summary: Dict[str, Any], output: Output = None) -> None:
        """1件の結果（dict）を JSON で書き出す"""
        with _open_output(output) as f:
            self._write_json({'summary': summary}, f)

    def write_text(self, lines: List[str], output: Output = None) -> None:
        """コメントヘッダ付きのプレーンテキスト（辺リストなど）"""
        with _open_output(output) as f:
            for line in comment_header(self.resolved) + list(lines):
                f.write(line + "\n")

    def _write_csv(self, frame: pd.DataFrame, f: TextIO) -> None:
        for line in comment_header(self.resolved):
            f.write(line + "\n")
        format_frame(frame).to_csv(f, index=False, lineterminator="\n")

    def _write_json(self, payload: Dict[str, Any], f: TextIO) -> None:
        document = {
            'config_hash': self.config_hash,
            'config': _native(self.resolved),
        }
        document.update(_native(payload))
        f.write(json.dumps(document, indent=2, sort_keys=False, allow_nan=True))
        f.write("\n")

    @staticmethod
    def _records(frame: pd.DataFrame) -> List[Dict[str, Any]]:
        records = frame.astype(object).where(frame.notna(), None).to_dict(orient='records')
        return [_native(r) for r in records]
