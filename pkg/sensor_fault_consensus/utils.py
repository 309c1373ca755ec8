"""
ユーティリティ関数モジュール

ログ設定、シード導出、数値の文字列化など、各モジュールで共有する小さな関数群
"""

import hashlib
import json
import logging
import math
from typing import Any, Dict, Iterable, Optional

import numpy as np


_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbose: bool = False, level: Optional[str] = None) -> None:
    """
    ルートロガーを設定

    Parameters:
    -----------
    verbose : bool
        True なら DEBUG レベルで出力
    level : str, optional
        明示的なログレベル名（'INFO', 'WARNING' など）。verbose より優先
    """
    if level is not None:
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            resolved = logging.INFO
    else:
        resolved = logging.DEBUG if verbose else logging.INFO

    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=resolved, format=_LOG_FORMAT)
    root.setLevel(resolved)


def mix_seed(*parts: Any) -> int:
    """
    複数の値から安定した 64bit シードを導出

    実行順序やプロセス数に依存しない。同じ parts なら常に同じ値を返す。

    Parameters:
    -----------
    *parts : Any
        base_seed, n, トポロジ名, 試行番号 など（repr が安定な値）

    Returns:
    --------
    seed : int
        0 <= seed < 2**64
    """
    payload = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int) -> np.random.Generator:
    """シードから numpy の Generator（PCG64）を生成"""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def format_float(value: Any) -> str:
    """
    数値を最短の往復可能な10進表現に変換

    Parameters:
    -----------
    value : Any
        float / int / bool / None / str

    Returns:
    --------
    formatted : str
    """
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def config_hash(resolved: Dict[str, Any]) -> str:
    """解決済み設定の SHA-256 ハッシュ（先頭16文字）"""
    canonical = json.dumps(resolved, sort_keys=True, default=format_float)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def pairwise_mean(values: Iterable[float]) -> float:
    """
    numpy のペアワイズ加算による平均

    要素の並び順が同じなら、スレッド数に関わらず同じ値になる。
    """
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return float("nan")
    return float(np.sum(arr) / arr.size)
