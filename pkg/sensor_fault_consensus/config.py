"""
設定管理モジュール

デフォルト値 < settings.yaml < 環境変数 < key=value ファイル < コマンドライン
の優先順位で設定を解決し、pydantic で検証した Settings として提供する
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .exceptions import ConfigError


# デフォルト設定（config/settings.yaml が無い環境でもこの値で動く）
DEFAULT_CONFIG: Dict[str, Any] = {
    'debug': {'mode': False, 'verbose': False, 'log_level': None},
    'model': {'theta_star': 0.0, 'alpha': 0.3, 'beta': 10.0, 'p': 0.25},
    'graph': {
        'spectral_cap': 2048,
        'rgg_radius': 0.3,
        'rgg_retry_cap': 100,
        'lazy_tau': None,
    },
    'ia': {
        'gamma_family': 'power',
        'zeta': 0.7,
        'log_exponent': 1.0,
        't_offset': None,
        'stop_mode': 'fixed_point',
        'window': 500,
        'eps': 1e-10,
        'eps_consensus': 1e-8,
        't_max': 1_000_000,
        'trace_every': 1,
    },
    'baselines': {'eps': 1e-10, 'max_iter': 10_000},
    'montecarlo': {'mc_runs': 400, 'base_seed': 0, 'n_jobs': 1},
    'run': {
        'algo': 'ia',
        'n': None,
        'seed': 0,
        'topology': 'complete',
        'rows': None,
        'cols': None,
    },
    'sweep': {
        'n_values': [10, 50, 100, 500, 1000],
        'topologies': ['complete', 'ring', 'torus', 'rgg'],
        'algorithms': ['ia', 'em', 'iml', 'ml'],
        'zetas': [0.5, 0.7, 0.9],
    },
    'curve': {'points': 4001, 'limit_curve': False},
    'asymptotics': {
        'p_values': [0.4, 0.25, 0.1, 0.01, 0.001, 1e-6],
        'ratios': [1.001, 1.5, 3.0, 10.0, 33.333333333333336, 100.0],
    },
    'output': {'format': 'csv'},
}

# 環境変数 → 設定キー
ENV_OVERRIDES = {
    'SFC_LOG_LEVEL': 'debug.log_level',
    'SFC_VERBOSE': 'debug.verbose',
    'SFC_N_JOBS': 'montecarlo.n_jobs',
    'SFC_SPECTRAL_CAP': 'graph.spectral_cap',
}


def _split_list(value: Any) -> Any:
    """'0.5,0.7' のようなカンマ区切り文字列をリストに変換"""
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DebugSettings(_Section):
    mode: bool = False
    verbose: bool = False
    log_level: Optional[str] = None


class ModelSettings(_Section):
    theta_star: float = 0.0
    alpha: float = 0.3
    beta: float = 10.0
    p: float = 0.25


class GraphSettings(_Section):
    spectral_cap: int = 2048
    rgg_radius: float = 0.3
    rgg_retry_cap: int = 100
    lazy_tau: Optional[float] = None


class IaSettings(_Section):
    gamma_family: Literal['power', 'log_power'] = 'power'
    zeta: float = 0.7
    log_exponent: float = 1.0
    t_offset: Optional[int] = None
    stop_mode: Literal['fixed_point', 'absolute'] = 'fixed_point'
    window: int = 500
    eps: float = 1e-10
    eps_consensus: float = 1e-8
    t_max: int = 1_000_000
    trace_every: int = 1


class BaselineSettings(_Section):
    eps: float = 1e-10
    max_iter: int = 10_000


class MonteCarloSettings(_Section):
    mc_runs: int = 400
    base_seed: int = 0
    n_jobs: int = 1


class RunSettings(_Section):
    algo: Literal['ia', 'em', 'iml', 'ml'] = 'ia'
    n: Optional[int] = None
    seed: int = 0
    topology: Literal['complete', 'ring', 'torus', 'rgg'] = 'complete'
    rows: Optional[int] = None
    cols: Optional[int] = None


class SweepSettings(_Section):
    n_values: List[int]
    topologies: List[Literal['complete', 'ring', 'torus', 'rgg']]
    algorithms: List[Literal['ia', 'em', 'iml', 'ml']]
    zetas: List[float]

    @field_validator('n_values', 'topologies', 'algorithms', 'zetas', mode='before')
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)


class CurveSettings(_Section):
    points: int = 4001
    limit_curve: bool = False


class AsymptoticsSettings(_Section):
    p_values: List[float]
    ratios: List[float]

    @field_validator('p_values', 'ratios', mode='before')
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)


class OutputSettings(_Section):
    format: Literal['csv', 'json'] = 'csv'


class Settings(_Section):
    """検証済みの設定一式"""

    debug: DebugSettings
    model: ModelSettings
    graph: GraphSettings
    ia: IaSettings
    baselines: BaselineSettings
    montecarlo: MonteCarloSettings
    run: RunSettings
    sweep: SweepSettings
    curve: CurveSettings
    asymptotics: AsymptoticsSettings
    output: OutputSettings


def _deep_update(base: Dict[str, Any], other: Dict[str, Any], prefix: str = '') -> None:
    for key, value in other.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"Unknown config key: {dotted}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config section expected for key: {dotted}")
            _deep_update(base[key], value, prefix=f"{dotted}.")
        else:
            base[key] = value


def parse_scalar(text: str) -> Any:
    """key=value の値部分を YAML スカラーとして解釈（数値・真偽値・null）"""
    text = text.strip()
    if text == '':
        return None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def load_kv_file(filepath: Union[str, Path]) -> Dict[str, Any]:
    """
    フラットな key=value 形式の設定ファイルを読み込み

    空行と '#' で始まる行は無視する。

    Args:
        filepath: 設定ファイルのパス

    Returns:
        ドット記法のキーをもつ辞書
    """
    path = Path(filepath)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    values: Dict[str, Any] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split('=', 1)
            values[key.strip()] = parse_scalar(value)
    return values


class Config:
    """
    設定管理クラス

    ドット記法（"model.alpha" など）で値を読み書きする
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None, use_env: bool = True):
        """
        Args:
            config_path: YAML 設定ファイルのパス。None の場合はデフォルトパス（存在すれば）
            use_env: 環境変数による上書きを有効にするか
        """
        self._config = copy.deepcopy(DEFAULT_CONFIG)

        if config_path is None:
            default_path = Path(__file__).parent.parent / "config" / "settings.yaml"
            self.config_path = default_path if default_path.exists() else None
        else:
            self.config_path = Path(config_path)
            if not self.config_path.exists():
                raise ConfigError(f"Config file not found: {self.config_path}")

        if self.config_path is not None:
            self._load_yaml(self.config_path)

        if use_env:
            self._load_from_env()

    def _load_yaml(self, path: Path) -> None:
        """YAML 設定ファイルを読み込み"""
        with open(path, 'r', encoding='utf-8') as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Top-level mapping expected in {path}")
        _deep_update(self._config, loaded)

    def _load_from_env(self) -> None:
        """環境変数から読み込み"""
        for env_name, key in ENV_OVERRIDES.items():
            value = os.getenv(env_name)
            if value is not None:
                self.set(key, parse_scalar(value))

    def get(self, key: str, default: Any = None) -> Any:
        """
        ドット記法で設定値を取得

        Examples:
            >>> config = Config(use_env=False)
            >>> config.get("model.alpha")
            0.3
        """
        value: Any = self._config
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """
        設定値を変更（メモリ上のみ）

        存在しないキーは ConfigError
        """
        keys = key.split('.')
        node = self._config
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ConfigError(f"Unknown config key: {key}")
            node = node[k]
        if keys[-1] not in node or isinstance(node[keys[-1]], dict):
            raise ConfigError(f"Unknown config key: {key}")
        node[keys[-1]] = value

    def update(self, overrides: Dict[str, Any]) -> None:
        """ドット記法キーの辞書でまとめて上書き"""
        for key, value in overrides.items():
            self.set(key, value)

    def load_kv(self, filepath: Union[str, Path]) -> None:
        """key=value ファイルを読み込んで上書き"""
        self.update(load_kv_file(filepath))

    def settings(self) -> Settings:
        """pydantic で検証した Settings を返す"""
        try:
            return Settings.model_validate(self._config)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def resolved(self) -> Dict[str, Any]:
        """検証・型変換後の値をフラットなドット記法辞書で返す（出力ヘッダ用）"""
        flat: Dict[str, Any] = {}

        def walk(node: Dict[str, Any], prefix: str) -> None:
            for k, v in node.items():
                if isinstance(v, dict):
                    walk(v, f"{prefix}{k}.")
                else:
                    flat[f"{prefix}{k}"] = v

        walk(self.settings().model_dump(), '')
        return flat

    def __repr__(self) -> str:
        return f"Config(config_path={self.config_path})"

    def __str__(self) -> str:
        return yaml.dump(self._config, allow_unicode=True, default_flow_style=False)


# グローバル設定インスタンス
_global_config: Optional[Config] = None


def get_config(config_path: Optional[Union[str, Path]] = None) -> Config:
    """
    グローバル設定インスタンスを取得

    Args:
        config_path: 設定ファイルのパス（指定時は読み直す）

    Returns:
        Config インスタンス
    """
    global _global_config

    if _global_config is None or config_path is not None:
        _global_config = Config(config_path)

    return _global_config
