"""
例外クラス定義

パッケージ内で送出される例外はすべて SensorConsensusError を基底とする。
収束しなかった反復は例外ではなく、結果オブジェクトのフラグで表す。
"""


class SensorConsensusError(Exception):
    """パッケージ共通の基底例外"""


class ParameterError(SensorConsensusError, ValueError):
    """モデルパラメータや引数が不正"""


class DegenerateThresholdError(ParameterError):
    """((1-p)/p)·(β/α) <= 1 のため閾値 δ が定義できない"""


class NonDifferentiablePointError(SensorConsensusError, ValueError):
    """プロファイル尤度の微分が存在しない点（|y_i - θ| = δ）"""


class TopologyError(SensorConsensusError, RuntimeError):
    """連結な通信グラフを生成できない"""


class ConfigError(SensorConsensusError, ValueError):
    """設定ファイル・オプションの誤り"""


class InvariantViolation(SensorConsensusError, AssertionError):
    """内部不変条件の違反（CLI では終了コード 3）"""
