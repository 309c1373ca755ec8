"""
Sensor Fault Consensus - センサネットワークの分散推定と故障センサ分類

各センサは θ* を正常（ノイズ α）または故障（ノイズ β）の状態で観測する。
このパッケージは、近傍との平均化だけで θ* の推定とセンサの分類を同時に行う
入力駆動コンセンサスアルゴリズム（IA）と、その比較対象（集中型 ML・IML・EM）、
漸近誤差の評価、モンテカルロ実験の実行環境を提供します。

主要クラス:
    - ModelParams: 生成モデルのパラメータ（δ を計算）
    - ConsensusMatrix: コンセンサス行列とスペクトル情報
    - GammaSchedule / StopRule: IA のステップサイズと停止規則
    - ExperimentConfig / SweepReport: スイープ実験

主要関数:
    - generate: データ生成
    - enumerate_stationary / ml_solution: プロファイル尤度の停留点と ML 解
    - ia_run: IA の実行
    - em_run / iml_run: 集中型ベースライン
    - limit_classification_error: 漸近分類誤差 q(p, α, β)
    - run_sweep: モンテカルロ・スイープ

使用例:
    >>> from sensor_fault_consensus import ModelParams, generate, build_topology, metropolis, lazy
    >>> from sensor_fault_consensus import GammaSchedule, ia_run
    >>>
    >>> params = ModelParams()
    >>> obs = generate(params, n=64, seed=7)
    >>> matrix = lazy(metropolis(build_topology('ring', 64)), 0.5)
    >>> result = ia_run(obs.y, matrix, GammaSchedule.power(0.7), params)
    >>> result.theta_limit, result.converged
"""

__version__ = "1.0.0"

from .asymptotics import AsymptoticReport, clairvoyant_error, erfc, limit_classification_error, limit_profile
from .baselines import IterativeResult, em_run, em_threshold_gap, iml_run
from .config import Config, get_config
from .exceptions import (
    ConfigError,
    DegenerateThresholdError,
    InvariantViolation,
    NonDifferentiablePointError,
    ParameterError,
    SensorConsensusError,
    TopologyError,
)
from .graph import (
    ConsensusMatrix,
    HypothesisReport,
    Topology,
    TopologyKind,
    build_topology,
    edge_list_dump,
    ensure_positive_spectrum,
    lazy,
    metropolis,
    validate_theorem_hypotheses,
)
from .ia import (
    GammaFamily,
    GammaSchedule,
    IaRunResult,
    NetworkState,
    StopRule,
    consensus_diagnostics,
    ia_init,
    ia_run,
    ia_step,
)
from .likelihood import (
    StationarySet,
    enumerate_stationary,
    log_likelihood,
    ml_solution,
    profile_derivative,
    profile_segments,
    profile_value,
)
from .model import Label, ModelParams, Observations, classify, delta_threshold, generate, mixture_density, weighted_theta
from .montecarlo import AlgorithmKind, AlgorithmSpec, ExperimentConfig, SweepReport, TopologySpec, hamming_error, run_sweep

__all__ = [
    "AlgorithmKind",
    "AlgorithmSpec",
    "AsymptoticReport",
    "Config",
    "ConfigError",
    "ConsensusMatrix",
    "DegenerateThresholdError",
    "ExperimentConfig",
    "GammaFamily",
    "GammaSchedule",
    "HypothesisReport",
    "IaRunResult",
    "InvariantViolation",
    "IterativeResult",
    "Label",
    "ModelParams",
    "NetworkState",
    "NonDifferentiablePointError",
    "Observations",
    "ParameterError",
    "SensorConsensusError",
    "StationarySet",
    "StopRule",
    "SweepReport",
    "Topology",
    "TopologyError",
    "TopologyKind",
    "TopologySpec",
    "build_topology",
    "clairvoyant_error",
    "classify",
    "consensus_diagnostics",
    "delta_threshold",
    "edge_list_dump",
    "em_run",
    "em_threshold_gap",
    "enumerate_stationary",
    "ensure_positive_spectrum",
    "erfc",
    "generate",
    "get_config",
    "hamming_error",
    "ia_init",
    "ia_run",
    "ia_step",
    "iml_run",
    "lazy",
    "limit_classification_error",
    "limit_profile",
    "log_likelihood",
    "metropolis",
    "ml_solution",
    "mixture_density",
    "profile_derivative",
    "profile_segments",
    "profile_value",
    "run_sweep",
    "validate_theorem_hypotheses",
    "weighted_theta",
]
