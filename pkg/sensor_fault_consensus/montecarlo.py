"""
モンテカルロ実験モジュール

(N, トポロジ, アルゴリズム) の各セルで mc_runs 回の試行を行い、
相対分類誤差 d_H/N と (θ̂ - θ*)² を集計する。

各試行のシードは (base_seed, n, 試行番号) などから導出するので、
実行順序やプロセス数が変わっても結果は同じになる。
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from multiprocessing import Pool
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .baselines import DEFAULT_EPS, DEFAULT_MAX_ITER, em_run, iml_run
from .exceptions import ParameterError
from .graph import (
    DEFAULT_RGG_RETRY_CAP,
    DEFAULT_SPECTRAL_CAP,
    ConsensusMatrix,
    TopologyKind,
    build_topology,
    complete_matrix,
    lazy,
    metropolis,
)
from .ia import GammaFamily, GammaSchedule, StopRule, ia_run
from .likelihood import ml_solution
from .model import ModelParams, generate
from .utils import mix_seed, pairwise_mean

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    'n', 'topology', 'algorithm', 'zeta', 'mc_runs',
    'mean_class_err', 'std_class_err', 'mse_theta', 'mean_iters', 'nonconverged',
]

TRIAL_COLUMNS = [
    'n', 'topology', 'algorithm', 'zeta', 'trial',
    'class_err', 'sq_err', 'theta', 'iterations', 'converged', 'theta_in_range',
]

# 分散アルゴリズムではない手法の topology 列
CENTRALIZED = 'centralized'


def hamming_error(omega_est: np.ndarray, omega_true: np.ndarray) -> int:
    """d_H(x, z) = |{i : x_i ≠ z_i}|"""
    est = np.asarray(omega_est)
    true = np.asarray(omega_true)
    if est.shape != true.shape:
        raise ParameterError(f"label vectors differ in length: {est.size} != {true.size}")
    return int(np.count_nonzero(est != true))


class AlgorithmKind(str, Enum):
    IA = "ia"
    EM = "em"
    IML = "iml"
    ML_EXACT = "ml"


@dataclass(frozen=True)
class AlgorithmSpec:
    """
    実験で使うアルゴリズム

    IA のみ γ スケジュール（zeta または log_exponent）をもつ
    """

    kind: AlgorithmKind
    zeta: Optional[float] = None
    gamma_family: GammaFamily = GammaFamily.POWER
    log_exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', AlgorithmKind(self.kind))
        object.__setattr__(self, 'gamma_family', GammaFamily(self.gamma_family))
        if self.kind is AlgorithmKind.IA and self.gamma_family is GammaFamily.POWER and self.zeta is None:
            raise ParameterError("IA with a power schedule requires zeta")

    @property
    def distributed(self) -> bool:
        return self.kind is AlgorithmKind.IA

    @property
    def label(self) -> str:
        if self.kind is AlgorithmKind.IA and self.gamma_family is GammaFamily.LOG_POWER:
            return f"{self.kind.value}-{self.gamma().label}"
        return self.kind.value

    def gamma(self) -> GammaSchedule:
        if self.gamma_family is GammaFamily.POWER:
            return GammaSchedule.power(self.zeta)
        return GammaSchedule.log_power(self.log_exponent)


@dataclass(frozen=True)
class TopologySpec:
    """
    トポロジの種類と付加情報

    tau を指定すると lazy(P, tau) を使う（省略時は ExperimentConfig.tau）
    """

    kind: TopologyKind
    rows: Optional[int] = None
    cols: Optional[int] = None
    radius: float = 0.3
    tau: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', TopologyKind(self.kind))

    def label(self, tau: Optional[float] = None) -> str:
        tau = self.tau if self.tau is not None else tau
        base = self.kind.value
        if self.kind is TopologyKind.RGG:
            base = f"rgg{self.radius}"
        return f"{base}-lazy{tau}" if tau is not None else base


@dataclass(frozen=True)
class ExperimentConfig:
    """
    スイープ実験の設定

    Parameters:
    -----------
    params : ModelParams
    n_values : list of int
    topologies : list of TopologySpec
        分散アルゴリズム（IA）に使う
    algorithms : list of AlgorithmSpec
    mc_runs : int
        セルあたりの試行回数
    base_seed : int
    tau : float, optional
        全トポロジに適用する lazy パラメータ
    n_jobs : int
        並列プロセス数（1 なら逐次）
    """

    params: ModelParams = field(default_factory=ModelParams)
    n_values: Tuple[int, ...] = (10, 50, 100, 500, 1000)
    topologies: Tuple[TopologySpec, ...] = (TopologySpec(TopologyKind.COMPLETE),)
    algorithms: Tuple[AlgorithmSpec, ...] = (AlgorithmSpec(AlgorithmKind.ML_EXACT),)
    mc_runs: int = 400
    base_seed: int = 0
    tau: Optional[float] = None
    n_jobs: int = 1
    stop: StopRule = field(default_factory=StopRule)
    baseline_eps: float = DEFAULT_EPS
    baseline_max_iter: int = DEFAULT_MAX_ITER
    spectral_cap: int = DEFAULT_SPECTRAL_CAP
    rgg_retry_cap: int = DEFAULT_RGG_RETRY_CAP

    def __post_init__(self):
        object.__setattr__(self, 'n_values', tuple(int(n) for n in self.n_values))
        object.__setattr__(self, 'topologies', tuple(self.topologies))
        object.__setattr__(self, 'algorithms', tuple(self.algorithms))
        if self.mc_runs < 1:
            raise ParameterError(f"mc_runs must be >= 1, got {self.mc_runs}")
        if not self.n_values:
            raise ParameterError("n_values must not be empty")
        if not self.algorithms:
            raise ParameterError("algorithms must not be empty")
        if any(n < 1 for n in self.n_values):
            raise ParameterError(f"n_values must be >= 1: {self.n_values}")
        if self.n_jobs < 1:
            raise ParameterError(f"n_jobs must be >= 1, got {self.n_jobs}")
        for topo in self.topologies:
            if topo.kind is TopologyKind.TORUS and (topo.rows or topo.cols):
                for n in self.n_values:
                    rows = topo.rows or n // topo.cols
                    cols = topo.cols or n // topo.rows
                    if rows * cols != n:
                        raise ParameterError(f"torus {topo.rows}x{topo.cols} inconsistent with n={n}")

    def cells(self) -> List[Tuple[int, Optional[TopologySpec], AlgorithmSpec]]:
        """(n, topology, algorithm) のセル一覧（集中型アルゴリズムは topology=None で1つ）"""
        out = []
        for n in self.n_values:
            for algo in self.algorithms:
                if algo.distributed:
                    out.extend((n, topo, algo) for topo in self.topologies)
                else:
                    out.append((n, None, algo))
        return out


@lru_cache(maxsize=32)
def _fixed_matrix(topo: TopologySpec, n: int, tau: Optional[float], spectral_cap: int) -> ConsensusMatrix:
    """乱数を使わないトポロジの行列（プロセスごとにキャッシュ）"""
    if topo.kind is TopologyKind.COMPLETE:
        matrix = complete_matrix(n, spectral_cap)
    else:
        topology = build_topology(topo.kind, n, rows=topo.rows, cols=topo.cols)
        matrix = metropolis(topology, spectral_cap)
    return lazy(matrix, tau) if tau is not None else matrix


def _trial_matrix(config: ExperimentConfig, topo: TopologySpec, n: int, trial: int) -> ConsensusMatrix:
    tau = topo.tau if topo.tau is not None else config.tau
    if topo.kind is not TopologyKind.RGG:
        return _fixed_matrix(topo, n, tau, config.spectral_cap)
    seed = mix_seed(config.base_seed, n, topo.label(tau), trial)
    topology = build_topology(
        TopologyKind.RGG, n, radius=topo.radius, seed=seed, retry_cap=config.rgg_retry_cap
    )
    matrix = metropolis(topology, config.spectral_cap)
    return lazy(matrix, tau) if tau is not None else matrix


def run_trial(
    config: ExperimentConfig,
    n: int,
    topo: Optional[TopologySpec],
    algo: AlgorithmSpec,
    trial: int,
) -> dict:
    """
    1回の試行（データ生成 → アルゴリズム実行 → 採点）

    データのシードは (base_seed, n, trial) だけから決まるので、
    同じ試行番号ではすべてのアルゴリズムが同じデータを使う。
    """
    params = config.params
    obs = generate(params, n, mix_seed(config.base_seed, n, trial))
    y = obs.y

    if algo.kind is AlgorithmKind.IA:
        matrix = _trial_matrix(config, topo, n, trial)
        result = ia_run(y, matrix, algo.gamma(), params, stop=config.stop)
        theta, omega = result.theta_limit, result.omega_limit
        iterations, converged = result.iterations, result.converged
    elif algo.kind is AlgorithmKind.EM:
        result = em_run(y, params, eps=config.baseline_eps, max_iter=config.baseline_max_iter)
        theta, omega = result.theta, result.omega
        iterations, converged = result.iterations, result.converged
    elif algo.kind is AlgorithmKind.IML:
        result = iml_run(y, params, eps=config.baseline_eps, max_iter=config.baseline_max_iter)
        theta, omega = result.theta, result.omega
        iterations, converged = result.iterations, result.converged
    else:
        theta, omega = ml_solution(y, params)
        iterations, converged = 0, True

    tau = None
    if topo is not None:
        tau = topo.tau if topo.tau is not None else config.tau
    return {
        'n': n,
        'topology': topo.label(tau) if topo is not None else CENTRALIZED,
        'algorithm': algo.label,
        'zeta': algo.zeta if algo.kind is AlgorithmKind.IA else None,
        'trial': trial,
        'class_err': hamming_error(omega, obs.omega_true) / n,
        'sq_err': (theta - params.theta_star) ** 2,
        'theta': theta,
        'iterations': iterations,
        'converged': converged,
        'theta_in_range': bool(y.min() <= theta <= y.max()),
    }


def _run_task(task) -> dict:
    return run_trial(*task)


@dataclass
class SweepReport:
    """
    スイープ結果

    Parameters:
    -----------
    rows : DataFrame
        セルごとの集計（列は SWEEP_COLUMNS）
    trials : DataFrame
        試行ごとの記録（列は TRIAL_COLUMNS）
    config : ExperimentConfig
    """

    rows: pd.DataFrame
    trials: pd.DataFrame = field(repr=False)
    config: Optional[ExperimentConfig] = field(default=None, repr=False)

    def comparison_table(self, value: str = 'mean_class_err') -> pd.DataFrame:
        """アルゴリズム（IA は topology と ζ 付き）× N の比較表"""
        frame = self.rows.copy()
        frame['method'] = [
            algorithm
            + ('' if topology == CENTRALIZED else f" @{topology}")
            + ('' if _is_missing(zeta) else f" zeta={zeta}")
            for algorithm, topology, zeta in zip(frame['algorithm'], frame['topology'], frame['zeta'])
        ]
        table = frame.pivot_table(index='method', columns='n', values=value, aggfunc='first', sort=False)
        table.columns.name = 'n'
        return table


def _is_missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _aggregate(trials: pd.DataFrame) -> pd.DataFrame:
    rows = []
    keys = ['n', 'topology', 'algorithm', 'zeta']
    for key, group in trials.groupby(keys, sort=False, dropna=False):
        n, topology, algorithm, zeta = key
        group = group.sort_values('trial')
        err = group['class_err'].to_numpy()
        std = float(np.std(err, ddof=1)) if err.size > 1 else 0.0
        nonconverged = int((~group['converged'].astype(bool)).sum())
        if nonconverged == err.size:
            logger.warning("all %d trials nonconverged for n=%s %s %s", err.size, n, topology, algorithm)
        rows.append({
            'n': int(n),
            'topology': topology,
            'algorithm': algorithm,
            'zeta': None if _is_missing(zeta) else zeta,
            'mc_runs': int(err.size),
            'mean_class_err': pairwise_mean(err),
            'std_class_err': std,
            'mse_theta': pairwise_mean(group['sq_err'].to_numpy()),
            'mean_iters': pairwise_mean(group['iterations'].to_numpy(dtype=np.float64)),
            'nonconverged': nonconverged,
        })
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def run_sweep(config: ExperimentConfig) -> SweepReport:
    """
    全セルの試行を実行して集計

    Parameters:
    -----------
    config : ExperimentConfig

    Returns:
    --------
    report : SweepReport
        行の順序はセルの列挙順で、n_jobs に依存しない
    """
    tasks = [
        (config, n, topo, algo, trial)
        for n, topo, algo in config.cells()
        for trial in range(config.mc_runs)
    ]
    total = len(tasks)
    step = max(total // 10, 1)
    logger.info("sweep: %d cells x %d runs = %d trials (n_jobs=%d)",
                len(config.cells()), config.mc_runs, total, config.n_jobs)

    records: List[dict] = []

    def collect(iterator):
        for i, record in enumerate(iterator, 1):
            records.append(record)
            if i % step == 0 or i == total:
                logger.info("progress: %d/%d trials (%.0f%%)", i, total, 100.0 * i / total)

    if config.n_jobs > 1:
        with Pool(config.n_jobs) as pool:
            collect(pool.imap(_run_task, tasks, chunksize=max(1, config.mc_runs // (4 * config.n_jobs))))
    else:
        collect(map(_run_task, tasks))

    trials = pd.DataFrame(records, columns=TRIAL_COLUMNS)
    out_of_range = int((~trials['theta_in_range'].astype(bool)).sum())
    if out_of_range:
        logger.warning("%d trials reported theta outside [min(y), max(y)]", out_of_range)
    return SweepReport(rows=_aggregate(trials), trials=trials, config=config)


def topology_specs(kinds: Sequence[str], radius: float = 0.3, tau: Optional[float] = None) -> List[TopologySpec]:
    """設定値のトポロジ名リストを TopologySpec に変換"""
    return [TopologySpec(TopologyKind(kind), radius=radius, tau=tau) for kind in kinds]


def algorithm_specs(
    names: Sequence[str],
    zetas: Sequence[float],
    gamma_family: str = 'power',
    log_exponent: float = 1.0,
) -> List[AlgorithmSpec]:
    """アルゴリズム名リストを AlgorithmSpec に展開（IA は ζ ごとに1つ）"""
    specs = []
    for name in names:
        kind = AlgorithmKind(name)
        if kind is AlgorithmKind.IA and GammaFamily(gamma_family) is GammaFamily.POWER:
            specs.extend(AlgorithmSpec(kind, zeta=float(z)) for z in zetas)
        elif kind is AlgorithmKind.IA:
            specs.append(AlgorithmSpec(kind, gamma_family=GammaFamily.LOG_POWER, log_exponent=log_exponent))
        else:
            specs.append(AlgorithmSpec(kind))
    return specs
