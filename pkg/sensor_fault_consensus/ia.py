"""
入力駆動コンセンサスアルゴリズム（IA）

各ノード i は (μ_i, ν_i) を保持し、毎ステップ
    μ' = (1-γ(t)) P μ + γ(t) y_i ω̂_i^{-2}
    ν' = (1-γ(t)) P ν + γ(t) ω̂_i^{-2}
    θ̂' = μ'/ν'、ω̂'_i = α if |y_i - θ̂'_i| < δ else β
を同期的に計算する。コンセンサスは初期値ではなく時間変化する入力に作用する。
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .exceptions import InvariantViolation, ParameterError
from .graph import ConsensusMatrix
from .model import LABEL_DTYPE, Label, ModelParams, classify, label_precisions, weighted_theta

logger = logging.getLogger(__name__)

# γ ∈ (0, 1) に収める上下限
GAMMA_CEIL = 1.0 - 1e-12
GAMMA_FLOOR = 1e-300

# 不変条件チェックの相対許容誤差
_INVARIANT_RTOL = 1e-9

TRACE_COLUMNS = ['t', 'gamma', 'mean_theta', 'omega_norm', 'hamming']


class GammaFamily(str, Enum):
    POWER = "power"
    LOG_POWER = "log_power"


@dataclass(frozen=True)
class GammaSchedule:
    """
    ステップサイズ列 γ(t)

    Parameters:
    -----------
    family : GammaFamily
        POWER: (t+t_offset)^(-ζ)、LOG_POWER: (t+t_offset)^(-1) ln(t+t_offset)^a
    zeta : float
        POWER の指数（0 < ζ < 1）
    exponent : float
        LOG_POWER の指数 a（a > 0）
    t_offset : int, optional
        省略時は POWER=1、LOG_POWER=3（ln(t+3) > 1 となり γ(t) >= 1/(t+3)）
    """

    family: GammaFamily = GammaFamily.POWER
    zeta: float = 0.7
    exponent: float = 1.0
    t_offset: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'family', GammaFamily(self.family))
        if self.family is GammaFamily.POWER and not 0 < self.zeta < 1:
            raise ParameterError(f"zeta must be in (0, 1), got {self.zeta}")
        if self.family is GammaFamily.LOG_POWER and not self.exponent > 0:
            raise ParameterError(f"log-power exponent must be > 0, got {self.exponent}")
        if self.t_offset is None:
            object.__setattr__(self, 't_offset', 1 if self.family is GammaFamily.POWER else 3)
        if self.t_offset < 1 or (self.family is GammaFamily.LOG_POWER and self.t_offset < 2):
            raise ParameterError(f"t_offset too small for {self.family.value}: {self.t_offset}")

    @classmethod
    def power(cls, zeta: float, t_offset: Optional[int] = None) -> "GammaSchedule":
        return cls(family=GammaFamily.POWER, zeta=zeta, t_offset=t_offset)

    @classmethod
    def log_power(cls, exponent: float, t_offset: Optional[int] = None) -> "GammaSchedule":
        return cls(family=GammaFamily.LOG_POWER, exponent=exponent, t_offset=t_offset)

    @property
    def label(self) -> str:
        if self.family is GammaFamily.POWER:
            return f"power{self.zeta}"
        return f"logpower{self.exponent}"

    def value(self, t: int) -> float:
        s = float(t + self.t_offset)
        if self.family is GammaFamily.POWER:
            raw = s ** (-self.zeta)
        else:
            raw = math.log(s) ** self.exponent / s
        return min(max(raw, GAMMA_FLOOR), GAMMA_CEIL)

    def values(self, t: np.ndarray) -> np.ndarray:
        s = np.asarray(t, dtype=np.float64) + self.t_offset
        if self.family is GammaFamily.POWER:
            raw = s ** (-self.zeta)
        else:
            raw = np.log(s) ** self.exponent / s
        return np.clip(raw, GAMMA_FLOOR, GAMMA_CEIL)


@dataclass(frozen=True)
class NetworkState:
    """
    時刻 t における全ノードの状態

    theta_hat は t = 0 では未定義（μ/ν = 0/0）なので None
    """

    t: int
    mu: np.ndarray
    nu: np.ndarray
    theta_hat: Optional[np.ndarray]
    omega_hat: np.ndarray


@dataclass(frozen=True)
class StopRule:
    """
    IA の停止規則

    Parameters:
    -----------
    mode : str
        'fixed_point': ω̂ が window ステップ不変で、θ̂(ω̂) を再分類すると ω̂ に一致
        'absolute': ω̂ が window ステップ不変、max|Δθ̂| < eps、ノード間の幅 < eps_consensus
    window : int
        ω̂ が変化しない連続ステップ数 W
    eps : float
    eps_consensus : float
    t_max : int
        最大反復回数
    """

    mode: str = 'fixed_point'
    window: int = 500
    eps: float = 1e-10
    eps_consensus: float = 1e-8
    t_max: int = 1_000_000

    def __post_init__(self):
        if self.mode not in ('fixed_point', 'absolute'):
            raise ParameterError(f"unknown stop mode: {self.mode}")
        if self.window < 1 or self.t_max < 1:
            raise ParameterError("window and t_max must be >= 1")


@dataclass
class IaRunResult:
    """
    IA の実行結果

    theta_limit は打ち切り時点の反復値ではなく、極限値 θ̂(ω̂^IA) を報告する。
    観測された θ̂ の平均や打ち切り誤差は別フィールドに残す。
    """

    theta_limit: float
    omega_limit: np.ndarray
    iterations: int
    stabilization_time: int
    converged: bool
    fixed_point_residual: float
    consistent: bool
    mean_theta: float
    truncation_gap: float
    spread: float
    last_step_change: float
    consensus_trace: Optional[pd.DataFrame] = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            'theta_limit': self.theta_limit,
            'iterations': self.iterations,
            'stabilization_time': self.stabilization_time,
            'converged': self.converged,
            'fixed_point_residual': self.fixed_point_residual,
            'consistent': self.consistent,
            'mean_theta': self.mean_theta,
            'truncation_gap': self.truncation_gap,
            'spread': self.spread,
            'last_step_change': self.last_step_change,
            'n_beta': int(np.sum(self.omega_limit == Label.BETA)),
        }


def ia_init(y: np.ndarray) -> NetworkState:
    """初期状態 μ = ν = 0、ω̂ = α（θ̂ は t = 1 で初めて定義される）"""
    n = int(np.asarray(y).size)
    return NetworkState(
        t=0,
        mu=np.zeros(n),
        nu=np.zeros(n),
        theta_hat=None,
        omega_hat=np.full(n, Label.ALPHA, dtype=LABEL_DTYPE),
    )


def _advance(mu, nu, omega, g, matrix: ConsensusMatrix, y, params: ModelParams):
    """平均ステップと分類ステップを1回実行"""
    w = label_precisions(omega, params)
    mu_next = (1 - g) * matrix.apply(mu) + g * (y * w)
    nu_next = (1 - g) * matrix.apply(nu) + g * w
    theta_next = mu_next / nu_next
    omega_next = classify(theta_next, y, params.delta)
    return mu_next, nu_next, theta_next, omega_next


def _check_invariants(t, nu, theta, y_min, y_max, params: ModelParams) -> None:
    """ν ∈ [β⁻², α⁻²]、θ̂ ∈ [min y, max y]"""
    lo = params.beta ** -2 * (1 - _INVARIANT_RTOL)
    hi = params.alpha ** -2 * (1 + _INVARIANT_RTOL)
    if np.any(nu < lo) or np.any(nu > hi):
        raise InvariantViolation(f"t={t}: nu outside [beta^-2, alpha^-2]: [{nu.min()}, {nu.max()}]")
    span = max(y_max - y_min, abs(y_max), abs(y_min), 1.0) * _INVARIANT_RTOL
    if np.any(theta < y_min - span) or np.any(theta > y_max + span):
        raise InvariantViolation(f"t={t}: theta_hat outside [min(y), max(y)]")


def ia_step(
    state: NetworkState,
    matrix: ConsensusMatrix,
    y: np.ndarray,
    gamma: GammaSchedule,
    params: ModelParams,
    check_invariants: bool = False,
) -> NetworkState:
    """
    IA の1ステップ（全ノード同期更新）

    Parameters:
    -----------
    state : NetworkState
        時刻 t の状態
    matrix : ConsensusMatrix
    y : ndarray
    gamma : GammaSchedule
        γ(t) を使う
    params : ModelParams
    check_invariants : bool
        True なら ν と θ̂ の範囲を検査（違反時 InvariantViolation）

    Returns:
    --------
    next_state : NetworkState
        時刻 t+1 の状態
    """
    y_arr = np.asarray(y, dtype=np.float64)
    g = gamma.value(state.t)
    mu, nu, theta, omega = _advance(state.mu, state.nu, state.omega_hat, g, matrix, y_arr, params)
    if check_invariants:
        _check_invariants(state.t + 1, nu, theta, y_arr.min(), y_arr.max(), params)
    return NetworkState(t=state.t + 1, mu=mu, nu=nu, theta_hat=theta, omega_hat=omega)


def _limit(omega: np.ndarray, y: np.ndarray, params: ModelParams) -> Tuple[float, bool]:
    """極限値 θ̂(ω̂) と、その再分類が ω̂ に一致するか"""
    theta = weighted_theta(omega, y, params)
    return theta, bool(np.array_equal(classify(theta, y, params.delta), omega))


def ia_run(
    y: np.ndarray,
    matrix: ConsensusMatrix,
    gamma: GammaSchedule,
    params: ModelParams,
    stop: Optional[StopRule] = None,
    trace_every: int = 0,
    check_invariants: bool = False,
) -> IaRunResult:
    """
    停止規則が成立するか t_max に達するまで IA を反復

    t_max で止まった場合も例外にはせず converged=False を返す。

    Parameters:
    -----------
    y : ndarray
        測定値
    matrix : ConsensusMatrix
        コンセンサス行列（仮定を満たさなくてもよい）
    gamma : GammaSchedule
    params : ModelParams
    stop : StopRule, optional
    trace_every : int
        何ステップごとにトレースを記録するか（0 なら記録しない）
    check_invariants : bool
        デバッグ用の不変条件チェック

    Returns:
    --------
    result : IaRunResult
    """
    stop = stop or StopRule()
    y_arr = np.asarray(y, dtype=np.float64)
    if y_arr.size != matrix.n:
        raise ParameterError(f"len(y)={y_arr.size} does not match matrix size {matrix.n}")
    y_min, y_max = float(y_arr.min()), float(y_arr.max())

    state = ia_init(y_arr)
    mu, nu, omega = state.mu, state.nu, state.omega_hat
    theta = None

    rows: List[tuple] = []
    stable = 0
    stabilization_time = 0
    last_change = math.inf
    converged = False
    checked_omega: Optional[np.ndarray] = None
    checked_ok = False

    t = 0
    while t < stop.t_max:
        g = gamma.value(t)
        mu, nu, theta_next, omega_next = _advance(mu, nu, omega, g, matrix, y_arr, params)
        t += 1
        if check_invariants:
            _check_invariants(t, nu, theta_next, y_min, y_max, params)

        flips = int(np.count_nonzero(omega_next != omega))
        if flips:
            stable = 0
            stabilization_time = t
        else:
            stable += 1
        if theta is not None:
            last_change = float(np.max(np.abs(theta_next - theta)))
        theta, omega = theta_next, omega_next

        if trace_every and (t % trace_every == 0 or t == 1):
            mean_theta = float(np.mean(theta))
            rows.append((t, g, mean_theta, float(np.linalg.norm(theta - mean_theta)), flips))

        if stable < stop.window:
            continue
        if stop.mode == 'absolute':
            spread = float(theta.max() - theta.min())
            if last_change < stop.eps and spread < stop.eps_consensus:
                converged = True
                break
        else:
            # ω̂ が変わらない限り判定結果も変わらない
            if checked_omega is None or not np.array_equal(checked_omega, omega):
                checked_omega = omega.copy()
                _, checked_ok = _limit(omega, y_arr, params)
            if checked_ok:
                converged = True
                break

    if trace_every and rows and rows[-1][0] != t:
        mean_theta = float(np.mean(theta))
        rows.append((t, gamma.value(t - 1), mean_theta, float(np.linalg.norm(theta - mean_theta)), 0))

    theta_limit, consistent = _limit(omega, y_arr, params)
    if not converged:
        logger.warning("IA did not stabilize within t_max=%d (last label change at t=%d)",
                       stop.t_max, stabilization_time)

    trace = pd.DataFrame(rows, columns=TRACE_COLUMNS) if trace_every else None
    return IaRunResult(
        theta_limit=theta_limit,
        omega_limit=omega.copy(),
        iterations=t,
        stabilization_time=stabilization_time,
        converged=converged,
        fixed_point_residual=abs(theta_limit - weighted_theta(omega, y_arr, params)),
        consistent=consistent,
        mean_theta=float(np.mean(theta)),
        truncation_gap=float(np.max(np.abs(theta - theta_limit))),
        spread=float(theta.max() - theta.min()),
        last_step_change=last_change,
        consensus_trace=trace,
    )


def linear_trend(x: np.ndarray, values: np.ndarray) -> float:
    """最小二乗直線の傾き（点が2つ未満なら 0）"""
    x = np.asarray(x, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        return 0.0
    slope, _ = np.polyfit(x, values, 1)
    return float(slope)


@dataclass(frozen=True)
class ConsensusDiagnostics:
    """
    ‖Ωθ̂(t)‖/γ(t) の系列と、安定化後の有界性の指標

    slope は t に対する1ステップあたりの傾き、relative_slope は
    安定化後の区間を [0, 1] に正規化し平均値で割った傾き。
    gamma_elasticity は安定化後の後半での d log(比) / d log γ。
    比が有界な極限に近づく間は 0 に向かい、‖Ωθ̂‖ = O(γ^κ) なら κ - 1 になる。
    """

    c_estimates: pd.Series
    stabilization_time: int
    max_after: float
    slope_after: float
    relative_slope: float
    gamma_elasticity: float = 0.0


def consensus_diagnostics(trace: pd.DataFrame, stabilization_time: int = 0) -> ConsensusDiagnostics:
    """
    トレースからコンセンサス速度の診断量を計算

    Parameters:
    -----------
    trace : DataFrame
        ia_run の consensus_trace
    stabilization_time : int
        ω̂ が最後に変化した時刻

    Returns:
    --------
    diagnostics : ConsensusDiagnostics
    """
    if trace is None or trace.empty:
        raise ParameterError("consensus_diagnostics requires a recorded trace")

    gamma = pd.Series(trace['gamma'].to_numpy(), index=trace['t'].to_numpy())
    ratio = pd.Series(
        trace['omega_norm'].to_numpy() / gamma.to_numpy(),
        index=gamma.index,
        name='c_estimate',
    )
    after = ratio[ratio.index > stabilization_time]
    if after.empty:
        return ConsensusDiagnostics(ratio, stabilization_time, math.nan, 0.0, 0.0)

    t_after = after.index.to_numpy(dtype=np.float64)
    slope = linear_trend(t_after, after.to_numpy())
    span = t_after[-1] - t_after[0]
    mean_c = float(after.mean())
    if span > 0 and mean_c > 0:
        relative = linear_trend((t_after - t_after[0]) / span, after.to_numpy()) / mean_c
    else:
        relative = 0.0

    late = after.iloc[after.size // 2:]
    late = late[late > 0]
    elasticity = linear_trend(np.log(gamma.loc[late.index].to_numpy()), np.log(late.to_numpy()))
    return ConsensusDiagnostics(
        c_estimates=ratio,
        stabilization_time=stabilization_time,
        max_after=float(after.max()),
        slope_after=slope,
        relative_slope=float(relative),
        gamma_elasticity=elasticity,
    )


def trace_to_frame(result: IaRunResult) -> pd.DataFrame:
    """トレースを CSV 出力用の DataFrame に変換（記録が無ければ空）"""
    if result.consensus_trace is None:
        return pd.DataFrame(columns=TRACE_COLUMNS)
    return result.consensus_trace.copy()
