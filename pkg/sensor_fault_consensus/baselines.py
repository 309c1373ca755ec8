"""
集中型の反復ベースライン

IML（θ と ω を交互に固定点更新）と EM（責任度 q による重み付き平均）。
どちらも |θ(t+1) - θ(t)| < eps で停止し、上限に達した場合は converged=False を返す。
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .likelihood import enumerate_stationary
from .model import LABEL_DTYPE, Label, ModelParams, classify, weighted_theta

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass
class IterativeResult:
    """
    反復ベースラインの結果

    Parameters:
    -----------
    theta : float
    omega : ndarray
        IML はそのままのラベル、EM は q を 1/2 で丸めたラベル
    iterations : int
    converged : bool
    responsibilities : ndarray, optional
        EM の q_i = P(ω_i = α | y_i, θ)
    theta_trace : ndarray
        θ(0), θ(1), ... の系列
    loglik_trace : ndarray, optional
        EM の各反復での観測データ対数尤度（単調性は保証しない）
    """

    theta: float
    omega: np.ndarray
    iterations: int
    converged: bool
    responsibilities: Optional[np.ndarray] = None
    theta_trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    loglik_trace: Optional[np.ndarray] = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            'theta': self.theta,
            'iterations': self.iterations,
            'converged': self.converged,
            'n_beta': int(np.sum(self.omega == Label.BETA)),
        }


def iml_run(
    y: np.ndarray,
    params: ModelParams,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IterativeResult:
    """
    IML: ω(0) = α から θ(t+1) = θ̂(ω(t))、ω(t+1) = ω̂(θ(t+1)) を繰り返す

    Parameters:
    -----------
    y : ndarray
    params : ModelParams
    eps : float
        停止判定の閾値
    max_iter : int
        反復回数の上限

    Returns:
    --------
    result : IterativeResult
    """
    y_arr = np.asarray(y, dtype=np.float64)
    delta = params.delta
    omega = np.full(y_arr.size, Label.ALPHA, dtype=LABEL_DTYPE)

    thetas = []
    converged = False
    theta = np.nan
    for _ in range(max_iter):
        theta_next = weighted_theta(omega, y_arr, params)
        thetas.append(theta_next)
        omega = classify(theta_next, y_arr, delta)
        if len(thetas) > 1 and abs(theta_next - theta) < eps:
            theta = theta_next
            converged = True
            break
        theta = theta_next

    if not converged:
        logger.warning("IML reached max_iter=%d without convergence", max_iter)
    return IterativeResult(
        theta=float(theta),
        omega=omega,
        iterations=len(thetas),
        converged=converged,
        theta_trace=np.asarray(thetas),
    )


def _class_log_terms(theta: float, y: np.ndarray, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """log((1-p) f(y|α,θ)) と log(p f(y|β,θ))"""
    log_a = np.log1p(-params.p) + norm.logpdf(y, loc=theta, scale=params.alpha)
    log_b = np.log(params.p) + norm.logpdf(y, loc=theta, scale=params.beta)
    return log_a, log_b


def em_e_step(theta: float, y: np.ndarray, params: ModelParams) -> np.ndarray:
    """E ステップ: 責任度 q_i（対数空間で計算）"""
    log_a, log_b = _class_log_terms(theta, np.asarray(y, dtype=np.float64), params)
    log_norm = np.logaddexp(log_a, log_b)
    return np.clip(np.exp(log_a - log_norm), 0.0, 1.0)


def em_m_step(q: np.ndarray, y: np.ndarray, params: ModelParams) -> float:
    """M ステップ: 重み q/α² + (1-q)/β² による加重平均"""
    y_arr = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    weights = q / params.alpha ** 2 + (1.0 - q) / params.beta ** 2
    theta = float(np.sum(weights * y_arr) / np.sum(weights))
    return float(np.clip(theta, y_arr.min(), y_arr.max()))


def observed_log_likelihood(theta: float, y: np.ndarray, params: ModelParams) -> float:
    """観測データの平均対数尤度 (1/N) Σ log f(y_i | θ)"""
    y_arr = np.asarray(y, dtype=np.float64)
    log_a, log_b = _class_log_terms(theta, y_arr, params)
    return float(logsumexp(np.vstack((log_a, log_b)), axis=0).mean())


def em_run(
    y: np.ndarray,
    params: ModelParams,
    theta0: Optional[float] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> IterativeResult:
    """
    EM アルゴリズム

    Parameters:
    -----------
    y : ndarray
    params : ModelParams
    theta0 : float, optional
        初期値（省略時は標本平均）
    eps : float
    max_iter : int

    Returns:
    --------
    result : IterativeResult
        omega は q_i > 1/2 なら α（q = 1/2 ちょうどは β）
    """
    y_arr = np.asarray(y, dtype=np.float64)
    theta = float(np.mean(y_arr)) if theta0 is None else float(theta0)

    thetas = [theta]
    logliks = []
    converged = False
    for _ in range(max_iter):
        logliks.append(observed_log_likelihood(theta, y_arr, params))
        theta_next = em_m_step(em_e_step(theta, y_arr, params), y_arr, params)
        thetas.append(theta_next)
        step = abs(theta_next - theta)
        theta = theta_next
        if step < eps:
            converged = True
            break

    if not converged:
        logger.warning("EM reached max_iter=%d without convergence", max_iter)

    q = em_e_step(theta, y_arr, params)
    omega = np.where(q > 0.5, Label.ALPHA, Label.BETA).astype(LABEL_DTYPE)
    return IterativeResult(
        theta=theta,
        omega=omega,
        iterations=len(thetas) - 1,
        converged=converged,
        responsibilities=q,
        theta_trace=np.asarray(thetas),
        loglik_trace=np.asarray(logliks),
    )


def em_threshold_gap(result: IterativeResult, y: np.ndarray, params: ModelParams) -> float:
    """
    EM のラベルを丸めて θ̂(ω) を計算し、最も近い停留点までの距離を返す（診断用）

    q = 1/2 の境界は |y - θ| = δ と一致するので、丸めは ω̂(θ) と同じ規則になる
    """
    y_arr = np.asarray(y, dtype=np.float64)
    theta_hard = weighted_theta(result.omega, y_arr, params)
    stationary = enumerate_stationary(y_arr, params)
    if len(stationary) == 0:
        return float('inf')
    return float(np.min(np.abs(stationary.points - theta_hard)))
