"""
漸近量モジュール

N → ∞ での相対分類誤差 q(p, α, β) と、その評価に使う erfc。
erfc はライブラリ内で実装し、scipy には委ねない。
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate

from .model import ModelParams, classify, generate, mixture_density

logger = logging.getLogger(__name__)

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)

# 級数と連分数を切り替える点
_SERIES_LIMIT = 2.5
_MAX_TERMS = 500
_TINY = 1e-300


def _erf_series(x: float) -> float:
    """erf(x) = 2/√π e^{-x²} Σ 2^n x^{2n+1} / (1·3·…·(2n+1))（全項正）"""
    x2 = x * x
    term = x
    total = x
    for n in range(1, _MAX_TERMS):
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if term < 1e-17 * total:
            break
    return _TWO_OVER_SQRT_PI * math.exp(-x2) * total


def _erfc_continued_fraction(x: float) -> float:
    """erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))、修正 Lentz 法"""
    f = x
    c = f
    d = 0.0
    for k in range(1, _MAX_TERMS):
        a = 0.5 * k
        d = x + a * d
        d = _TINY if d == 0.0 else d
        c = x + a / c
        c = _TINY if c == 0.0 else c
        d = 1.0 / d
        step = c * d
        f *= step
        if abs(step - 1.0) < 1e-16:
            break
    return math.exp(-x * x) * _INV_SQRT_PI / f


def _erfc_scalar(x: float) -> float:
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        return 2.0 - _erfc_scalar(-x)
    if x < _SERIES_LIMIT:
        return 1.0 - _erf_series(x)
    if x > 27.3:
        return 0.0
    return _erfc_continued_fraction(x)


_erfc_vector = np.vectorize(_erfc_scalar, otypes=[np.float64])


def erfc(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    相補誤差関数 erfc(x) = 2/√π ∫_x^∞ e^{-t²} dt

    |x| < 2.5 では erf の正項級数、それ以外は連分数で計算する。
    |x| <= 8 で絶対誤差 1e-12 未満。
    """
    if np.ndim(x) == 0:
        return _erfc_scalar(x)
    return _erfc_vector(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class AsymptoticReport:
    """
    漸近的な相対分類誤差

    Parameters:
    -----------
    q_value : float
        q(p, α, β)
    delta : float
    inputs : ModelParams
    alpha_term : float
        (1-p) erfc(δ/(α√2))（正常センサを故障と判定する寄与）
    beta_term : float
        p [1 - erfc(δ/(β√2))]（故障センサを正常と判定する寄与）
    """

    q_value: float
    delta: float
    inputs: ModelParams
    alpha_term: float
    beta_term: float

    @property
    def ratio(self) -> float:
        return self.inputs.beta / self.inputs.alpha

    def as_dict(self) -> dict:
        return {
            'p': self.inputs.p,
            'alpha': self.inputs.alpha,
            'beta': self.inputs.beta,
            'ratio': self.ratio,
            'delta': self.delta,
            'q': self.q_value,
            'alpha_term': self.alpha_term,
            'beta_term': self.beta_term,
        }


def limit_classification_error(params: ModelParams) -> AsymptoticReport:
    """
    q(p, α, β) = (1-p) erfc(δ/(α√2)) + p [1 - erfc(δ/(β√2))]

    Raises:
    -------
    DegenerateThresholdError
        δ が定義できないパラメータ
    """
    delta = params.delta
    sqrt2 = math.sqrt(2.0)
    alpha_term = (1 - params.p) * _erfc_scalar(delta / (params.alpha * sqrt2))
    beta_term = params.p * (1.0 - _erfc_scalar(delta / (params.beta * sqrt2)))
    return AsymptoticReport(
        q_value=alpha_term + beta_term,
        delta=delta,
        inputs=params,
        alpha_term=alpha_term,
        beta_term=beta_term,
    )


@dataclass(frozen=True)
class ClairvoyantCheck:
    """θ* を知っている分類器 ω̂(θ*) の経験誤差と q の比較"""

    empirical: float
    expected: float
    sigma: float
    n_samples: int

    @property
    def z_score(self) -> float:
        return (self.empirical - self.expected) / self.sigma if self.sigma > 0 else 0.0


def clairvoyant_error(params: ModelParams, n_samples: int, seed: int) -> ClairvoyantCheck:
    """
    合成データ上で ω̂(θ*) の誤分類率を測る

    Parameters:
    -----------
    params : ModelParams
    n_samples : int
    seed : int

    Returns:
    --------
    check : ClairvoyantCheck
        sigma は二項分布の標準誤差 sqrt(q(1-q)/n)
    """
    obs = generate(params, n_samples, seed)
    labels = classify(params.theta_star, obs.y, params.delta)
    empirical = float(np.mean(labels != obs.omega_true))
    expected = limit_classification_error(params).q_value
    sigma = math.sqrt(expected * (1 - expected) / n_samples)
    logger.debug("clairvoyant error %.6f vs q=%.6f (sigma=%.2e)", empirical, expected, sigma)
    return ClairvoyantCheck(empirical=empirical, expected=expected, sigma=sigma, n_samples=n_samples)


def limit_profile(thetas: np.ndarray, params: ModelParams) -> np.ndarray:
    """
    N → ∞ でのプロファイル尤度 ∫ J(s, θ) f(s) ds を数値積分で評価

    J の指示関数は 1{|s-θ| < δ} と読む。2乗項の期待値は閉じた形、
    窓 (θ-δ, θ+δ) 上の項は quad で積分する。
    """
    delta = params.delta
    gap = params.precision_gap
    log_ratio = math.log((1 - params.p) / params.p * params.beta / params.alpha)
    c = math.log(params.p) - math.log(params.beta) - 0.5 * math.log(2.0 * math.pi)
    variance = (1 - params.p) * params.alpha ** 2 + params.p * params.beta ** 2

    def density(s: float) -> float:
        return mixture_density(s, params)

    values = []
    for theta in np.atleast_1d(np.asarray(thetas, dtype=np.float64)):
        second_moment = variance + (params.theta_star - theta) ** 2
        window, _ = integrate.quad(
            lambda s: ((s - theta) ** 2 / 2 * gap - log_ratio) * density(s),
            theta - delta,
            theta + delta,
            points=[params.theta_star] if abs(params.theta_star - theta) < delta else None,
            limit=200,
        )
        values.append(-second_moment / (2 * params.beta ** 2) - window + c)
    return np.asarray(values)
