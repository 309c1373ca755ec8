"""
測定モデルモジュール

各センサは y_i = θ* + ω*_i η_i を観測する（η_i ~ N(0,1)、ω*_i ∈ {α, β}、P(ω*_i = β) = p）。
分類閾値 δ、ラベルと推定値の基本演算を提供し、すべてのアルゴリズムが共有する。
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Union

import numpy as np
from scipy.stats import norm

from .exceptions import DegenerateThresholdError, ParameterError
from .utils import make_rng


class Label(IntEnum):
    """
    センサの種別ラベル

    ラベルベクトルは int8 の numpy 配列（値は Label）で表す
    """

    ALPHA = 0  # 正常センサ（ノイズ α）
    BETA = 1  # 故障センサ（ノイズ β）

    def sigma(self, params: "ModelParams") -> float:
        """ラベルに対応するノイズ標準偏差（α または β）"""
        return params.alpha if self is Label.ALPHA else params.beta


LABEL_DTYPE = np.int8


@dataclass(frozen=True)
class ModelParams:
    """
    生成モデルのパラメータ

    Parameters:
    -----------
    theta_star : float
        真のグローバルパラメータ θ*
    alpha : float
        正常センサのノイズ標準偏差（0 < alpha < beta）
    beta : float
        故障センサのノイズ標準偏差
    p : float
        故障センサの事前確率 P(ω = β)、0 < p < 1
    """

    theta_star: float = 0.0
    alpha: float = 0.3
    beta: float = 10.0
    p: float = 0.25

    def __post_init__(self):
        for name in ('theta_star', 'alpha', 'beta', 'p'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if not 0 < self.alpha < self.beta:
            raise ParameterError(f"0 < alpha < beta required, got alpha={self.alpha}, beta={self.beta}")
        if not 0 < self.p < 1:
            raise ParameterError(f"0 < p < 1 required, got p={self.p}")

    @cached_property
    def delta(self) -> float:
        """分類閾値 δ（一度だけ計算してキャッシュ）"""
        return delta_threshold(self)

    @property
    def has_threshold(self) -> bool:
        """δ が定義できるか"""
        return ((1 - self.p) / self.p) * (self.beta / self.alpha) > 1

    @property
    def precision_gap(self) -> float:
        """1/α² - 1/β²"""
        return 1.0 / self.alpha ** 2 - 1.0 / self.beta ** 2


@dataclass(frozen=True)
class Observations:
    """
    観測データと正解ラベル

    Parameters:
    -----------
    y : ndarray
        測定値（長さ N）
    omega_true : ndarray
        隠れた真のラベル（Label の int8 配列、長さ N）
    seed : int
        生成に使ったシード
    """

    y: np.ndarray
    omega_true: np.ndarray
    seed: int = 0
    params: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        omega = np.asarray(self.omega_true, dtype=LABEL_DTYPE)
        if y.ndim != 1 or y.size < 1:
            raise ParameterError("y must be a non-empty vector")
        if omega.shape != y.shape:
            raise ParameterError(f"len(y)={y.size} != len(omega_true)={omega.size}")
        y.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'omega_true', omega)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def fraction_faulty(self) -> float:
        """真のラベルが β であるノードの割合"""
        return float(np.mean(self.omega_true == Label.BETA))


def generate(params: ModelParams, n: int, seed: int) -> Observations:
    """
    測定モデルからデータを生成

    同じ (params, n, seed) なら常にビット単位で同じ結果になる。

    Parameters:
    -----------
    params : ModelParams
        生成モデル
    n : int
        ノード数（n >= 1）
    seed : int
        乱数シード

    Returns:
    --------
    observations : Observations
    """
    if int(n) < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    n = int(n)

    rng = make_rng(seed)
    is_beta = rng.random(n) < params.p
    eta = rng.standard_normal(n)

    omega = np.where(is_beta, Label.BETA, Label.ALPHA).astype(LABEL_DTYPE)
    sigmas = np.where(is_beta, params.beta, params.alpha)
    y = params.theta_star + sigmas * eta

    return Observations(y=y, omega_true=omega, seed=int(seed), params=params)


def delta_threshold(params: ModelParams) -> float:
    """
    分類閾値 δ = sqrt( 2 ln(((1-p)/p)(β/α)) / (1/α² - 1/β²) )

    Raises:
    -------
    DegenerateThresholdError
        対数の引数が 1 以下（分類規則が α を選ばない）
    """
    ratio = ((1 - params.p) / params.p) * (params.beta / params.alpha)
    if not ratio > 1:
        raise DegenerateThresholdError(
            f"((1-p)/p)*(beta/alpha) = {ratio} <= 1: threshold delta is undefined"
        )
    return math.sqrt(2.0 * math.log(ratio) / params.precision_gap)


def mixture_density(y: Union[float, np.ndarray], params: ModelParams) -> Union[float, np.ndarray]:
    """混合密度 f(y) = (1-p) φ(y; θ*, α²) + p φ(y; θ*, β²)"""
    y_arr = np.asarray(y, dtype=np.float64)
    density = (1 - params.p) * norm.pdf(y_arr, loc=params.theta_star, scale=params.alpha) + \
        params.p * norm.pdf(y_arr, loc=params.theta_star, scale=params.beta)
    return float(density) if density.ndim == 0 else density


def classify(theta: Union[float, np.ndarray], y: np.ndarray, delta: float) -> np.ndarray:
    """
    ラベル推定 ω̂(θ)_i = α if |y_i - θ| < δ else β

    theta はスカラー、または各ノードが自分の θ̂_i で分類する場合は y と同じ長さのベクトル。
    |y_i - θ| = δ ちょうどは β。
    """
    y_arr = np.asarray(y, dtype=np.float64)
    inside = np.abs(y_arr - np.asarray(theta, dtype=np.float64)) < delta
    return np.where(inside, Label.ALPHA, Label.BETA).astype(LABEL_DTYPE)


def label_sigmas(omega: np.ndarray, params: ModelParams) -> np.ndarray:
    """ラベルベクトルを標準偏差ベクトル（α / β）に変換"""
    return np.where(np.asarray(omega) == Label.BETA, params.beta, params.alpha)


def label_precisions(omega: np.ndarray, params: ModelParams) -> np.ndarray:
    """ラベルベクトルを精度ベクトル ω_i^{-2} に変換"""
    return 1.0 / label_sigmas(omega, params) ** 2


def weighted_theta(omega: np.ndarray, y: np.ndarray, params: ModelParams) -> float:
    """
    精度加重平均 θ̂(ω) = Σ y_j/ω_j² / Σ 1/ω_j²

    Raises:
    -------
    ParameterError
        空の入力、または長さ不一致
    """
    y_arr = np.asarray(y, dtype=np.float64)
    omega_arr = np.asarray(omega)
    if y_arr.size == 0:
        raise ParameterError("weighted_theta requires at least one observation")
    if omega_arr.shape != y_arr.shape:
        raise ParameterError(f"len(omega)={omega_arr.size} != len(y)={y_arr.size}")

    weights = label_precisions(omega_arr, params)
    theta = float(np.sum(weights * y_arr) / np.sum(weights))
    # 凸結合なので丸め誤差で範囲外に出た分だけ戻す
    return float(np.clip(theta, y_arr.min(), y_arr.max()))
