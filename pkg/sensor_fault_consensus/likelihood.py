"""
尤度計算モジュール

再スケールした対数尤度 L_N(θ, ω)、そのプロファイル L_N(θ, ω̂(θ))、
停留点集合 S_N の厳密な列挙、集中型の ML 解を提供する。

プロファイル尤度は区分点 {y_i ± δ} の間で凹なので、各区間で
θ = θ̂(ω̂(θ)) を閉じた形で解けば停留点（= 極大点）がすべて得られる。
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from .exceptions import NonDifferentiablePointError, ParameterError
from .model import (
    LABEL_DTYPE,
    Label,
    ModelParams,
    classify,
    label_sigmas,
    weighted_theta,
)

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# 総当たり ML の上限ノード数（2^N 通り）
BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True)
class ProfileSegment:
    """
    プロファイル尤度の1区間

    Parameters:
    -----------
    lo, hi : float
        開区間の端点（区分点 y_i ± δ、両端は ±inf）
    active_set_mask : ndarray of bool
        区間内で |y_i - θ| < δ となるノード
    candidate_theta : float, optional
        区間内の停留点（存在する場合）
    """

    lo: float
    hi: float
    active_set_mask: np.ndarray
    candidate_theta: Optional[float] = None


@dataclass(frozen=True)
class StationarySet:
    """
    停留点集合 S_N

    Parameters:
    -----------
    points : ndarray
        昇順の停留点
    values : ndarray
        各点でのプロファイル尤度
    global_argmax_index : int
        values が最大となる添字（同値なら最小の θ）
    breakpoint_maxima : ndarray
        区分点上で見つかった極大（S_N には含めず報告のみ）
    assumption_violated : bool
        y_i - y_j ∈ {0, ±δ, ±2δ} となる組が存在した
    n_segments : int
        調べた区間の数
    """

    points: np.ndarray
    values: np.ndarray
    global_argmax_index: int
    breakpoint_maxima: np.ndarray = field(default_factory=lambda: np.empty(0))
    assumption_violated: bool = False
    n_segments: int = 0

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def argmax_theta(self) -> float:
        return float(self.points[self.global_argmax_index])

    @property
    def max_value(self) -> float:
        return float(self.values[self.global_argmax_index])


class _SortedSums:
    """
    ソート済みデータの累積和

    区間ごとの活性集合の個数・和・二乗和を O(log N) で求める。
    桁落ちを抑えるため平均 ȳ で中心化して保持する。
    """

    def __init__(self, y: np.ndarray):
        self.y = np.sort(np.asarray(y, dtype=np.float64))
        self.n = int(self.y.size)
        self.center = float(np.mean(self.y))
        self.z = self.y - self.center
        z = self.z
        self.prefix1 = np.concatenate(([0.0], np.cumsum(z)))
        self.prefix2 = np.concatenate(([0.0], np.cumsum(z * z)))
        self.total1 = float(self.prefix1[-1])
        self.total2 = float(self.prefix2[-1])

    def active_range(self, theta: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray]:
        """|y_i - θ| < δ となるソート済み添字範囲 [left, right)（θ は中心化座標）"""
        left = np.searchsorted(self.z, theta - delta, side='right')
        right = np.searchsorted(self.z, theta + delta, side='left')
        return left, np.maximum(right, left)

    def active_sums(self, theta: np.ndarray, delta: float):
        left, right = self.active_range(theta, delta)
        count = right - left
        s1 = self.prefix1[right] - self.prefix1[left]
        s2 = self.prefix2[right] - self.prefix2[left]
        return count, s1, s2


def _check_lengths(omega: np.ndarray, y: np.ndarray) -> None:
    if np.asarray(omega).shape != np.asarray(y).shape:
        raise ParameterError(f"len(omega)={np.size(omega)} != len(y)={np.size(y)}")


def log_likelihood(theta: float, omega: np.ndarray, y: np.ndarray, params: ModelParams) -> float:
    """
    L_N(θ, ω) = (1/N) log f(y, ω | θ)

    正規化定数をすべて含む同時密度（ラベルの事前確率 × 正規密度）から計算する。

    Parameters:
    -----------
    theta : float
        パラメータ候補
    omega : ndarray
        ラベルベクトル
    y : ndarray
        測定値
    params : ModelParams
        α, β, p を使う（θ* は使わない）

    Returns:
    --------
    value : float
    """
    y_arr = np.asarray(y, dtype=np.float64)
    omega_arr = np.asarray(omega)
    _check_lengths(omega_arr, y_arr)

    is_beta = omega_arr == Label.BETA
    log_prior = np.where(is_beta, math.log(params.p), math.log1p(-params.p))
    log_density = norm.logpdf(y_arr, loc=theta, scale=label_sigmas(omega_arr, params))
    return float(np.mean(log_prior + log_density))


def log_likelihood_grouped(theta: float, omega: np.ndarray, y: np.ndarray, params: ModelParams) -> float:
    """
    L_N(θ, ω) のまとめた形

    -(1/N) Σ_j [ (y_j-θ)²/(2β²) + 1{ω_j=α}((y_j-θ)²/2 (1/α²-1/β²) - ln((1-p)/p · β/α)) ] + c

    c = ln p - ln(β√(2π))。α 側の対数事前比は δ の定義と整合する符号で入る。
    log_likelihood と同じ値を別の計算順序で返す。
    """
    y_arr = np.asarray(y, dtype=np.float64)
    omega_arr = np.asarray(omega)
    _check_lengths(omega_arr, y_arr)

    sq = (y_arr - theta) ** 2
    is_alpha = omega_arr == Label.ALPHA
    log_ratio = math.log((1 - params.p) / params.p * params.beta / params.alpha)
    c = math.log(params.p) - math.log(params.beta) - _LOG_SQRT_2PI

    bracket = sq / (2 * params.beta ** 2) + np.where(
        is_alpha, sq / 2 * params.precision_gap - log_ratio, 0.0
    )
    return float(-np.mean(bracket) + c)


def profile_value(theta: float, y: np.ndarray, params: ModelParams) -> float:
    """プロファイル尤度 L_N(θ, ω̂(θ))"""
    return log_likelihood(theta, classify(theta, y, params.delta), y, params)


def profile_curve(thetas: np.ndarray, y: np.ndarray, params: ModelParams) -> np.ndarray:
    """
    プロファイル尤度を θ のグリッド上でまとめて評価

    累積和を使うので 1点あたり O(log N)。曲線ダンプ用。
    """
    sums = _SortedSums(y)
    t = np.asarray(thetas, dtype=np.float64) - sums.center
    count, s1, s2 = sums.active_sums(t, params.delta)

    n = sums.n
    q_all = sums.total2 - 2 * t * sums.total1 + n * t * t
    q_active = s2 - 2 * t * s1 + count * t * t
    log_ratio = math.log((1 - params.p) / params.p * params.beta / params.alpha)
    c = math.log(params.p) - math.log(params.beta) - _LOG_SQRT_2PI

    total = -q_all / (2 * params.beta ** 2) + count * log_ratio - 0.5 * params.precision_gap * q_active
    return c + total / n


def _is_breakpoint(theta: float, y: np.ndarray, delta: float) -> bool:
    return bool(np.any(np.abs(np.asarray(y, dtype=np.float64) - theta) == delta))


def profile_derivative(theta: float, y: np.ndarray, params: ModelParams) -> float:
    """
    プロファイル尤度の微分

    (1/β² - 1/α²)(1/N) Σ (θ - y_i) 1{|y_i-θ|<δ} - (1/β²)(θ - ȳ)

    Raises:
    -------
    NonDifferentiablePointError
        θ が区分点（|y_i - θ| = δ）のとき
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if _is_breakpoint(theta, y_arr, params.delta):
        raise NonDifferentiablePointError(f"profile likelihood is not differentiable at theta={theta}")

    active = np.abs(y_arr - theta) < params.delta
    inv_b2 = 1.0 / params.beta ** 2
    first = -params.precision_gap * np.sum(theta - y_arr[active]) / y_arr.size
    return float(first - inv_b2 * (theta - np.mean(y_arr)))


def _segment_edges(sums: _SortedSums, delta: float):
    """区分点をソート・重複除去し、各区間の (lo, hi, 代表点) を返す（中心化座標）"""
    raw = np.concatenate((sums.z - delta, sums.z + delta))
    breakpoints = np.unique(raw)
    lo = np.concatenate(([-np.inf], breakpoints))
    hi = np.concatenate((breakpoints, [np.inf]))

    mid = np.empty_like(lo)
    inner = np.isfinite(lo) & np.isfinite(hi)
    mid[inner] = 0.5 * (lo[inner] + hi[inner])
    mid[0] = hi[0] - 1.0
    mid[-1] = lo[-1] + 1.0
    return breakpoints, lo, hi, mid, raw.size - breakpoints.size


def _assumption_violated(sorted_y: np.ndarray, delta: float, n_merged: int) -> bool:
    """y_i - y_j ∈ {0, ±δ, ±2δ} の組があるか（区分点の一致・データ点との一致）"""
    if n_merged > 0:
        return True
    for shift in (delta, 2 * delta):
        shifted = sorted_y + shift
        idx = np.minimum(np.searchsorted(sorted_y, shifted), sorted_y.size - 1)
        if np.any(sorted_y[idx] == shifted):
            return True
    return False


def stationary_bound(params: ModelParams) -> float:
    """停留点と ȳ の距離の上界 β²C（C = (1/α² - 1/β²) δ）"""
    return params.beta ** 2 * params.precision_gap * params.delta


def enumerate_stationary(y: np.ndarray, params: ModelParams) -> StationarySet:
    """
    停留点集合 S_N を厳密に列挙

    2N 個の区分点 {y_i ± δ} で実数直線を区間に分け、各区間の活性集合を固定して
    θ = θ̂(ω̂(θ)) を閉じた形で解く。解が区間の内部にあるときだけ採用する。

    Parameters:
    -----------
    y : ndarray
        測定値（N >= 1）
    params : ModelParams

    Returns:
    --------
    stationary : StationarySet
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if y_arr.size < 1:
        raise ParameterError("enumerate_stationary requires at least one observation")

    delta = params.delta
    sums = _SortedSums(y_arr)
    breakpoints, lo, hi, mid, n_merged = _segment_edges(sums, delta)

    count, s1, _ = sums.active_sums(mid, delta)
    inv_b2 = 1.0 / params.beta ** 2
    gap = params.precision_gap
    # 中心化座標では Σ y_j / β² の項が total1（≈0）になる
    numer = inv_b2 * sums.total1 + gap * s1
    denom = sums.n * inv_b2 + gap * count
    candidate = numer / denom

    keep = (candidate > lo) & (candidate < hi)
    points = np.sort(candidate[keep] + sums.center)
    values = profile_curve(points, y_arr, params) if points.size else np.empty(0)
    argmax = int(np.argmax(values)) if values.size else -1

    bp_max = _breakpoint_maxima(breakpoints, count, s1, sums, params)
    violated = _assumption_violated(sums.y, delta, n_merged)
    if violated:
        logger.debug("coincident breakpoints detected (measure-zero configuration)")

    return StationarySet(
        points=points,
        values=values,
        global_argmax_index=argmax,
        breakpoint_maxima=bp_max,
        assumption_violated=violated,
        n_segments=int(lo.size),
    )


def _breakpoint_maxima(breakpoints, count, s1, sums: _SortedSums, params: ModelParams) -> np.ndarray:
    """区分点での片側微分を調べ、左 > 0 > 右 となる点を返す"""
    if breakpoints.size == 0:
        return np.empty(0)
    inv_b2 = 1.0 / params.beta ** 2
    gap = params.precision_gap
    n = sums.n

    def derivative(theta, k, s):
        return -gap * (k * theta - s) / n - inv_b2 * (theta - sums.total1 / n)

    left = derivative(breakpoints, count[:-1], s1[:-1])
    right = derivative(breakpoints, count[1:], s1[1:])
    found = breakpoints[(left > 0) & (right < 0)] + sums.center
    if found.size:
        logger.info("profile likelihood has %d breakpoint maxima", found.size)
    return found


def profile_segments(y: np.ndarray, params: ModelParams) -> List[ProfileSegment]:
    """
    区間ごとの ProfileSegment を作成（活性集合のマスク付き、小さな N の検証用）
    """
    y_arr = np.asarray(y, dtype=np.float64)
    sums = _SortedSums(y_arr)
    _, lo, hi, mid, _ = _segment_edges(sums, params.delta)

    segments = []
    for a, b, m in zip(lo + sums.center, hi + sums.center, mid + sums.center):
        mask = classify(m, y_arr, params.delta) == Label.ALPHA
        theta = weighted_theta(np.where(mask, Label.ALPHA, Label.BETA), y_arr, params)
        candidate = theta if a < theta < b else None
        segments.append(ProfileSegment(lo=float(a), hi=float(b), active_set_mask=mask, candidate_theta=candidate))
    return segments


def enumerate_stationary_naive(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """区間ごとに O(N) で解く参照実装（クロスチェック用）"""
    points = [seg.candidate_theta for seg in profile_segments(y, params) if seg.candidate_theta is not None]
    return np.sort(np.asarray(points, dtype=np.float64))


def ml_solution(y: np.ndarray, params: ModelParams) -> Tuple[float, np.ndarray]:
    """
    集中型 ML 解

    θ^ML = S_N 上でプロファイル尤度を最大にする点（同値なら最小の θ）、
    ω^ML = ω̂(θ^ML)

    Returns:
    --------
    theta : float
    omega : ndarray
    """
    y_arr = np.asarray(y, dtype=np.float64)
    stationary = enumerate_stationary(y_arr, params)

    if len(stationary) == 0:
        # 区分点が重なる退化ケースでは区分点そのものも候補にする
        logger.warning("empty stationary set; falling back to breakpoint candidates")
        candidates = np.unique(np.concatenate((y_arr - params.delta, y_arr + params.delta, [np.mean(y_arr)])))
        values = profile_curve(candidates, y_arr, params)
        theta = float(candidates[int(np.argmax(values))])
    else:
        theta = stationary.argmax_theta

    return theta, classify(theta, y_arr, params.delta)


def brute_force_ml(y: np.ndarray, params: ModelParams) -> Tuple[float, np.ndarray, float]:
    """
    2^N 通りのラベルを総当たりして max_ω L_N(θ̂(ω), ω) を求める（N <= 20）

    Returns:
    --------
    theta : float
    omega : ndarray
    value : float
    """
    y_arr = np.asarray(y, dtype=np.float64)
    if y_arr.size > BRUTE_FORCE_MAX_N:
        raise ParameterError(f"brute force ML limited to N <= {BRUTE_FORCE_MAX_N}, got {y_arr.size}")

    best = (math.nan, None, -math.inf)
    for labels in itertools.product((Label.ALPHA, Label.BETA), repeat=y_arr.size):
        omega = np.asarray(labels, dtype=LABEL_DTYPE)
        theta = weighted_theta(omega, y_arr, params)
        value = log_likelihood(theta, omega, y_arr, params)
        if value > best[2]:
            best = (theta, omega, value)
    return best
