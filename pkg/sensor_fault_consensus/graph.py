"""
通信グラフモジュール

トポロジ（完全グラフ・リング・トーラス格子・Random Geometric Graph）の生成、
Metropolis 重みによるコンセンサス行列、lazy 化 P_τ = (1-τ)I + τP、
収束定理の行列仮定（対称・確率・原始・正の固有値）の検証を提供する。
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .exceptions import ParameterError, TopologyError
from .utils import format_float, make_rng, mix_seed

logger = logging.getLogger(__name__)

DEFAULT_SPECTRAL_CAP = 2048
DEFAULT_RGG_RETRY_CAP = 100
ROW_SUM_TOL = 1e-12

# 原始性のべき乗テストを行う最大ノード数
_POWER_TEST_CAP = 512


class TopologyKind(str, Enum):
    COMPLETE = "complete"
    RING = "ring"
    TORUS = "torus"
    RGG = "rgg"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Topology:
    """
    無向通信グラフ

    Parameters:
    -----------
    kind : TopologyKind
    n : int
        ノード数
    neighbors : tuple of tuple
        ソート済みの隣接リスト（自己ループなし）
    rows, cols : int, optional
        トーラス格子の寸法
    radius : float, optional
        RGG の半径
    seed : int, optional
        RGG の生成シード
    positions : ndarray, optional
        RGG のノード座標（[0,1]²）
    attempts : int
        連結なグラフを得るまでに要したサンプル数
    """

    kind: TopologyKind
    n: int
    neighbors: Tuple[Tuple[int, ...], ...]
    rows: Optional[int] = None
    cols: Optional[int] = None
    radius: Optional[float] = None
    seed: Optional[int] = None
    positions: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    attempts: int = 1

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray([len(nb) for nb in self.neighbors], dtype=np.int64)

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        """i < j の辺リスト"""
        return tuple((i, j) for i, nb in enumerate(self.neighbors) for j in nb if i < j)

    @property
    def tag(self) -> str:
        """シード導出や出力に使う短い名前"""
        if self.kind is TopologyKind.TORUS:
            return f"torus{self.rows}x{self.cols}"
        if self.kind is TopologyKind.RGG:
            return f"rgg{self.radius}"
        return self.kind.value

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    def is_connected(self) -> bool:
        return self.n == 1 or nx.is_connected(self.to_networkx())

    @classmethod
    def from_graph(cls, graph: nx.Graph, kind: TopologyKind = TopologyKind.CUSTOM, **extra) -> "Topology":
        """networkx のグラフ（ノード 0..n-1）から作成"""
        n = graph.number_of_nodes()
        if sorted(graph.nodes) != list(range(n)):
            raise ParameterError("graph nodes must be labelled 0..n-1")
        graph = graph.copy()
        graph.remove_edges_from(list(nx.selfloop_edges(graph)))
        neighbors = tuple(tuple(sorted(graph.neighbors(i))) for i in range(n))
        return cls(kind=kind, n=n, neighbors=neighbors, **extra)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Tuple[int, int]]) -> "Topology":
        """辺リストから任意のトポロジを作成"""
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        graph.add_edges_from(edges)
        return cls.from_graph(graph)


def torus_dims(n: int) -> Tuple[int, int]:
    """n = rows × cols となる最も正方形に近い寸法（rows <= cols）"""
    rows = int(math.isqrt(n))
    while rows > 1 and n % rows:
        rows -= 1
    return rows, n // rows


def _rgg_edges(positions: np.ndarray, radius: float) -> Sequence[Tuple[int, int]]:
    """ユークリッド距離が radius 未満のノード対"""
    if positions.shape[0] < 2:
        return []
    dist = squareform(pdist(positions))
    ii, jj = np.nonzero(np.triu(dist < radius, k=1))
    return list(zip(ii.tolist(), jj.tolist()))


def build_topology(
    kind,
    n: int,
    rows: Optional[int] = None,
    cols: Optional[int] = None,
    radius: float = 0.3,
    seed: int = 0,
    retry_cap: int = DEFAULT_RGG_RETRY_CAP,
) -> Topology:
    """
    通信トポロジを生成

    Parameters:
    -----------
    kind : TopologyKind or str
        'complete', 'ring', 'torus', 'rgg'
    n : int
        ノード数（complete 以外は n >= 2）
    rows, cols : int, optional
        トーラスの寸法（rows*cols == n）。省略時は torus_dims(n)
    radius : float
        RGG の半径（0 < radius < √2）
    seed : int
        RGG のシード。再サンプルの系列もこのシードから決まる
    retry_cap : int
        RGG の再サンプル上限

    Returns:
    --------
    topology : Topology

    Raises:
    -------
    ParameterError
        寸法・半径が不正
    TopologyError
        retry_cap 回以内に連結な RGG が得られない
    """
    kind = TopologyKind(kind)
    n = int(n)
    min_n = 1 if kind is TopologyKind.COMPLETE else 2
    if n < min_n:
        raise ParameterError(f"{kind.value} topology requires n >= {min_n}, got {n}")

    if kind is TopologyKind.COMPLETE:
        return Topology.from_graph(nx.complete_graph(n), kind=kind)

    if kind is TopologyKind.RING:
        return Topology.from_graph(nx.cycle_graph(n), kind=kind)

    if kind is TopologyKind.TORUS:
        if rows is None and cols is None:
            rows, cols = torus_dims(n)
        elif rows is None:
            rows = n // cols
        elif cols is None:
            cols = n // rows
        if rows < 1 or cols < 1 or rows * cols != n:
            raise ParameterError(f"torus requires rows*cols == n, got {rows}x{cols} for n={n}")
        grid = nx.grid_2d_graph(rows, cols, periodic=True)
        grid = nx.relabel_nodes(grid, {(r, c): r * cols + c for r, c in grid.nodes})
        return Topology.from_graph(grid, kind=kind, rows=rows, cols=cols)

    if kind is TopologyKind.RGG:
        if not 0 < radius < math.sqrt(2):
            raise ParameterError(f"RGG radius must be in (0, sqrt(2)), got {radius}")
        for attempt in range(1, retry_cap + 1):
            rng = make_rng(mix_seed(seed, 'rgg', attempt))
            positions = rng.random((n, 2))
            topology = Topology.from_edges(n, _rgg_edges(positions, radius))
            if topology.is_connected():
                if attempt > 1:
                    logger.debug("RGG n=%d r=%s connected after %d samples", n, radius, attempt)
                return replace(
                    topology, kind=kind, radius=radius, seed=seed, positions=positions, attempts=attempt
                )
        raise TopologyError(f"no connected RGG (n={n}, r={radius}) within {retry_cap} samples")

    raise ParameterError(f"cannot build topology of kind {kind.value}")


@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    """
    対称確率行列 P とスペクトル情報

    Parameters:
    -----------
    sparse : scipy.sparse.csr_matrix, optional
        n×n の非負対称行確率行列。平均化型のときは None
    spectrum : ndarray, optional
        昇順の固有値（n <= spectral_cap のとき）
    is_primitive : bool, optional
    min_eigenvalue : float, optional
    mu2 : float, optional
        2番目に大きい固有値の絶対値
    averaging : float, optional
        平均化型 P = (1-a)I + a·11ᵀ/N の a。完全グラフとその lazy 版はこの形で持ち、
        N×N の重みを保存しない
    size : int
        平均化型のノード数
    """

    sparse: Optional[sp.csr_matrix] = field(default=None, repr=False)
    spectrum: Optional[np.ndarray] = field(default=None, repr=False)
    is_primitive: Optional[bool] = None
    min_eigenvalue: Optional[float] = None
    mu2: Optional[float] = None
    averaging: Optional[float] = None
    size: int = 0
    topology: Optional[Topology] = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        if self.sparse is None:
            return self.size
        return int(self.sparse.shape[0])

    @property
    def uniform(self) -> bool:
        """P = 11ᵀ/N"""
        return self.averaging == 1.0

    @property
    def weights(self) -> sp.csr_matrix:
        """疎行列表現（平均化型では呼び出しのたびに N×N を組み立てる）"""
        if self.sparse is not None:
            return self.sparse
        return sp.csr_matrix(self.dense())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """P x（縮約の順序は固定）"""
        if self.averaging is None:
            return self.sparse @ x
        mean = np.mean(x)
        if self.uniform:
            return np.full(self.n, mean)
        return (1 - self.averaging) * x + self.averaging * mean

    def dense(self) -> np.ndarray:
        if self.sparse is not None:
            return self.sparse.toarray()
        n, a = self.size, self.averaging
        return (1 - a) * np.eye(n) + np.full((n, n), a / n)

    @classmethod
    def from_dense(cls, matrix, spectral_cap: int = DEFAULT_SPECTRAL_CAP) -> "ConsensusMatrix":
        """密行列から作成（テストや外部行列の検証用）"""
        weights = sp.csr_matrix(np.asarray(matrix, dtype=np.float64))
        return _with_metadata(cls(sparse=weights), spectral_cap)


def _strongly_connected(weights: sp.csr_matrix) -> bool:
    n_comp, _ = connected_components(weights > 0, directed=True, connection='strong')
    return n_comp == 1


def _power_test(weights: sp.csr_matrix) -> Optional[bool]:
    """
    ある k で P^k > 0（全要素正）かを調べる

    Wielandt の上界 (n-1)² + 1 を超えるまで二乗を繰り返す
    """
    n = weights.shape[0]
    if n > _POWER_TEST_CAP:
        return None
    pattern = (weights.toarray() > 0).astype(np.int64)
    bound = (n - 1) ** 2 + 1
    power = 1
    while power < bound:
        pattern = (pattern @ pattern > 0).astype(np.int64)
        power *= 2
    return bool(np.all(pattern > 0))


def _check_primitive(weights: sp.csr_matrix) -> Optional[bool]:
    """強連結かつ対角成分に正のものがあれば原始。そうでなければべき乗テスト"""
    if not _strongly_connected(weights):
        return False
    if np.any(weights.diagonal() > 0):
        return True
    return _power_test(weights)


def _spectral_summary(spectrum: np.ndarray) -> Tuple[float, float]:
    """(最小固有値, μ2)"""
    if spectrum.size < 2:
        return float(spectrum.min()), 0.0
    moduli = np.sort(np.abs(spectrum))[::-1]
    return float(spectrum.min()), float(moduli[1])


def _with_metadata(matrix: ConsensusMatrix, spectral_cap: int) -> ConsensusMatrix:
    spectrum = None
    min_eig = mu2 = None
    if matrix.n <= spectral_cap:
        spectrum = np.sort(scipy.linalg.eigvalsh(matrix.dense()))
        min_eig, mu2 = _spectral_summary(spectrum)
    return replace(
        matrix,
        spectrum=spectrum,
        is_primitive=_check_primitive(matrix.sparse),
        min_eigenvalue=min_eig,
        mu2=mu2,
    )


def complete_matrix(n: int, spectral_cap: int = DEFAULT_SPECTRAL_CAP) -> ConsensusMatrix:
    """完全グラフ（集中型に相当）の P = 11ᵀ/N（重みは保存しない）"""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    spectrum = np.zeros(n)
    spectrum[-1] = 1.0
    min_eig, mu2 = _spectral_summary(spectrum)
    return ConsensusMatrix(
        spectrum=spectrum if n <= spectral_cap else None,
        is_primitive=True,
        min_eigenvalue=min_eig if n <= spectral_cap else None,
        mu2=mu2 if n <= spectral_cap else None,
        averaging=1.0,
        size=n,
    )


def metropolis(topology: Topology, spectral_cap: int = DEFAULT_SPECTRAL_CAP) -> ConsensusMatrix:
    """
    Metropolis 重み

    P_ij = 1 / max(deg(i)+1, deg(j)+1)（(i,j) が辺のとき）、P_ii = 1 - Σ_{j≠i} P_ij。
    完全グラフでは P = 11ᵀ/N をそのまま使う。
    """
    if topology.kind is TopologyKind.COMPLETE:
        return replace(complete_matrix(topology.n, spectral_cap), topology=topology)

    n = topology.n
    deg = topology.degrees
    edges = np.asarray(topology.edges, dtype=np.int64).reshape(-1, 2)
    i, j = edges[:, 0], edges[:, 1]
    w = 1.0 / np.maximum(deg[i] + 1, deg[j] + 1)

    off = sp.coo_matrix(
        (np.concatenate((w, w)), (np.concatenate((i, j)), np.concatenate((j, i)))), shape=(n, n)
    ).tocsr()
    diag = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    weights = (off + sp.diags(diag)).tocsr()
    weights.sort_indices()

    return _with_metadata(ConsensusMatrix(sparse=weights, topology=topology), spectral_cap)


def lazy(matrix: ConsensusMatrix, tau: float) -> ConsensusMatrix:
    """
    lazy 版 P_τ = (1-τ)I + τP

    固有値は λ → (1-τ) + τλ と写る。対称性・確率性・グラフへの適合性は保たれる。
    """
    if not 0 < tau <= 1:
        raise ParameterError(f"tau must be in (0, 1], got {tau}")
    if tau == 1:
        return matrix

    n = matrix.n
    spectrum = min_eig = mu2 = None
    if matrix.spectrum is not None:
        spectrum = np.sort((1 - tau) + tau * matrix.spectrum)
        min_eig, mu2 = _spectral_summary(spectrum)

    if matrix.averaging is not None:
        return ConsensusMatrix(
            spectrum=spectrum,
            is_primitive=True,
            min_eigenvalue=min_eig,
            mu2=mu2,
            averaging=tau * matrix.averaging,
            size=n,
            topology=matrix.topology,
        )

    weights = ((1 - tau) * sp.identity(n, format='csr') + tau * matrix.sparse).tocsr()
    weights.sort_indices()
    return ConsensusMatrix(
        sparse=weights,
        spectrum=spectrum,
        is_primitive=_check_primitive(weights),
        min_eigenvalue=min_eig,
        mu2=mu2,
        topology=matrix.topology,
    )


def ring_eigenvalues(n: int) -> np.ndarray:
    """リングの Metropolis 行列の固有値 λ_m = (1 + 2cos(2πm/N))/3（昇順）"""
    m = np.arange(n)
    return np.sort((1 + 2 * np.cos(2 * np.pi * m / n)) / 3)


@dataclass(frozen=True)
class HypothesisReport:
    """
    収束定理の行列仮定のチェック結果

    positive_spectrum / nonneg_spectrum は固有値を計算しなかった場合 None
    """

    symmetric: bool
    stochastic: bool
    primitive: Optional[bool]
    positive_spectrum: Optional[bool]
    nonneg_spectrum: Optional[bool]
    min_eigenvalue: Optional[float]
    mu2: Optional[float]

    @property
    def satisfied(self) -> bool:
        return bool(self.symmetric and self.stochastic and self.primitive and self.positive_spectrum)

    def as_dict(self) -> dict:
        return {
            'symmetric': self.symmetric,
            'stochastic': self.stochastic,
            'primitive': self.primitive,
            'positive_spectrum': self.positive_spectrum,
            'nonneg_spectrum': self.nonneg_spectrum,
            'min_eigenvalue': self.min_eigenvalue,
            'mu2': self.mu2,
        }


def validate_theorem_hypotheses(
    matrix: ConsensusMatrix,
    spectral_cap: int = DEFAULT_SPECTRAL_CAP,
    eig_tol: float = 1e-12,
) -> HypothesisReport:
    """
    P が対称・確率・原始で正の固有値をもつかを診断

    仮定を満たさなくても例外にはせず、警告ログを出すだけ（収束自体はより弱い
    仮定でも観測される）。

    Parameters:
    -----------
    matrix : ConsensusMatrix
    spectral_cap : int
        固有値を密行列で計算する最大ノード数
    eig_tol : float
        固有値の符号判定の許容誤差

    Returns:
    --------
    report : HypothesisReport
    """
    if matrix.averaging is not None:
        # (1-a)I + a·11ᵀ/N は構成から対称・確率
        symmetric, stochastic = True, 0 < matrix.averaging <= 1
        primitive = matrix.is_primitive
    else:
        weights = matrix.sparse
        diff = abs(weights - weights.T)
        symmetric = diff.nnz == 0 or float(diff.max()) == 0.0

        row_sums = np.asarray(weights.sum(axis=1)).ravel()
        nonneg = weights.nnz == 0 or float(weights.data.min()) >= 0
        stochastic = bool(nonneg and np.all(np.abs(row_sums - 1) <= ROW_SUM_TOL))

        primitive = matrix.is_primitive if matrix.is_primitive is not None else _check_primitive(weights)

    spectrum = matrix.spectrum
    if spectrum is None and matrix.n <= spectral_cap:
        spectrum = np.sort(scipy.linalg.eigvalsh(matrix.dense()))

    positive = nonneg_spec = min_eig = mu2 = None
    if spectrum is not None:
        min_eig, mu2 = _spectral_summary(spectrum)
        positive = bool(min_eig > eig_tol)
        nonneg_spec = bool(min_eig > -eig_tol)

    report = HypothesisReport(
        symmetric=bool(symmetric),
        stochastic=stochastic,
        primitive=primitive,
        positive_spectrum=positive,
        nonneg_spectrum=nonneg_spec,
        min_eigenvalue=min_eig,
        mu2=mu2,
    )

    if not (report.symmetric and report.stochastic):
        logger.warning("consensus matrix is not symmetric stochastic: %s", report.as_dict())
    if report.primitive is False:
        logger.warning("consensus matrix is not primitive")
    if report.positive_spectrum is False:
        logger.warning("consensus matrix has min eigenvalue %.6g <= 0; convergence is not covered "
                       "by the theorem hypotheses (consider lazy(P, tau))", min_eig)
    elif report.positive_spectrum is None:
        logger.info("spectrum not computed for n=%d > spectral_cap=%d", matrix.n, spectral_cap)
    return report


def ensure_positive_spectrum(
    matrix: ConsensusMatrix,
    tau: float = 0.5,
    spectral_cap: int = DEFAULT_SPECTRAL_CAP,
) -> ConsensusMatrix:
    """
    正の固有値が確認できない場合は lazy(P, τ) を返す

    τ = 1/2 なら任意の対称確率行列で λ_min >= 0 が保証される
    """
    report = validate_theorem_hypotheses(matrix, spectral_cap=spectral_cap)
    if report.positive_spectrum:
        return matrix
    logger.info("applying lazy repair with tau=%s", tau)
    return lazy(matrix, tau)


def omega_projected_norms(matrix: ConsensusMatrix, t_max: int) -> np.ndarray:
    """
    ‖P^t Ω‖₂（t = 1..t_max）、Ω = I - 11ᵀ/N

    小さな行列での確認用（密行列で計算）
    """
    n = matrix.n
    dense = matrix.dense()
    omega = np.eye(n) - np.full((n, n), 1.0 / n)
    norms = np.empty(t_max)
    current = omega.copy()
    for t in range(t_max):
        current = dense @ current
        norms[t] = np.linalg.norm(current, 2)
    return norms


def edge_list_dump(matrix: ConsensusMatrix) -> str:
    """非ゼロ要素を "i j w" の形式で1行ずつ（行優先、対角を含む）"""
    coo = matrix.weights.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{int(coo.row[k])} {int(coo.col[k])} {format_float(float(coo.data[k]))}"
        for k in order
        if coo.data[k] != 0
    ]
    return "\n".join(lines) + ("\n" if lines else "")
