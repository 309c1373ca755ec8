"""
受け入れ実験

数分かかるものは slow マーカー付き（pytest --runslow で実行）
"""

import numpy as np
import pytest

from sensor_fault_consensus.asymptotics import limit_classification_error
from sensor_fault_consensus.graph import build_topology, complete_matrix, lazy, metropolis, validate_theorem_hypotheses
from sensor_fault_consensus.ia import GammaSchedule, StopRule, consensus_diagnostics, ia_run
from sensor_fault_consensus.likelihood import brute_force_ml, enumerate_stationary, log_likelihood, ml_solution
from sensor_fault_consensus.model import classify, generate, weighted_theta
from sensor_fault_consensus.montecarlo import (
    AlgorithmKind,
    AlgorithmSpec,
    ExperimentConfig,
    TopologySpec,
    run_sweep,
)
from sensor_fault_consensus.utils import mix_seed


def _matrix(kind, n, seed):
    if kind == 'complete':
        return complete_matrix(n)
    if kind == 'torus':
        return metropolis(build_topology('torus', n))
    if kind == 'lazy_ring':
        return lazy(metropolis(build_topology('ring', n)), 0.5)
    return metropolis(build_topology('rgg', n, radius=0.3, seed=seed))


@pytest.mark.slow
def test_fixed_point_limit(params):
    kinds = ('complete', 'torus', 'lazy_ring', 'rgg')
    runs, converged = 200, 0
    for k in range(runs):
        n = (16, 64)[k % 2]
        kind = kinds[(k // 2) % 4]
        zeta = (0.5, 0.7, 0.9)[(k // 8) % 3]
        seed = mix_seed('fixed-point', k)
        y = generate(params, n, seed).y
        result = ia_run(y, _matrix(kind, n, seed), GammaSchedule.power(zeta), params)
        if not result.converged:
            continue
        converged += 1
        np.testing.assert_array_equal(result.omega_limit, classify(result.theta_limit, y, params.delta))
        assert result.theta_limit == pytest.approx(weighted_theta(result.omega_limit, y, params), rel=1e-12)
    assert converged >= 0.99 * runs


def test_ia_limit_is_stationary(params):
    converged = 0
    for k in range(100):
        n = 3 + k % 8
        y = generate(params, n, mix_seed('stationary', k)).y
        result = ia_run(y, lazy(metropolis(build_topology('ring', n)), 0.5), GammaSchedule.power(0.7), params)
        if not result.converged:
            continue
        converged += 1
        points = enumerate_stationary(y, params).points
        assert np.min(np.abs(points - result.theta_limit)) < 1e-6
    assert converged >= 95


def test_exact_ml_matches_exhaustive_search(params):
    for k in range(50):
        n = 1 + k % 10
        y = generate(params, n, mix_seed('ml-oracle', k)).y
        theta, omega = ml_solution(y, params)
        _, _, best = brute_force_ml(y, params)
        assert log_likelihood(theta, omega, y, params) == pytest.approx(best, abs=1e-12)


@pytest.mark.slow
def test_asymptotic_classification_error(params):
    config = ExperimentConfig(
        params=params,
        n_values=(1000,),
        topologies=(TopologySpec('complete'),),
        algorithms=(
            AlgorithmSpec(AlgorithmKind.IA, zeta=0.7),
            AlgorithmSpec(AlgorithmKind.EM),
            AlgorithmSpec(AlgorithmKind.ML_EXACT),
        ),
        mc_runs=400,
        base_seed=2024,
    )
    rows = run_sweep(config).rows.set_index('algorithm')
    target = limit_classification_error(params).q_value
    assert target == pytest.approx(0.0200, abs=1e-3)
    for algorithm in ('ia', 'em', 'ml'):
        assert abs(rows.loc[algorithm, 'mean_class_err'] - 0.0200) < 0.006


@pytest.mark.slow
def test_theta_consistency(params):
    config = ExperimentConfig(
        params=params,
        n_values=(50, 1000),
        topologies=(TopologySpec('complete'),),
        algorithms=(AlgorithmSpec(AlgorithmKind.IA, zeta=0.7),),
        mc_runs=100,
        base_seed=7,
    )
    mse = run_sweep(config).rows.set_index('n')['mse_theta']
    assert mse.loc[1000] < mse.loc[50]
    assert mse.loc[1000] < 0.01


def test_local_maxima_concentrate(params):
    spread = {}
    for n in (50, 400, 5000):
        spread[n] = np.array([
            np.max(np.abs(enumerate_stationary(generate(params, n, mix_seed('concentration', n, s)).y,
                                               params).points - params.theta_star))
            for s in range(20)
        ])
    means = [spread[n].mean() for n in (50, 400, 5000)]
    assert means[0] > means[1] > means[2]
    # 平均は外れ値の塊の近くに残る孤立した極大に引きずられるので中央値で見る
    assert np.median(spread[5000]) < 0.1


@pytest.mark.slow
def test_consensus_rate_bounded(params):
    gamma = GammaSchedule.power(0.7)
    matrix = lazy(metropolis(build_topology('ring', 32)), 0.5)
    for k in range(20):
        y = generate(params, 32, mix_seed('rate', k)).y
        result = ia_run(y, matrix, gamma, params, stop=StopRule(window=20_000), trace_every=50)
        diag = consensus_diagnostics(result.consensus_trace, result.stabilization_time)
        assert np.isfinite(diag.max_after)
        assert diag.relative_slope < 1.0
        # 有界な極限に近づく比は γ に対する弾性が 0 へ向かう。‖Ωθ̂‖ = O(γ^0.5) なら -0.5
        assert diag.gamma_elasticity > -0.3


@pytest.mark.slow
def test_small_n_comparison_table_is_deterministic(params):
    config = ExperimentConfig(
        params=params,
        n_values=(10, 50),
        topologies=(TopologySpec('complete'), TopologySpec('ring', tau=0.5)),
        algorithms=(
            AlgorithmSpec(AlgorithmKind.IA, zeta=0.7),
            AlgorithmSpec(AlgorithmKind.IML),
            AlgorithmSpec(AlgorithmKind.EM),
        ),
        mc_runs=20,
        base_seed=3,
    )
    first = run_sweep(config).comparison_table()
    second = run_sweep(config).comparison_table()
    assert first.equals(second)
    assert {"iml", "em", "ia @complete zeta=0.7", "ia @ring-lazy0.5 zeta=0.7"} <= set(first.index)
    assert first.notna().all().all()


def test_hypothesis_validator_ring4():
    report = validate_theorem_hypotheses(metropolis(build_topology('ring', 4)))
    assert report.positive_spectrum is False
    assert report.min_eigenvalue == pytest.approx(-1 / 3, abs=1e-9)
    repaired = validate_theorem_hypotheses(lazy(metropolis(build_topology('ring', 4)), 0.5))
    assert repaired.positive_spectrum is True
