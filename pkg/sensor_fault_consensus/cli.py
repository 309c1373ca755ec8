"""
コマンドラインインターフェース

    fault-consensus simulate --algo ia --topology ring --n 64 --zeta 0.7 --seed 7
    fault-consensus sweep --n-values 50,100 --mc-runs 100 --output sweep.csv
    fault-consensus likelihood-curve --n 50 --seed 3 --output curve.csv
    fault-consensus validate-matrix --topology ring --n 4
    fault-consensus asymptotics --format json

終了コード: 0 成功（未収束を含む）、2 使い方・設定の誤り、3 内部不変条件の違反
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .asymptotics import limit_classification_error, limit_profile
from .baselines import em_run, iml_run
from .config import Config, Settings, parse_scalar
from .exceptions import (
    ConfigError,
    InvariantViolation,
    ParameterError,
    TopologyError,
)
from .graph import (
    ConsensusMatrix,
    TopologyKind,
    build_topology,
    edge_list_dump,
    lazy,
    metropolis,
    validate_theorem_hypotheses,
)
from .ia import GammaSchedule, StopRule, ia_run
from .likelihood import enumerate_stationary, ml_solution, profile_curve
from .model import ModelParams, generate
from .montecarlo import ExperimentConfig, algorithm_specs, run_sweep, topology_specs
from .report_writer import ReportWriter
from .utils import mix_seed, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3

# コマンドラインフラグ → 設定キー
FLAG_KEYS = {
    'algo': 'run.algo',
    'topology': 'run.topology',
    'n': 'run.n',
    'seed': 'run.seed',
    'rows': 'run.rows',
    'cols': 'run.cols',
    'zeta': 'ia.zeta',
    'tau': 'graph.lazy_tau',
    'radius': 'graph.rgg_radius',
    'format': 'output.format',
    'n_values': 'sweep.n_values',
    'topologies': 'sweep.topologies',
    'algorithms': 'sweep.algorithms',
    'zetas': 'sweep.zetas',
    'mc_runs': 'montecarlo.mc_runs',
    'base_seed': 'montecarlo.base_seed',
    'n_jobs': 'montecarlo.n_jobs',
    'points': 'curve.points',
    'limit_curve': 'curve.limit_curve',
    'p_values': 'asymptotics.p_values',
    'ratios': 'asymptotics.ratios',
}


def _parse_assignments(items: Optional[List[str]]) -> Dict[str, str]:
    """--set key=value の並びを辞書に"""
    out = {}
    for item in items or []:
        if '=' not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split('=', 1)
        out[key.strip()] = parse_scalar(value)
    return out


def resolve_config(args: argparse.Namespace) -> Config:
    """デフォルト < YAML < 環境変数 < key=value ファイル < --set < 個別フラグ"""
    config = Config(args.settings)
    if args.config:
        config.load_kv(args.config)
    config.update(_parse_assignments(args.set))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None and value is not False:
            config.set(key, value)
    if args.verbose:
        config.set('debug.verbose', True)
    return config


def _model_params(settings: Settings) -> ModelParams:
    m = settings.model
    return ModelParams(theta_star=m.theta_star, alpha=m.alpha, beta=m.beta, p=m.p)


def _gamma(settings: Settings) -> GammaSchedule:
    ia = settings.ia
    return GammaSchedule(
        family=ia.gamma_family, zeta=ia.zeta, exponent=ia.log_exponent, t_offset=ia.t_offset
    )


def _stop_rule(settings: Settings) -> StopRule:
    ia = settings.ia
    return StopRule(
        mode=ia.stop_mode, window=ia.window, eps=ia.eps, eps_consensus=ia.eps_consensus, t_max=ia.t_max
    )


def _build_matrix(settings: Settings, n: int) -> ConsensusMatrix:
    run, graph = settings.run, settings.graph
    topology = build_topology(
        TopologyKind(run.topology),
        n,
        rows=run.rows,
        cols=run.cols,
        radius=graph.rgg_radius,
        seed=mix_seed(run.seed, 'graph'),
        retry_cap=graph.rgg_retry_cap,
    )
    matrix = metropolis(topology, graph.spectral_cap)
    if graph.lazy_tau is not None:
        matrix = lazy(matrix, graph.lazy_tau)
    return matrix


def _require_n(settings: Settings) -> int:
    if settings.run.n is None:
        raise ConfigError("--n is required")
    return settings.run.n


def _trace_path(args: argparse.Namespace) -> Optional[Path]:
    if args.trace:
        return Path(args.trace)
    if args.output:
        out = Path(args.output)
        return out.with_name(f"{out.stem}_trace.csv")
    return None


def cmd_simulate(args: argparse.Namespace, config: Config) -> int:
    """1回の実行: トレース CSV と結果サマリ JSON"""
    settings = config.settings()
    n = _require_n(settings)
    params = _model_params(settings)
    obs = generate(params, n, settings.run.seed)
    resolved = config.resolved()

    algo = settings.run.algo
    if algo == 'ia':
        matrix = _build_matrix(settings, n)
        hypotheses = validate_theorem_hypotheses(matrix, settings.graph.spectral_cap)
        result = ia_run(
            obs.y,
            matrix,
            _gamma(settings),
            params,
            stop=_stop_rule(settings),
            trace_every=settings.ia.trace_every,
            check_invariants=settings.debug.mode,
        )
        summary = result.summary()
        summary['hypotheses'] = hypotheses.as_dict()
        trace = result.consensus_trace
        omega = result.omega_limit
    elif algo in ('em', 'iml'):
        runner = em_run if algo == 'em' else iml_run
        result = runner(obs.y, params, eps=settings.baselines.eps, max_iter=settings.baselines.max_iter)
        summary = result.summary()
        trace = pd.DataFrame({
            'iteration': np.arange(result.theta_trace.size),
            'theta': result.theta_trace,
        })
        if result.loglik_trace is not None:
            trace['loglik'] = np.append(result.loglik_trace, np.nan)[: len(trace)]
        omega = result.omega
    else:
        theta, omega = ml_solution(obs.y, params)
        stationary = enumerate_stationary(obs.y, params)
        summary = {'theta': theta, 'converged': True, 'stationary_points': len(stationary)}
        trace = None

    summary['algorithm'] = algo
    summary['n'] = n
    summary['class_err'] = float(np.mean(omega != obs.omega_true))
    summary['sq_err'] = (summary.get('theta_limit', summary.get('theta')) - params.theta_star) ** 2
    if not summary.get('converged', True):
        logger.warning("run did not converge; results are flagged")

    writer = ReportWriter(resolved, fmt='csv')
    trace_path = _trace_path(args)
    if trace is not None and trace_path is not None:
        writer.write_table(trace, trace_path)
    elif trace is not None:
        logger.warning("trace not written: pass --output or --trace to save it")
    ReportWriter(resolved, fmt='json').write_summary(summary, args.output)
    return EXIT_OK


def _experiment_config(settings: Settings) -> ExperimentConfig:
    ia = settings.ia
    return ExperimentConfig(
        params=_model_params(settings),
        n_values=settings.sweep.n_values,
        topologies=topology_specs(settings.sweep.topologies, radius=settings.graph.rgg_radius),
        algorithms=algorithm_specs(
            settings.sweep.algorithms, settings.sweep.zetas, ia.gamma_family, ia.log_exponent
        ),
        mc_runs=settings.montecarlo.mc_runs,
        base_seed=settings.montecarlo.base_seed,
        tau=settings.graph.lazy_tau,
        n_jobs=settings.montecarlo.n_jobs,
        stop=_stop_rule(settings),
        baseline_eps=settings.baselines.eps,
        baseline_max_iter=settings.baselines.max_iter,
        spectral_cap=settings.graph.spectral_cap,
        rgg_retry_cap=settings.graph.rgg_retry_cap,
    )


def cmd_sweep(args: argparse.Namespace, config: Config) -> int:
    """モンテカルロ・スイープ"""
    settings = config.settings()
    report = run_sweep(_experiment_config(settings))
    writer = ReportWriter(config.resolved(), fmt=settings.output.format)
    writer.write_table(report.rows, args.output)
    if args.trials:
        writer.write_table(report.trials, args.trials)
    if args.compare:
        writer.write_table(report.comparison_table().reset_index(), args.compare)
    return EXIT_OK


def likelihood_curve_frame(y: np.ndarray, params: ModelParams, points: int, with_limit: bool = False) -> pd.DataFrame:
    """
    プロファイル尤度のグリッド [min y - 2δ, max y + 2δ] と停留点の行をまとめた表

    停留点の行は is_stationary=True で、θ 順に並べる
    """
    delta = params.delta
    grid = np.linspace(y.min() - 2 * delta, y.max() + 2 * delta, points)
    stationary = enumerate_stationary(y, params)

    frame = pd.DataFrame({
        'theta': np.concatenate((grid, stationary.points)),
        'profile_value': np.concatenate((profile_curve(grid, y, params), stationary.values)),
        'is_stationary': np.concatenate((np.zeros(grid.size, bool), np.ones(len(stationary), bool))),
    })
    frame = frame.sort_values(['theta', 'is_stationary'], kind='mergesort').reset_index(drop=True)
    if with_limit:
        frame['limit_value'] = limit_profile(frame['theta'].to_numpy(), params)
    return frame


def cmd_likelihood_curve(args: argparse.Namespace, config: Config) -> int:
    """プロファイル尤度曲線の出力"""
    settings = config.settings()
    n = _require_n(settings)
    params = _model_params(settings)
    obs = generate(params, n, settings.run.seed)
    frame = likelihood_curve_frame(obs.y, params, settings.curve.points, settings.curve.limit_curve)
    ReportWriter(config.resolved(), fmt=settings.output.format).write_table(frame, args.output)
    return EXIT_OK


def cmd_validate_matrix(args: argparse.Namespace, config: Config) -> int:
    """行列仮定の診断と辺リストの出力"""
    settings = config.settings()
    n = _require_n(settings)
    matrix = _build_matrix(settings, n)
    report = validate_theorem_hypotheses(matrix, settings.graph.spectral_cap)

    resolved = config.resolved()
    writer = ReportWriter(resolved, fmt=settings.output.format)
    row = dict(report.as_dict(), satisfied=report.satisfied, n=n, topology=settings.run.topology)
    writer.write_table(pd.DataFrame([row]), args.output)
    if args.edges:
        writer.write_text(edge_list_dump(matrix).splitlines(), args.edges)
    return EXIT_OK


def asymptotics_frame(alpha: float, p_values: List[float], ratios: List[float]) -> pd.DataFrame:
    """(p, β/α) グリッド上の q。δ が定義できない組は q を欠損にする"""
    rows = []
    for p in p_values:
        for ratio in ratios:
            params = ModelParams(alpha=alpha, beta=alpha * ratio, p=p)
            if params.has_threshold:
                rows.append(limit_classification_error(params).as_dict())
            else:
                rows.append({'p': p, 'alpha': alpha, 'beta': alpha * ratio, 'ratio': ratio,
                             'delta': None, 'q': None, 'alpha_term': None, 'beta_term': None})
    return pd.DataFrame(rows, columns=['p', 'alpha', 'beta', 'ratio', 'delta', 'q', 'alpha_term', 'beta_term'])


def cmd_asymptotics(args: argparse.Namespace, config: Config) -> int:
    """漸近分類誤差 q(p, α, β) の表"""
    settings = config.settings()
    frame = asymptotics_frame(settings.model.alpha, settings.asymptotics.p_values, settings.asymptotics.ratios)
    ReportWriter(config.resolved(), fmt=settings.output.format).write_table(frame, args.output)
    return EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--settings', help='YAML 設定ファイル（省略時は config/settings.yaml）')
    common.add_argument('--config', help='key=value 形式の実行設定ファイル')
    common.add_argument('--set', action='append', metavar='KEY=VALUE', help='設定値の上書き（複数可）')
    common.add_argument('--output', '-o', help='出力先（省略時は標準出力）')
    common.add_argument('--format', choices=['csv', 'json'])
    common.add_argument('--verbose', '-v', action='store_true')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog='fault-consensus',
        description='センサネットワークの分散推定・故障分類シミュレータ',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='1回の実行（トレース付き）')
    p.add_argument('--algo', choices=['ia', 'em', 'iml', 'ml'])
    p.add_argument('--topology', choices=[k.value for k in TopologyKind if k is not TopologyKind.CUSTOM])
    p.add_argument('--n', type=int)
    p.add_argument('--zeta', type=float)
    p.add_argument('--seed', type=int)
    p.add_argument('--rows', type=int)
    p.add_argument('--cols', type=int)
    p.add_argument('--tau', type=float)
    p.add_argument('--radius', type=float)
    p.add_argument('--trace', help='トレース CSV の出力先')
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('sweep', parents=[common], help='モンテカルロ・スイープ')
    p.add_argument('--n-values', dest='n_values')
    p.add_argument('--topologies')
    p.add_argument('--algorithms')
    p.add_argument('--zetas')
    p.add_argument('--mc-runs', dest='mc_runs', type=int)
    p.add_argument('--base-seed', dest='base_seed', type=int)
    p.add_argument('--n-jobs', dest='n_jobs', type=int)
    p.add_argument('--tau', type=float)
    p.add_argument('--radius', type=float)
    p.add_argument('--trials', help='試行ごとの記録の出力先')
    p.add_argument('--compare', help='比較表の出力先')
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser('likelihood-curve', parents=[common], help='プロファイル尤度曲線')
    p.add_argument('--n', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--points', type=int)
    p.add_argument('--limit-curve', dest='limit_curve', action='store_true')
    p.set_defaults(handler=cmd_likelihood_curve)

    p = sub.add_parser('validate-matrix', parents=[common], help='コンセンサス行列の仮定を診断')
    p.add_argument('--topology', choices=[k.value for k in TopologyKind if k is not TopologyKind.CUSTOM])
    p.add_argument('--n', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--rows', type=int)
    p.add_argument('--cols', type=int)
    p.add_argument('--tau', type=float)
    p.add_argument('--radius', type=float)
    p.add_argument('--edges', help='辺リストの出力先')
    p.set_defaults(handler=cmd_validate_matrix)

    p = sub.add_parser('asymptotics', parents=[common], help='漸近分類誤差の表')
    p.add_argument('--p-values', dest='p_values')
    p.add_argument('--ratios')
    p.set_defaults(handler=cmd_asymptotics)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    エントリポイント

    Returns:
    --------
    exit_code : int
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = resolve_config(args)
        settings = config.settings()
        setup_logging(verbose=settings.debug.verbose, level=settings.debug.log_level)
        return args.handler(args, config)
    except (ConfigError, ParameterError, TopologyError) as e:
        logger.debug("usage error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as e:
        logger.debug("invariant violation", exc_info=True)
        print(f"internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == '__main__':
    sys.exit(main())
