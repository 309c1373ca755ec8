import json

import numpy as np
import pandas as pd
import pytest

from sensor_fault_consensus import cli
from sensor_fault_consensus.cli import EXIT_INVARIANT, EXIT_OK, EXIT_USAGE, main
from sensor_fault_consensus.exceptions import InvariantViolation
from sensor_fault_consensus.likelihood import enumerate_stationary
from sensor_fault_consensus.model import ModelParams, generate


def _read_csv(path):
    return pd.read_csv(path, comment='#')


def _header(path):
    return [line for line in path.read_text(encoding='utf-8').splitlines() if line.startswith('#')]


def _body(path):
    return [line for line in path.read_text(encoding='utf-8').splitlines() if not line.startswith('#')]


def _flag(series):
    return series.astype(str).str.lower() == 'true'


class TestSimulate:
    ARGS = ['simulate', '--algo', 'ia', '--topology', 'ring', '--n', '64', '--zeta', '0.7', '--seed', '7',
            '--tau', '0.5', '--set', 'ia.trace_every=10']

    def test_ia_ring_deterministic(self, tmp_path):
        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(self.ARGS + ['--output', str(out_a)]) == EXIT_OK
        assert main(self.ARGS + ['--output', str(out_b)]) == EXIT_OK
        assert out_a.read_text() == out_b.read_text()
        assert (tmp_path / "a_trace.csv").read_text() == (tmp_path / "b_trace.csv").read_text()

        doc = json.loads(out_a.read_text())
        summary = doc['summary']
        assert summary['algorithm'] == 'ia'
        assert summary['n'] == 64
        assert summary['hypotheses']['positive_spectrum'] is True
        assert 0 <= summary['class_err'] <= 1
        assert doc['config']['run.topology'] == 'ring'

        trace = _read_csv(tmp_path / "a_trace.csv")
        assert list(trace.columns) == ['t', 'gamma', 'mean_theta', 'omega_norm', 'hamming']
        assert trace['t'].iloc[-1] == summary['iterations']

    def test_em_converges(self, tmp_path):
        out = tmp_path / "em.json"
        assert main(['simulate', '--algo', 'em', '--n', '100', '--seed', '1', '--output', str(out)]) == EXIT_OK
        summary = json.loads(out.read_text())['summary']
        assert summary['converged'] is True
        trace = _read_csv(tmp_path / "em_trace.csv")
        assert list(trace.columns) == ['iteration', 'theta', 'loglik']
        assert trace['theta'].iloc[-1] == pytest.approx(summary['theta'])

    def test_ml_to_stdout(self, capsys):
        assert main(['simulate', '--algo', 'ml', '--n', '20', '--seed', '3']) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc['summary']['stationary_points'] >= 1

    def test_trace_skipped_without_output(self, tmp_path, monkeypatch, capsys, caplog):
        monkeypatch.chdir(tmp_path)
        assert main(['simulate', '--algo', 'em', '--n', '30', '--seed', '2']) == EXIT_OK
        assert json.loads(capsys.readouterr().out)['summary']['algorithm'] == 'em'
        assert "trace not written" in caplog.text
        assert list(tmp_path.iterdir()) == []

    def test_trace_flag_without_output(self, tmp_path, capsys, caplog):
        path = tmp_path / "em_steps.csv"
        assert main(['simulate', '--algo', 'em', '--n', '30', '--seed', '2', '--trace', str(path)]) == EXIT_OK
        assert list(_read_csv(path).columns)[:2] == ['iteration', 'theta']
        assert "trace not written" not in caplog.text

    def test_missing_n(self, capsys):
        assert main(['simulate', '--algo', 'em']) == EXIT_USAGE
        assert "--n is required" in capsys.readouterr().err

    def test_unknown_key(self, capsys):
        assert main(['simulate', '--n', '5', '--set', 'model.gamma=1']) == EXIT_USAGE
        assert "model.gamma" in capsys.readouterr().err

    def test_bad_set_syntax(self):
        assert main(['simulate', '--n', '5', '--set', 'model.p']) == EXIT_USAGE

    def test_invalid_model(self):
        assert main(['simulate', '--algo', 'em', '--n', '5', '--set', 'model.p=1.5']) == EXIT_USAGE

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("run.algo=iml\nrun.n=30\nmodel.p=0.1\n", encoding="utf-8")
        out = tmp_path / "s.json"
        assert main(['simulate', '--config', str(cfg), '--output', str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc['summary']['algorithm'] == 'iml'
        assert doc['config']['model.p'] == 0.1

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("run.algo=iml\nrun.n=30\n", encoding="utf-8")
        out = tmp_path / "s.json"
        assert main(['simulate', '--config', str(cfg), '--n', '12', '--output', str(out)]) == EXIT_OK
        assert json.loads(out.read_text())['summary']['n'] == 12

    def test_invariant_exit_code(self, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise InvariantViolation("nu out of range")

        monkeypatch.setattr(cli, 'ia_run', broken)
        assert main(['simulate', '--algo', 'ia', '--n', '4']) == EXIT_INVARIANT
        assert "nu out of range" in capsys.readouterr().err


class TestLikelihoodCurve:
    def test_stationary_rows_match(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(['likelihood-curve', '--n', '50', '--seed', '3', '--points', '2001',
                     '--output', str(out)]) == EXIT_OK
        frame = _read_csv(out)
        assert list(frame.columns) == ['theta', 'profile_value', 'is_stationary']

        params = ModelParams()
        y = generate(params, 50, 3).y
        expected = enumerate_stationary(y, params)
        flagged = frame[_flag(frame['is_stationary'])]
        np.testing.assert_allclose(np.sort(flagged['theta'].to_numpy()), expected.points, atol=1e-9)

        grid = frame[~_flag(frame['is_stationary'])]
        assert len(grid) == 2001
        assert grid['profile_value'].max() <= expected.values.max() + 1e-6
        assert frame['theta'].is_monotonic_increasing

    def test_limit_curve_column(self, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(['likelihood-curve', '--n', '10', '--points', '51', '--limit-curve',
                     '--output', str(out)]) == EXIT_OK
        assert 'limit_value' in _read_csv(out).columns

    def test_header_hash_and_body_stable(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ['likelihood-curve', '--n', '20', '--seed', '5', '--points', '101']
        main(args + ['--output', str(a)])
        main(args + ['--output', str(b)])
        assert _header(a)[0].startswith("# config_hash=")
        assert _header(a) == _header(b)
        assert a.read_bytes() == b.read_bytes()
        assert b"\r\n" not in a.read_bytes()

    def test_hash_changes_with_config(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(['likelihood-curve', '--n', '20', '--seed', '5', '--points', '11', '--output', str(a)])
        main(['likelihood-curve', '--n', '20', '--seed', '6', '--points', '11', '--output', str(b)])
        assert _header(a)[0] != _header(b)[0]


class TestAsymptotics:
    def test_default_grid(self, tmp_path):
        out = tmp_path / "q.csv"
        assert main(['asymptotics', '--output', str(out)]) == EXIT_OK
        frame = _read_csv(out)
        row = frame[(frame['p'] == 0.25) & (np.isclose(frame['ratio'], 10 / 0.3))]
        assert row['q'].iloc[0] == pytest.approx(0.0200, abs=1e-3)

    def test_q_decreases_with_p(self, tmp_path):
        out = tmp_path / "q.csv"
        main(['asymptotics', '--p-values', '0.1,0.01,0.001,1e-06', '--ratios', '33.3', '--output', str(out)])
        q = _read_csv(out)['q'].to_numpy()
        assert np.all(np.diff(q) < 0)
        assert q[-1] < 1e-4

    def test_ratio_near_one_tends_to_p(self, tmp_path):
        out = tmp_path / "q.csv"
        main(['asymptotics', '--p-values', '0.25', '--ratios', '1.0001,1.001', '--output', str(out)])
        q = _read_csv(out)['q'].to_numpy()
        np.testing.assert_allclose(q, 0.25, atol=1e-3)

    def test_degenerate_cells_blank(self, tmp_path):
        out = tmp_path / "q.csv"
        main(['asymptotics', '--p-values', '0.75', '--ratios', '3.0', '--output', str(out)])
        assert np.isnan(_read_csv(out)['q'].iloc[0])

    def test_json_format(self, capsys):
        assert main(['asymptotics', '--p-values', '0.25', '--ratios', '10', '--format', 'json']) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert len(doc['rows']) == 1
        assert set(doc) == {'config_hash', 'config', 'rows'}


class TestValidateMatrix:
    def test_ring4(self, tmp_path):
        out, edges = tmp_path / "v.csv", tmp_path / "edges.txt"
        assert main(['validate-matrix', '--topology', 'ring', '--n', '4', '--output', str(out),
                     '--edges', str(edges)]) == EXIT_OK
        row = _read_csv(out).iloc[0]
        assert str(row['positive_spectrum']).lower() == 'false'
        assert row['min_eigenvalue'] == pytest.approx(-1 / 3, abs=1e-9)
        lines = _body(edges)
        assert len(lines) == 12
        assert lines[0].split()[:2] == ['0', '0']

    def test_lazy_repair(self, tmp_path):
        out = tmp_path / "v.csv"
        assert main(['validate-matrix', '--topology', 'ring', '--n', '4', '--tau', '0.5',
                     '--output', str(out)]) == EXIT_OK
        row = _read_csv(out).iloc[0]
        assert str(row['positive_spectrum']).lower() == 'true'
        assert str(row['satisfied']).lower() == 'true'

    def test_bad_torus(self):
        assert main(['validate-matrix', '--topology', 'torus', '--n', '10', '--rows', '3']) == EXIT_USAGE


class TestSweep:
    ARGS = ['sweep', '--n-values', '5,8', '--algorithms', 'ia,em,iml,ml', '--topologies', 'complete',
            '--zetas', '0.7', '--mc-runs', '3', '--base-seed', '4']

    def test_outputs(self, tmp_path):
        rows, trials, compare = tmp_path / "rows.csv", tmp_path / "trials.csv", tmp_path / "cmp.csv"
        assert main(self.ARGS + ['--output', str(rows), '--trials', str(trials),
                                 '--compare', str(compare)]) == EXIT_OK
        frame = _read_csv(rows)
        assert list(frame.columns) == ['n', 'topology', 'algorithm', 'zeta', 'mc_runs', 'mean_class_err',
                                       'std_class_err', 'mse_theta', 'mean_iters', 'nonconverged']
        assert len(frame) == 2 * 4
        assert len(_read_csv(trials)) == 2 * 4 * 3
        assert 'method' in _read_csv(compare).columns

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(self.ARGS + ['--output', str(a)])
        main(self.ARGS + ['--output', str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_json(self, tmp_path):
        out = tmp_path / "rows.json"
        assert main(self.ARGS + ['--format', 'json', '--output', str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert len(doc['rows']) == 8
        assert doc['config']['montecarlo.mc_runs'] == 3
