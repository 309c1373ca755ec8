"""共通のフィクスチャと slow マーカー"""

import numpy as np
import pytest

from sensor_fault_consensus.model import ModelParams, generate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="数分かかる受け入れ実験も実行する")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 数分かかる実験（--runslow で実行）")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow を指定したときだけ実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def params():
    """シミュレーションの標準パラメータ（θ*=0, α=0.3, β=10, p=0.25）"""
    return ModelParams()


@pytest.fixture
def small_instances(params):
    """N <= 10 のシード付きデータ"""
    return [generate(params, n, seed).y for seed in range(8) for n in (2, 5, 10)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
