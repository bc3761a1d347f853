import numpy as np
import pytest

from detection.channel_model import ChannelInstance, gen_iid_channel, gen_symbols, observe


@pytest.fixture
def scalar_channel() -> ChannelInstance:
    """(n, m) = (1, 1)，H = 1"""
    return ChannelInstance.from_matrix(np.array([[1.0]]))


@pytest.fixture
def channel_8x8() -> ChannelInstance:
    return gen_iid_channel(8, 8, seed=20240404)


@pytest.fixture
def smooth_channel() -> ChannelInstance:
    """元素方差 1/m 的 8×16 信道，谱集中在 [0.1, 3] 左右"""
    return gen_iid_channel(8, 16, per_element_variance=1 / 16, seed=7)


@pytest.fixture
def received_8x8(channel_8x8):
    s = gen_symbols('QPSK', channel_8x8.n, seed=1)
    return observe(channel_8x8, s, 1.0, seed=2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(12345))
