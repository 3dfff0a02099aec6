import math

import pytest

from mcvd.model import ChannelSpec, LinkConfig

# r_r = 10 µm, d = 4 µm, D = 79.4 µm²/s throughout
RECEIVER_RADIUS = 10.0
DISTANCE = 4.0
DIFFUSION = 79.4


def rate(half_life: float) -> float:
    return 0.0 if math.isinf(half_life) else math.log(2.0) / half_life


@pytest.fixture
def plain_channel():
    return ChannelSpec.from_distance(DISTANCE, receiver_radius=RECEIVER_RADIUS, diffusion_coeff=DIFFUSION)


@pytest.fixture
def degraded_channel():
    # half-life 16 ms
    return ChannelSpec.from_distance(DISTANCE, receiver_radius=RECEIVER_RADIUS, diffusion_coeff=DIFFUSION,
                                     degradation_rate=rate(0.016))


@pytest.fixture
def fast_channel():
    # half-life 1 ms: the whole response fits in one 60 ms slot
    return ChannelSpec.from_distance(DISTANCE, receiver_radius=RECEIVER_RADIUS, diffusion_coeff=DIFFUSION,
                                     degradation_rate=rate(0.001))


@pytest.fixture
def isi_link(degraded_channel):
    return LinkConfig(channel=degraded_channel, symbol_duration=0.06, n1=1000)
