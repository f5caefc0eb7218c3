import warnings

import pytest

from socialprofiling.dist import Beta, Exponential, TruncatedNormal, Uniform
from socialprofiling.pbe import MarketConfig

# reference market used throughout: 100 users, valuations uniform on [0, 40]
N, VBAR, OMEGA0 = 100, 40.0, 2.0

APPENDIX_NORMAL = TruncatedNormal(57.84, 20.25, 20.0, 100.0)


def market(delta, n=N, vbar=VBAR, omega0=OMEGA0, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return MarketConfig.uniform(n, vbar, delta, omega0, **kwargs)


def general_market(dist, delta, n=N, omega0=OMEGA0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return MarketConfig.build(n, dist, delta, omega0)


ALL_KINDS = {
    "uniform": Uniform(40.0),
    "trunc_normal": APPENDIX_NORMAL,
    "exponential": Exponential(0.05, 40.0),
    "beta": Beta(1.0, 1.5, 40.0),
}


@pytest.fixture(params=sorted(ALL_KINDS))
def any_dist(request):
    return ALL_KINDS[request.param]
