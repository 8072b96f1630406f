import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from ikglobal.kinematics import DhLink, KinematicChain

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

GOLDEN = Path(__file__).parent / "golden"


def random_chain(rng, n, limit=3.0, alpha=None, hat=None):
    links = []
    for k in range(n):
        a = rng.uniform(-3.0, 3.0) if alpha is None else alpha
        links.append(
            DhLink(
                d=float(rng.uniform(0.1, 1.0)),
                r=float(rng.uniform(0.1, 1.0)),
                alpha=float(a),
                theta_min=-limit,
                theta_max=limit,
                theta_hat=float(rng.uniform(-limit, limit) if hat is None else hat[k]),
            )
        )
    return KinematicChain(links)


def planar(n=2, r=1.0):
    return KinematicChain([DhLink(d=0.0, r=r, alpha=0.0) for _ in range(n)])


@st.composite
def chains(draw, min_n=1, max_n=6):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    limit = draw(st.sampled_from([math.pi, 3.0, 2.0, 1.0]))
    return random_chain(rng, n, limit=limit)


@st.composite
def chain_and_angles(draw, min_n=1, max_n=6):
    chain = draw(chains(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    theta = np.random.default_rng(seed).uniform(chain.lower, chain.upper)
    return chain, theta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
