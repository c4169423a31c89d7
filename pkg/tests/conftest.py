from __future__ import annotations

import numpy as np
import pytest

from velaid.observers import ObserverGains
from velaid.so3 import exp_rotation


@pytest.fixture
def paper_gains() -> ObserverGains:
    """Stock gain set with the attitude gain exactly on the gain-condition
    boundary (double pole -1.2)."""
    return ObserverGains(k1v=1.2, k2v=1.2, k1r=1.2 * 1.2 / 9.81, k2r=2.764, g=9.81)


@pytest.fixture
def strict_gains() -> ObserverGains:
    """Gains strictly inside the gain condition (k1r well below the bound)."""
    return ObserverGains(k1v=1.2, k2v=1.2, k1r=0.1, k2r=2.764, g=9.81)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_rotation(rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    u = rng.normal(size=3)
    u *= rng.uniform(0.0, max_angle) / np.linalg.norm(u)
    return exp_rotation(u)


def random_unit(rng: np.random.Generator) -> np.ndarray:
    u = rng.normal(size=3)
    return u / np.linalg.norm(u)
