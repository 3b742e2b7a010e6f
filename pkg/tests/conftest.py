"""Shared acceptance sweep fixtures (built once per session)."""

import pytest

from qwsn.harness import QOS_ORDER, derive_side
from qwsn.sim import SimConfig, build_topology, simulate_query_round

ACCEPT_SIZES = (50, 75, 100, 125, 150)
ACCEPT_FAILURE_SIZES = (50, 75, 100, 125)
ACCEPT_FRACTIONS = (0.1, 0.2)
ACCEPT_SEEDS = tuple(range(10))


def _config(n, fraction, seed):
    return SimConfig(n=n, side=derive_side(n), seed=seed, failure_fraction=fraction)


def _run_grid(sizes, fractions, seeds):
    runs = {}
    topologies = {}
    for n in sizes:
        for seed in seeds:
            for fraction in fractions:
                config = _config(n, fraction, seed)
                key = (n, seed)
                if key not in topologies:
                    topologies[key] = build_topology(config)
                for qos in QOS_ORDER:
                    runs[(qos, n, fraction, seed)] = simulate_query_round(
                        config, qos, topology=topologies[key]
                    )
    return runs


@pytest.fixture(scope="session")
def energy_latency_runs():
    """Zero-failure grid: sizes 50..150, all classes, ten topologies each."""
    return _run_grid(ACCEPT_SIZES, (0.0,), ACCEPT_SEEDS)


@pytest.fixture(scope="session")
def failure_runs():
    """Failure grid: sizes 50..125, 10 % and 20 % dead, all classes."""
    return _run_grid(ACCEPT_FAILURE_SIZES, ACCEPT_FRACTIONS, ACCEPT_SEEDS)
