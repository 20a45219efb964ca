"""Shared scenario runs; the expensive trajectories are computed once per session."""

from __future__ import annotations

import pytest

from krflab.flow import evolve
from krflab.runner import run_scenario
from krflab.scenarios import preset
import krflab.estimates as E


def _traj(name, **overrides):
    cfg = preset(name)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    backend = cfg.build_backend()
    return evolve(
        backend, cfg.controller,
        extra_snapshots=cfg.extra_snapshots,
        row_collector=E.diagnostics_row,
    )


@pytest.fixture(scope="session")
def torus_traj():
    return _traj("torus-infinite-collapse")


@pytest.fixture(scope="session")
def cp2_traj():
    return _traj("homog-cp2-fano")


@pytest.fixture(scope="session")
def fano_half_traj():
    return _traj("fano-total-collapse")


@pytest.fixture(scope="session")
def ke_traj():
    return _traj("product-ke-fixed")


@pytest.fixture(scope="session")
def hyp_ell_traj():
    return _traj("product-hyp-x-elliptic")


@pytest.fixture(scope="session")
def f1_contraction_art():
    """Full f1-contraction artifacts including refinement variants (~25 s)."""
    return run_scenario(preset("f1-contraction"))


@pytest.fixture(scope="session")
def f1_fiber_art():
    """Full f1-fiber-collapse artifacts including refinement variants (~35 s)."""
    return run_scenario(preset("f1-fiber-collapse"))
