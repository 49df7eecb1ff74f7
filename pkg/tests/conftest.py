"""Session fixtures: the default docking scenario, its model-based
oracles, one data-collection pass, one library-level learning pass, and
one full CLI pipeline run. Everything downstream of the same seed, so
numbers agree across test modules."""

import time
from types import SimpleNamespace

import numpy as np
import pytest

from adpdock import (
    default_config,
    feedforward_gain,
    kernel_basis,
    kleinman_pi,
    model_based_vi,
    run_experiment,
    solve_regulator_exact,
)
from adpdock.adp import (
    assemble_regression,
    collect_data,
    recover_model_artifacts,
    solve_problem1_datadriven,
    vi_learn,
)


@pytest.fixture(scope="session")
def docking():
    config = default_config()
    model, exo = config.scenario()
    return SimpleNamespace(config=config, model=model, exo=exo)


@pytest.fixture(scope="session")
def oracle(docking):
    """Ground truth: VI bootstraps a stabilizing gain, PI polishes it."""
    cfg = docking.config
    P_vi, K_vi, vi_history = model_based_vi(docking.model, cfg.Q, cfg.R)
    P_star, K_star, iterates = kleinman_pi(docking.model, cfg.Q, cfg.R, K_vi)
    exact = solve_regulator_exact(docking.model, docking.exo, cfg.Qbar, cfg.Rbar)
    L_star = feedforward_gain(exact, K_star)
    return SimpleNamespace(
        P_vi=P_vi, K_vi=K_vi, vi_history=vi_history,
        P_star=P_star, K_star=K_star, iterates=iterates,
        exact=exact, L_star=L_star,
    )


@pytest.fixture(scope="session")
def learning_data(docking):
    """Default-excitation collection run plus its regression bundles."""
    cfg = docking.config
    noise = cfg.noise_spec()
    log = collect_data(docking.model, docking.exo, None, noise, cfg.x0,
                       horizon=cfg.horizon, dt=cfg.dt, interval=cfg.interval)
    basis = kernel_basis(docking.model)
    bundles = assemble_regression(log, basis, cfg.R, cfg.interval)
    return SimpleNamespace(noise=noise, log=log, basis=basis, bundles=bundles)


@pytest.fixture(scope="session")
def learned(docking, learning_data):
    """Library-level learning pass: vi_learn, recovery, regulator solve."""
    cfg = docking.config
    P, K, history = vi_learn(learning_data.bundles[0], cfg.Q, cfg.R)
    recovery = recover_model_artifacts(learning_data.bundles, P, K, cfg.R)
    solution = solve_problem1_datadriven(recovery, learning_data.basis, cfg.Qbar, cfg.Rbar)
    L = feedforward_gain(solution, K)
    return SimpleNamespace(P=P, K=K, L=L, history=history,
                           recovery=recovery, solution=solution)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """One timed end-to-end run of the default experiment."""
    config = default_config()
    out = tmp_path_factory.mktemp("pipeline")
    start = time.perf_counter()
    report = run_experiment(config, out_dir=out, log=lambda *args: None)
    wall = time.perf_counter() - start
    return SimpleNamespace(config=config, report=report, wall=wall, out=out)
