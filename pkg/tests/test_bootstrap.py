"""Tests for parametric-bootstrap uncertainty quantification."""

import numpy as np
import pytest

from blockmix.bootstrap import (
    BootstrapConfig,
    anchor_alpha,
    parameter_names,
    parameter_vector,
    run_bootstrap,
)
from blockmix.engine import FitConfig, fit
from blockmix.models import TabularBlockModel
from blockmix.network import binary_alphabet, make_dyad_alphabet
from blockmix.simulator import SimSpec, sample_network


def _planted_fit(seed=1, n=150):
    """A converged 2-block fit on well-separated planted data."""
    da = make_dyad_alphabet(binary_alphabet(), directed=False)
    b = da.baseline_index
    pi = np.zeros((2, 2, 2))
    pi[1 - b] = [[0.3, 0.01], [0.01, 0.3]]
    pi[b] = 1.0 - pi[1 - b]
    truth = TabularBlockModel(2, da, pi)
    net, z = sample_network(SimSpec(n=n, gamma=np.array([0.6, 0.4]),
                                    model=truth, seed=seed, relabel=True))
    result = fit(net, TabularBlockModel.uniform(2, da),
                 FitConfig(max_sweeps=500, restarts=2, seed=seed))
    assert result.converged
    # guard: the fit found the planted split, not a spurious optimum
    assert result.state.gamma.max() > 0.55
    return result


# ----------------------------------------------------------------- anchors


def test_anchor_alpha_matches_pinning_convention():
    alpha = anchor_alpha(np.array([2]), K=5, epsilon=1e-10)
    want = np.full(5, 1e-10)
    want[2] = 1.0 - 4e-10
    assert np.array_equal(alpha[0], want)


def test_anchor_alpha_k1():
    assert np.array_equal(anchor_alpha(np.zeros(3, dtype=int), 1),
                          np.ones((3, 1)))


def test_anchor_alpha_rows_sum_to_one_exactly():
    rng = np.random.default_rng(0)
    for K in (2, 3, 7):
        z = rng.integers(0, K, size=40)
        alpha = anchor_alpha(z, K)
        assert np.all(alpha.sum(axis=1) == 1.0)


def test_anchor_alpha_rejects_out_of_range():
    with pytest.raises(ValueError):
        anchor_alpha(np.array([0, 3]), K=3)


# ----------------------------------------------------------------- vectors


def test_parameter_vector_and_names_align():
    result = _planted_fit()
    model = result.state.model
    names = parameter_names(model)
    vec = parameter_vector(model, result.state.gamma)
    assert len(vec) == len(names) + model.K
    assert np.allclose(vec[:len(names)], model.pi.ravel())
    assert np.allclose(vec[len(names):], result.state.gamma)


# --------------------------------------------------------------- bootstrap


def test_run_bootstrap_b0_empty():
    result = _planted_fit()
    out = run_bootstrap(result, BootstrapConfig(B=0, seed=0))
    assert out.samples.shape[0] == 0
    assert np.all(np.isnan(out.ci))
    assert out.failures == []


def test_run_bootstrap_deterministic():
    result = _planted_fit()
    config = BootstrapConfig(B=4, seed=9, refit_max_sweeps=60)
    a = run_bootstrap(result, config)
    b = run_bootstrap(result, config)
    assert np.array_equal(a.samples, b.samples, equal_nan=True)
    assert np.array_equal(a.ci, b.ci, equal_nan=True)
    assert np.array_equal(a.replicate_lb, b.replicate_lb)


def test_run_bootstrap_jobs_do_not_change_result():
    result = _planted_fit()
    serial = run_bootstrap(result, BootstrapConfig(B=4, seed=9, jobs=1,
                                                   refit_max_sweeps=60))
    parallel = run_bootstrap(result, BootstrapConfig(B=4, seed=9, jobs=2,
                                                     refit_max_sweeps=60))
    assert np.array_equal(serial.samples, parallel.samples, equal_nan=True)
    assert np.array_equal(serial.replicate_lb, parallel.replicate_lb)


def test_run_bootstrap_intervals_monotone_in_levels():
    result = _planted_fit()
    narrow = run_bootstrap(result, BootstrapConfig(
        B=12, seed=3, refit_max_sweeps=60, ci_levels=(0.25, 0.75)))
    wide = run_bootstrap(result, BootstrapConfig(
        B=12, seed=3, refit_max_sweeps=60, ci_levels=(0.05, 0.95)))
    assert np.all(wide.ci[:, 0] <= narrow.ci[:, 0] + 1e-12)
    assert np.all(wide.ci[:, 1] >= narrow.ci[:, 1] - 1e-12)


def test_run_bootstrap_anchored_refits_keep_labels():
    """Refitted gamma stays aligned with the fitted labeling (no switching)."""
    result = _planted_fit()
    gamma_hat = result.state.gamma
    out = run_bootstrap(result, BootstrapConfig(B=8, seed=5,
                                                refit_max_sweeps=1000,
                                                rel_tol=1e-8))
    good = out.samples[~np.isnan(out.samples).any(axis=1)]
    assert good.shape[0] == 8
    gammas = good[:, -2:]
    assert np.all(np.abs(gammas - gamma_hat[None, :]).max(axis=1) < 0.25)


def test_run_bootstrap_failure_reporting():
    result = _planted_fit()
    with pytest.warns(UserWarning):
        out = run_bootstrap(result, BootstrapConfig(B=3, seed=1,
                                                    refit_max_sweeps=1,
                                                    rel_tol=0.0))
    assert out.failures == [0, 1, 2]
    assert out.warning is not None
    assert np.all(np.isnan(out.samples))
    assert np.all(np.isnan(out.ci))
