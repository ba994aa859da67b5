import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bfcal.analytic import ConjugateNormalModel
from bfcal.bridge import (
    BridgeEstimationError,
    Proposal,
    bayes_factor,
    bridge_logml,
    fit_proposal,
    posterior_model_prob,
    warp3_transform,
)
from bfcal.rng import substream


def _conjugate_setup(dim, seed, n_draws=20000):
    model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=dim)
    rng = substream(seed, "setup", dim)
    y = model.simulate("H1", rng)
    draws = model.posterior_draws(y, n_draws, rng)
    return model, y, draws


class TestFitProposal:
    def test_point_mass_triggers_jitter(self):
        draws = np.ones((100, 3))
        proposal = fit_proposal(draws)
        assert proposal.jitter_applied

    def test_moment_matching(self):
        rng = substream(1, "fit")
        draws = rng.standard_normal((20000, 3))
        proposal = fit_proposal(draws)  # fitted on the first half
        np.testing.assert_allclose(proposal.mean, 0.0, atol=0.05)
        np.testing.assert_allclose(
            proposal.chol_cov @ proposal.chol_cov.T, np.eye(3), atol=0.05
        )

    def test_logpdf_at_mean_is_mode_value(self):
        rng = substream(2, "fit")
        draws = rng.standard_normal((5000, 2)) * np.array([1.0, 2.0])
        proposal = fit_proposal(draws)
        cov = proposal.chol_cov @ proposal.chol_cov.T
        expected = -0.5 * math.log(np.linalg.det(2 * math.pi * cov))
        assert proposal.logpdf(proposal.mean[None, :])[0] == pytest.approx(expected, rel=1e-12)

    def test_too_few_draws_rejected(self):
        with pytest.raises(BridgeEstimationError):
            fit_proposal(np.zeros((6, 4)))


class TestWarp:
    def test_warped_draws_are_symmetrized(self):
        rng = substream(3, "warp")
        draws = 2.0 + 0.5 * rng.standard_normal((20000, 2)) ** 1  # skewless base
        draws[:, 1] = np.exp(0.4 * rng.standard_normal(20000))  # skewed coordinate
        proposal = fit_proposal(draws)
        eta, _, _ = warp3_transform(draws, proposal, substream(4, "warp"))
        n = eta.shape[0]
        for k in range(2):
            x = eta[:, k]
            assert abs(x.mean()) < 4 * x.std() / math.sqrt(n)
            # third moment with its own empirical standard error (the normal
            # 6/n formula is far too tight for heavy-tailed coordinates)
            cubes = (x - x.mean()) ** 3
            assert abs(cubes.mean()) < 4 * cubes.std() / math.sqrt(n)

    def test_plain_and_warp_agree_on_analytic_model(self):
        model, y, draws = _conjugate_setup(2, seed=5)
        proposal = fit_proposal(draws)
        exact = model.logml_h1(y)
        res_p = bridge_logml(
            model.log_joint_h1(y), draws, proposal, rng=substream(5, "p"), method="plain"
        )
        res_w = bridge_logml(
            model.log_joint_h1(y), draws, proposal, rng=substream(5, "w"), method="warp3"
        )
        tol = 3 * (res_p.relative_error_estimate + res_w.relative_error_estimate) + 1e-3
        assert abs(res_p.logml - res_w.logml) < tol
        assert abs(res_p.logml - exact) < 0.01
        assert abs(res_w.logml - exact) < 0.01

    def test_warped_target_preserves_normalizer_1d(self):
        # quadrature oracle: integral of exp(warped target) equals the
        # integral of the original on a 1-D grid
        model, y, draws = _conjugate_setup(1, seed=6)
        proposal = fit_proposal(draws)
        _, _, make_warped = warp3_transform(draws, proposal, substream(6, "w"))
        warped = make_warped(model.log_joint_h1(y))
        orig = model.log_joint_h1(y)
        i_orig = integrate.quad(lambda v: math.exp(orig(np.array([[v]]))[0]), -8, 8)[0]
        i_warp = integrate.quad(lambda v: math.exp(warped(np.array([[v]]))[0]), -40, 40)[0]
        assert i_warp == pytest.approx(i_orig, abs=1e-6)


class TestBridgeLogml:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_conjugate_oracle(self, dim):
        model, y, draws = _conjugate_setup(dim, seed=7)
        proposal = fit_proposal(draws)
        res = bridge_logml(
            model.log_joint_h1(y), draws, proposal, rng=substream(7, "b", dim)
        )
        assert res.converged and not res.warning
        assert abs(res.logml - model.logml_h1(y)) < 0.01

    def test_normalized_target_gives_zero(self):
        rng = substream(8, "b")
        draws = rng.standard_normal((20000, 2))

        def log_std_normal(points):
            points = np.atleast_2d(points)
            return -0.5 * (points**2).sum(axis=1) - math.log(2 * math.pi)

        proposal = fit_proposal(draws)
        res = bridge_logml(log_std_normal, draws, proposal, rng=substream(8, "g"))
        assert abs(res.logml) < 0.005

    def test_constant_shift_identity(self):
        model, y, draws = _conjugate_setup(1, seed=9)
        proposal = fit_proposal(draws)
        base = model.log_joint_h1(y)
        shifted = lambda pts: base(pts) + math.log(7.0)
        r1 = bridge_logml(base, draws, proposal, rng=substream(9, "s"))
        r2 = bridge_logml(shifted, draws, proposal, rng=substream(9, "s"))
        assert r2.logml - r1.logml == pytest.approx(math.log(7.0), abs=1e-10)

    def test_mismatched_proposal_trips_warning_pathway(self):
        model, y, draws = _conjugate_setup(10, seed=10)
        proposal = fit_proposal(draws)
        inflated = Proposal(mean=proposal.mean, chol_cov=proposal.chol_cov * 10.0)
        res = bridge_logml(
            model.log_joint_h1(y), draws, inflated, maxiter=1000, tol=1e-10,
            rng=substream(10, "b"), method="plain",
        )
        assert res.n_iterations_first == 1000
        assert res.warning

    def test_warning_iff_first_pass_hits_maxiter(self):
        model, y, draws = _conjugate_setup(2, seed=11)
        proposal = fit_proposal(draws)
        good = bridge_logml(model.log_joint_h1(y), draws, proposal, rng=substream(11, "g"))
        assert good.n_iterations_first < 1000 and not good.warning
        forced = bridge_logml(
            model.log_joint_h1(y), draws, proposal, maxiter=2, rng=substream(11, "f")
        )
        assert forced.n_iterations_first == 2 and forced.warning

    def test_relative_error_estimate_tracks_actual_spread(self):
        # the reported asymptotic relative error should match the empirical
        # RMSE of the log evidence over independent repetitions (same model,
        # fresh draws) within a small factor
        model = ConjugateNormalModel(sigma=1.0, tau=1.0, n_obs=10, dim=2)
        y = model.simulate("H1", substream(30, "y"))
        exact = model.logml_h1(y)
        errors, reported = [], []
        for rep in range(40):
            rng = substream(30, "rep", rep)
            draws = model.posterior_draws(y, 4000, rng)
            res = bridge_logml(model.log_joint_h1(y), draws, fit_proposal(draws), rng=rng)
            errors.append(res.logml - exact)
            reported.append(res.relative_error_estimate)
        rmse = float(np.sqrt(np.mean(np.square(errors))))
        mean_reported = float(np.mean(reported))
        assert mean_reported / 3 < rmse < mean_reported * 3

    def test_exclusion_threshold(self):
        rng = substream(12, "b")
        draws = 0.05 * rng.standard_normal((2000, 1))

        def bounded(points):
            points = np.atleast_2d(points)
            out = -0.5 * (points**2).sum(axis=1) * 400.0
            out[np.abs(points[:, 0]) > 0.02] = -math.inf  # most proposal draws fall out
            return out

        proposal = fit_proposal(draws)
        with pytest.raises(BridgeEstimationError):
            bridge_logml(bounded, draws, proposal, rng=substream(12, "g"))


class TestBayesFactor:
    def test_equal_evidence(self):
        bf, log_bf = bayes_factor(-10.0, -10.0)
        assert bf == 1.0 and log_bf == 0.0

    def test_log4_gap(self):
        bf, _ = bayes_factor(-10.0, -10.0 - math.log(4.0))
        assert bf == pytest.approx(4.0, rel=1e-12)

    def test_antisymmetry(self):
        bf12, _ = bayes_factor(-3.0, -5.5)
        bf21, _ = bayes_factor(-5.5, -3.0)
        assert bf12 * bf21 == pytest.approx(1.0, rel=1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            bayes_factor(math.nan, 0.0)


class TestPosteriorModelProb:
    def test_neutral_evidence_returns_prior(self):
        assert posterior_model_prob(0.0, 0.5) == 0.5
        assert posterior_model_prob(0.0, 0.2) == 0.2

    def test_bf4_even_prior(self):
        assert posterior_model_prob(math.log(4.0), 0.5) == pytest.approx(0.8, abs=1e-12)

    def test_degenerate_prior_warns(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            assert posterior_model_prob(3.0, 1.0) == 1.0
            assert posterior_model_prob(3.0, 0.0) == 0.0
        assert len(caught) == 2

    @given(
        prior=st.floats(0.01, 0.99),
        lb1=st.floats(-20, 20),
        gap=st.floats(1e-6, 10.0),
    )
    @settings(max_examples=50)
    def test_strictly_increasing_in_log_bf(self, prior, lb1, gap):
        assert posterior_model_prob(lb1, prior) < posterior_model_prob(lb1 + gap, prior)
