"""Algebra of the tempered target sequences and the parameter step."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smc_mmle import (
    KernelConfig,
    LatentSpace,
    MirrorMap,
    MmleConfig,
    ParticleCloud,
    RngStream,
    StepSchedule,
    ToyGaussianModel,
    exact_exponents,
    exact_log_target,
    exact_log_weight,
    joint_target,
    prior_target,
    smcs_log_target,
    smcs_log_weight,
    stop_rule,
    theta_state,
    theta_update,
)

schedules = st.lists(st.floats(min_value=0.01, max_value=1.0),
                     min_size=1, max_size=12).map(
    lambda g: StepSchedule(np.asarray(g)))


@pytest.fixture
def toy():
    return ToyGaussianModel.simulate(0.5, 3, RngStream(21))


@pytest.fixture
def xs():
    return RngStream(22).generator().normal(size=(40, 3))


def random_history(n, seed=23):
    gen = RngStream(seed).generator()
    return [np.array([v]) for v in gen.normal(0.0, 1.0, n)]


class TestExponents:
    def test_frozen_values_constant_schedule(self):
        s = StepSchedule.constant(0.1, 5)
        c2, a = exact_exponents(s, 2)
        assert np.isclose(c2, 0.81)
        assert np.allclose(a, [0.09, 0.1])
        c3, a3 = exact_exponents(s, 3)
        assert np.isclose(c3, 0.729)
        assert np.allclose(a3, [0.081, 0.09, 0.1])

    def test_n_zero(self):
        s = StepSchedule.constant(0.2, 3)
        c0, a0 = exact_exponents(s, 0)
        assert c0 == 1.0 and a0.size == 0

    @given(s=schedules, data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_exponents_sum_to_one(self, s, data):
        n = data.draw(st.integers(min_value=0, max_value=s.horizon))
        c_n, a = exact_exponents(s, n)
        assert np.isclose(c_n + a.sum(), 1.0, atol=1e-12)
        assert (a >= 0).all()
        assert np.isclose(c_n, s.c(n))

    def test_gamma_one_collapses_history(self):
        # gamma_n = 1 wipes mu_0 and all earlier joints
        s = StepSchedule(np.array([0.5, 1.0, 0.3]))
        c, a = exact_exponents(s, 3)
        assert c == 0.0
        assert np.allclose(a, [0.0, 0.7, 0.3])


class TestExactTargets:
    def test_n_zero_is_prior(self, toy, xs):
        t = exact_log_target(0, [], StepSchedule.constant(0.1, 3), toy)
        assert np.allclose(t(xs), toy.log_prior0(xs))

    def test_recursion_identity(self, toy, xs):
        s = StepSchedule(np.array([0.3, 0.15, 0.5, 0.08]))
        hist = random_history(4)
        for n in range(1, 5):
            lhs = exact_log_target(n, hist, s, toy)(xs)
            prev = exact_log_target(n - 1, hist, s, toy)(xs)
            rhs = (1.0 - s.gamma(n)) * prev + s.gamma(n) * joint_target(toy, hist[n - 1])(xs)
            assert np.allclose(lhs, rhs, atol=1e-10), n

    def test_weight_is_target_increment(self, toy, xs):
        s = StepSchedule(np.array([0.2, 0.4, 0.1]))
        hist = random_history(3)
        for n in range(1, 4):
            w = exact_log_weight(n, hist, s, toy)(xs)
            inc = (exact_log_target(n, hist, s, toy)(xs)
                   - exact_log_target(n - 1, hist, s, toy)(xs))
            assert np.allclose(w, inc, atol=1e-10), n

    def test_short_history_raises(self, toy):
        with pytest.raises(ValueError):
            exact_log_target(3, random_history(2), StepSchedule.constant(0.1, 5), toy)
        with pytest.raises(ValueError):
            exact_log_weight(0, random_history(1), StepSchedule.constant(0.1, 5), toy)


class TestFastTargets:
    def test_two_term_form(self, toy, xs):
        s = StepSchedule.constant(0.25, 4)
        theta = np.array([0.8])
        for n in (1, 2, 4):
            got = smcs_log_target(n, theta, s, toy)(xs)
            c = s.c(n)
            expect = c * toy.log_prior0(xs) + (1 - c) * joint_target(toy, theta)(xs)
            assert np.allclose(got, expect, atol=1e-10)

    def test_n_zero_rejected(self, toy):
        with pytest.raises(ValueError):
            smcs_log_target(0, np.array([0.0]), StepSchedule.constant(0.1, 2), toy)
        with pytest.raises(ValueError):
            smcs_log_weight(1, np.array([0.0]), np.array([0.0]),
                            StepSchedule.constant(0.1, 2), toy)

    def test_variants_coincide_at_first_step(self, toy, xs):
        s = StepSchedule.constant(0.3, 2)
        hist = random_history(1)
        assert np.allclose(exact_log_target(1, hist, s, toy)(xs),
                           smcs_log_target(1, hist[0], s, toy)(xs), atol=1e-10)
        w_exact = exact_log_weight(1, hist, s, toy)(xs)
        inc = (smcs_log_target(1, hist[0], s, toy)(xs) - toy.log_prior0(xs))
        assert np.allclose(w_exact, inc, atol=1e-10)

    def test_weight_is_target_increment(self, toy, xs):
        s = StepSchedule(np.array([0.2, 0.35, 0.15]))
        hist = random_history(3)
        for n in (2, 3):
            w = smcs_log_weight(n, hist[n - 2], hist[n - 1], s, toy)(xs)
            inc = (smcs_log_target(n, hist[n - 1], s, toy)(xs)
                   - smcs_log_target(n - 1, hist[n - 2], s, toy)(xs))
            assert np.allclose(w, inc, atol=1e-10)

    def test_weight_exponents_sum_to_zero(self, toy, xs):
        # adding a constant to every log density leaves the weight unchanged
        s = StepSchedule.constant(0.4, 3)
        hist = random_history(3)
        w = smcs_log_weight(2, hist[0], hist[1], s, toy)
        shifted = ToyGaussianModel(toy.y)  # same model; shift via direct algebra
        c1, c2 = s.c(1), s.c(2)
        coefs = np.array([1 - c2, -(1 - c1), -(c1 - c2)])
        assert np.isclose(coefs.sum(), 0.0, atol=1e-15)
        assert np.allclose(w(xs), w(xs))  # deterministic
        del shifted

    def test_gamma_one_targets_full_joint(self, toy, xs):
        s = StepSchedule(np.array([1.0, 1.0]))
        theta = np.array([0.2])
        got = smcs_log_target(1, theta, s, toy)(xs)
        assert np.allclose(got, joint_target(toy, theta)(xs), atol=1e-12)


class TestCrossVariantIdentity:
    def test_difference_is_history_sum(self, toy, xs):
        # exact_n - fast_n = sum_{j<=n-2} a_j (log p_j - log p_{n-1}),
        # a pointwise identity; the residual must vanish to float precision
        s = StepSchedule.constant(0.1, 8)
        hist = random_history(8)
        n = 6
        exact = exact_log_target(n, hist, s, toy)(xs)
        fast = smcs_log_target(n, hist[n - 1], s, toy)(xs)
        _, a = exact_exponents(s, n)
        newest = joint_target(toy, hist[n - 1])(xs)
        corr = np.zeros(xs.shape[0])
        for j in range(n - 1):
            corr += a[j] * (joint_target(toy, hist[j])(xs) - newest)
        residual = exact - fast - corr
        assert residual.max() - residual.min() < 1e-9

    def test_constant_history_makes_variants_equal(self, toy, xs):
        s = StepSchedule.constant(0.2, 6)
        theta = np.array([0.7])
        hist = [theta] * 6
        for n in (1, 3, 6):
            assert np.allclose(exact_log_target(n, hist, s, toy)(xs),
                               smcs_log_target(n, theta, s, toy)(xs), atol=1e-9)


class TestThetaUpdate:
    def test_hand_example_euclidean(self, toy):
        space = LatentSpace.continuous_real(3)
        pos = np.array([[1.0, 0.0, -1.0], [2.0, 2.0, 2.0]])
        lw = np.log([0.75, 0.25])
        cloud = ParticleCloud(space, pos, lw, normalized=True)
        m = MirrorMap.squared_norm()
        state = theta_state(m, np.array([0.5]))
        out = theta_update(m, state, cloud, toy, gamma=0.1)
        # grad per particle: 3*0.5 - sum(x); weighted: .75*(1.5-0)+.25*(1.5-6)
        expect = 0.5 - 0.1 * (0.75 * 1.5 + 0.25 * (-4.5))
        assert np.isclose(out.theta[0], expect)
        assert np.isclose(out.dual[0], out.theta[0])

    def test_grad_scale(self, toy):
        space = LatentSpace.continuous_real(3)
        cloud = ParticleCloud.equal_weights(space, np.zeros((4, 3)))
        m = MirrorMap.squared_norm()
        s0 = theta_state(m, np.array([1.0]))
        full = theta_update(m, s0, cloud, toy, 0.1, grad_scale=1.0)
        third = theta_update(m, s0, cloud, toy, 0.1, grad_scale=1.0 / 3.0)
        assert np.isclose(1.0 - third.theta[0], (1.0 - full.theta[0]) / 3.0)

    def test_barrier_stays_in_domain(self):
        # a huge gradient cannot push the iterate outside (0, 1)
        class Steep:
            d_theta = 1

            def grad_theta_U(self, theta, xs):
                return np.full((xs.shape[0], 1), -1e6)

        space = LatentSpace.continuous_real(1)
        cloud = ParticleCloud.equal_weights(space, np.zeros((3, 1)))
        m = MirrorMap.component_log_barrier()
        out = theta_update(m, theta_state(m, np.array([0.5])), cloud, Steep(), 1.0)
        assert 0.0 < out.theta[0] < 1.0


class TestStopRule:
    def test_strict_boundary(self):
        a, b = np.zeros(5), np.zeros(5)
        b[2] = np.sqrt(1e-7)
        assert not stop_rule(a, b, 1e-7)  # change exactly at threshold
        assert stop_rule(a, b * 0.999, 1e-7)
        assert stop_rule(a, a, 1e-7)

    def test_max_over_components(self):
        a = np.zeros(3)
        b = np.array([1e-5, 0.0, 2e-2])
        assert not stop_rule(a, b, 1e-4)  # max square is 4e-4
        assert stop_rule(a, b, 4.1e-4)


class TestMmleConfig:
    def base(self, **kw):
        args = dict(schedule=StepSchedule.constant(0.1, 5),
                    mirror_map=MirrorMap.squared_norm(),
                    kernel=KernelConfig.random_walk(),
                    num_particles=10)
        args.update(kw)
        return MmleConfig(**args)

    def test_defaults(self):
        cfg = self.base()
        assert cfg.variant == "fast" and cfg.iterations == 5

    def test_horizon_truncates(self):
        assert self.base(horizon=3).iterations == 3
        assert self.base(horizon=0).iterations == 0

    @pytest.mark.parametrize("kw", [
        dict(variant="both"),
        dict(num_particles=1),
        dict(horizon=6),
        dict(horizon=-1),
        dict(theta_grad_scale=0.0),
        dict(stop_threshold=0.0),
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            self.base(**kw)


class TestTargetWrappers:
    def test_site_fn_presence_follows_model(self, toy):
        from smc_mmle import GmmModel
        gmm = GmmModel(np.array([0.5, -0.5]), 0.5)
        assert joint_target(gmm, np.array([1.0])).site_fn is not None
        assert prior_target(gmm).site_fn is not None
        assert joint_target(toy, np.array([1.0])).site_fn is None
        assert prior_target(toy).site_fn is None
