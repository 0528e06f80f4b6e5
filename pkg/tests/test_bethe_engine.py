import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from tools.bethe_engine import (
    ContourSpec,
    Distribution,
    a_sigma,
    azrp_asep_maps,
    azrp_mth_particle_distribution,
    certify_radius,
    choose_radii,
    choose_radius,
    exact_distribution,
    i_sigma_at_t0,
    left_event_cutoff,
    left_events_needed,
    permutations_with_inversions,
    physical_configurations,
    q_binomial,
    time_derivative,
    transition_probability,
)
from tools.ctmc_oracle import oracle_distribution, window_for
from tools.particle_models import ModelKind, make_params, s_matrix
from utils.errors import ConfigurationError, DomainError


def _near(ys, model, reach):
    lo, hi = min(ys) - reach, max(ys) + reach
    for xs in physical_configurations(model, len(ys), lo, hi):
        if all(abs(x - y) <= reach for x, y in zip(xs, ys)):
            yield xs


class TestPermutations:
    def test_two_particles(self):
        terms = permutations_with_inversions(2)
        assert [t.sigma for t in terms] == [(1, 2), (2, 1)]
        assert terms[0].inversions == ()
        assert terms[1].inversions == ((2, 1),)

    def test_three_particles(self):
        terms = permutations_with_inversions(3)
        assert len(terms) == 6
        assert [t.sigma for t in terms] == sorted(t.sigma for t in terms)
        last = terms[-1]
        assert last.sigma == (3, 2, 1)
        assert set(last.inversions) == {(3, 2), (3, 1), (2, 1)}

    @pytest.mark.parametrize("n", [1, 4, 5])
    def test_count_is_factorial(self, n):
        terms = permutations_with_inversions(n)
        assert len(terms) == math.factorial(n)
        for term in terms:
            expected = sum(1 for i in range(n) for j in range(i + 1, n) if term.sigma[i] > term.sigma[j])
            assert len(term.inversions) == expected

    @pytest.mark.parametrize("n", [0, 11])
    def test_out_of_range(self, n):
        with pytest.raises(DomainError):
            permutations_with_inversions(n)

    def test_positions_invert_sigma(self):
        term = permutations_with_inversions(3)[3]
        assert term.sigma == (2, 3, 1)
        assert term.positions() == (3, 1, 2)

    def test_a_sigma(self, asep_params):
        identity, swap = permutations_with_inversions(2)
        xi = (0.2 + 0.1j, -0.1 + 0.3j)
        assert a_sigma("asep", identity, xi, asep_params) == 1
        assert a_sigma("asep", swap, xi, asep_params) == pytest.approx(s_matrix("asep", xi[0], xi[1], asep_params))
        with pytest.raises(DomainError):
            a_sigma("asep", swap, xi[:1], asep_params)


class TestRadius:
    def test_asep_small_radius(self):
        params = make_params("asep", p=0.5)
        assert certify_radius("asep", params, 0.25, "small")
        assert not certify_radius("asep", params, 1.0, "small")
        assert certify_radius("asep", params, choose_radius("asep", params, 2, "small"), "small")

    def test_push_small_radius(self):
        params = make_params("push", p=0.5, mu=0.5)
        assert certify_radius("push", params, 0.2, "small")

    def test_azrp_large_radius(self):
        params = make_params("azrp", p=0.5)
        assert certify_radius("azrp", params, 4.0, "large")
        radius = choose_radius("azrp", params, 2, "large")
        assert radius > 1.0
        assert certify_radius("azrp", params, radius, "large")

    def test_push_split_radius(self):
        params = make_params("push", p=0.6, mu=0.3)
        radius = choose_radius("push", params, 2, "split")
        assert params.mu / params.lam < radius < 1.0
        assert certify_radius("push", params, radius, "split")
        assert not certify_radius("push", params, 0.2, "split")
        assert choose_radii("push", params, 3) == (radius,) * 3

    def test_push_equal_rates_need_increasing_radii(self):
        params = make_params("push", p=0.6, mu=0.5)
        assert not certify_radius("push", params, 1.0, "split")
        with pytest.raises(ConfigurationError):
            choose_radius("push", params, 2, "split")
        radii = choose_radii("push", params, 2)
        assert radii[0] < 1.0 < radii[1]
        assert math.prod(radii) == pytest.approx(1.0, rel=1e-9)
        ladder = choose_radii("push", params, 4)
        assert all(a < b for a, b in zip(ladder, ladder[1:]))
        assert all(b > params.mu / (1 - params.lam * a) for a, b in zip(ladder, ladder[1:]))

    def test_asap_integrates_outside_unit_circle(self, asap_params):
        radii = choose_radii("asap", asap_params, 3, t=0.5)
        assert len(set(radii)) == 1
        assert radii[0] > 1.0
        assert certify_radius("asap", asap_params, radii[0], "large")

    def test_fixed_radius_must_match_contour_class(self, asap_params):
        with pytest.raises(ConfigurationError):
            transition_probability("asap", (0, 1), (0, 1), 0.5, asap_params, contour=ContourSpec(radius=0.2))

    def test_invalid_mode(self, asep_params):
        with pytest.raises(DomainError):
            choose_radius("asep", asep_params, 2, "medium")

    def test_contour_spec_requires_power_of_two(self):
        with pytest.raises(ValidationError):
            ContourSpec(nodes=12)
        with pytest.raises(ValidationError):
            ContourSpec(nodes=64, max_nodes=32)


class TestTransitionProbability:
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1)), ("push", (0, 1)), ("push", (0, 2)), ("asap", (0, 1)), ("asap", (0, 0)),
        ("asap", (0, 2)), ("azrp", (0, 0)),
    ])
    def test_delta_at_time_zero(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        for xs in _near(ys, kind, 4):
            result = transition_probability(kind, ys, xs, 0.0, model_params[kind])
            expected = 1.0 if xs == ys else 0.0
            assert abs(result.value - expected) <= 1e-9, xs

    @pytest.mark.slow
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1, 3)), ("push", (0, 1, 2)), ("asap", (0, 2, 3)), ("azrp", (0, 0, 1)),
    ])
    def test_delta_at_time_zero_three_particles(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        for xs in _near(ys, kind, 4):
            result = transition_probability(kind, ys, xs, 0.0, model_params[kind])
            expected = 1.0 if xs == ys else 0.0
            assert abs(result.value - expected) <= 1e-9, xs

    @pytest.mark.parametrize("t", [0.1, 1.0, 3.0])
    def test_single_particle_walk(self, walk, t):
        params = make_params("asep", p=0.6)
        for m in range(-10, 11):
            result = transition_probability("asep", (0,), (m,), t, params)
            assert result.value == pytest.approx(walk(m, t, 0.6, 0.4), abs=1e-10)

    @pytest.mark.parametrize("model,ys,targets", [
        ("asep", (0, 1), [(0, 1), (1, 2), (0, 2), (-1, 1), (0, 3)]),
        ("push", (0, 1), [(0, 1), (1, 2), (0, 2), (-1, 1), (2, 3)]),
        ("asap", (0, 1), [(0, 1), (1, 2), (0, 2), (-1, 1), (1, 3)]),
        ("azrp", (0, 0), [(0, 0), (0, 1), (-1, 0), (1, 1), (-1, 1)]),
    ])
    def test_matches_oracle(self, model_params, model, ys, targets):
        kind = ModelKind.parse(model)
        params = model_params[kind]
        reference = oracle_distribution(kind, ys, 0.5, params)
        for xs in targets:
            result = transition_probability(kind, ys, xs, 0.5, params)
            assert result.value == pytest.approx(reference.probability(xs), abs=1e-7), xs
            assert abs(result.imag_part) <= result.abs_error_estimate

    def test_totally_asymmetric_avalanche(self):
        params = make_params("asap", p=1.0, mu=0.4)
        stay = transition_probability("asap", (0, 1), (0, 1), 0.3, params)
        # desde (x, x+1) se sale con tasa 1 + p + qμ = 2 y no se vuelve
        assert stay.value == pytest.approx(math.exp(-0.6), abs=1e-9)
        reference = oracle_distribution("asap", (0, 1), 0.3, params)
        for n in range(0, 3):
            xs = (n, n + 1)
            result = transition_probability("asap", (0, 1), xs, 0.3, params)
            assert result.value == pytest.approx(reference.probability(xs), abs=1e-7)

    @pytest.mark.parametrize("xs", [(-2, -1), (-1, 0), (-1, 1)])
    def test_push_left_of_start_is_empty_at_time_zero(self, push_params, xs):
        result = transition_probability("push", (0, 1), xs, 0.0, push_params)
        assert abs(result.value) <= 1e-9

    @pytest.mark.parametrize("model", ["push", "asap"])
    @pytest.mark.parametrize("mu", [0.3, 0.5, 0.7])
    def test_interacting_models_match_oracle(self, model, mu):
        kind = ModelKind.parse(model)
        params = make_params(kind, p=0.6, mu=mu)
        ys = (0, 1)
        reference = oracle_distribution(kind, ys, 1.45, params)
        for xs in _near(ys, kind, 2):
            result = transition_probability(kind, ys, xs, 1.45, params)
            assert result.value == pytest.approx(reference.probability(xs), abs=1e-7), xs
            assert not result.precision_warning

    @pytest.mark.slow
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1, 3)), ("push", (0, 1, 2)), ("asap", (0, 1, 1)), ("azrp", (0, 0, 1)),
    ])
    def test_three_particles_match_oracle(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        params = model_params[kind]
        reference = oracle_distribution(kind, ys, 0.7, params)
        for xs in _near(ys, kind, 1):
            result = transition_probability(kind, ys, xs, 0.7, params)
            assert result.value == pytest.approx(reference.probability(xs), abs=1e-6), xs

    def test_push_value_is_a_probability(self, push_params):
        result = transition_probability("push", (0, 1, 3), (1, 2, 4), 0.5, push_params)
        assert -result.abs_error_estimate <= result.value <= 1 + result.abs_error_estimate
        assert result.nodes_used >= 32
        assert result.radius > 0

    def test_worker_count_does_not_change_result(self, asep_params):
        contour = ContourSpec(nodes=32, adaptive=False)
        one = transition_probability("asep", (0, 1, 2), (1, 2, 4), 0.5, asep_params, contour=contour, workers=1)
        many = transition_probability("asep", (0, 1, 2), (1, 2, 4), 0.5, asep_params, contour=contour, workers=3)
        assert one.value == many.value

    def test_normalization(self, asep_params):
        ys = (0, 1)
        window = window_for("asep", ys, 0.5, 1e-9)
        dist = exact_distribution("asep", ys, 0.5, asep_params, window.lo, window.hi, prune_tol=1e-9)
        assert dist.captured_mass == pytest.approx(1.0, abs=1e-6)
        assert dist.escaped_mass <= 1e-9

    @pytest.mark.parametrize("kwargs", [
        {"Y": (1, 0), "X": (1, 2), "t": 0.5},
        {"Y": (0, 1), "X": (1, 2, 3), "t": 0.5},
        {"Y": (0, 1), "X": (1, 2), "t": -1.0},
        {"Y": (0, 1), "X": (1, 2), "t": math.inf},
    ])
    def test_invalid_queries(self, asep_params, kwargs):
        with pytest.raises(DomainError):
            transition_probability("asep", params=asep_params, **kwargs)

    def test_time_derivative_matches_finite_difference(self, asep_params):
        ys, xs, t, h = (0, 1), (1, 3), 0.6, 1e-4
        derivative = time_derivative("asep", ys, xs, t, asep_params)
        ahead = transition_probability("asep", ys, xs, t + h, asep_params).value
        behind = transition_probability("asep", ys, xs, t - h, asep_params).value
        assert derivative.value == pytest.approx((ahead - behind) / (2 * h), abs=1e-6)


class TestInitialIntegrals:
    def test_identity_term(self, asep_params):
        identity = permutations_with_inversions(3)[0]
        value = i_sigma_at_t0("asep", identity, (0, 1, 3), (0, 1, 3), asep_params)
        assert value == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("model", ["asep", "push"])
    def test_swap_term_vanishes(self, model_params, model):
        kind = ModelKind.parse(model)
        swap = permutations_with_inversions(2)[1]
        value = i_sigma_at_t0(kind, swap, (0, 2), (1, 3), model_params[kind])
        assert abs(value) <= 1e-10

    def test_push_singleton_vanishes(self, push_params):
        term = next(t for t in permutations_with_inversions(3) if t.sigma == (1, 3, 2))
        value = i_sigma_at_t0("push", term, (0, 1, 3), (1, 2, 5), push_params)
        assert abs(value) <= 1e-10

    def test_length_mismatch(self, asep_params):
        term = permutations_with_inversions(3)[1]
        with pytest.raises(DomainError):
            i_sigma_at_t0("asep", term, (0, 1), (0, 1), asep_params)


class TestQBinomial:
    def test_small_values(self):
        assert q_binomial(2, 1, 0.3) == pytest.approx(1.3)
        assert q_binomial(4, 2, 1.0) == 6
        tau = 0.5
        assert q_binomial(4, 2, tau) == pytest.approx(1 + tau + 2 * tau ** 2 + tau ** 3 + tau ** 4)
        assert q_binomial(7, 0, 2.5) == 1.0

    def test_out_of_range_is_zero(self):
        assert q_binomial(3, -1, 0.5) == 0.0
        assert q_binomial(3, 4, 0.5) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(0, 12), data=st.data())
    def test_ordinary_binomial_limit(self, n, data):
        k = data.draw(st.integers(0, n))
        assert q_binomial(n, k, 1.0) == math.comb(n, k)

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 10), tau=st.floats(0.1, 0.9), data=st.data())
    def test_product_formula_and_symmetry(self, n, tau, data):
        k = data.draw(st.integers(0, n))
        product = math.prod((1 - tau ** (n - k + j)) / (1 - tau ** j) for j in range(1, k + 1))
        assert q_binomial(n, k, tau) == pytest.approx(product, rel=1e-10)
        assert q_binomial(n, k, tau) == pytest.approx(q_binomial(n, n - k, tau), rel=1e-12)


class TestAzrpMarginal:
    @pytest.mark.parametrize("x", [-3, -1, 0, 1, 4])
    def test_single_particle_is_walk(self, walk, azrp_params, x):
        result = azrp_mth_particle_distribution(1, (0,), x, 0.8, azrp_params)
        assert result.value == pytest.approx(walk(x, 0.8, 0.6, 0.4), abs=1e-9)

    @pytest.mark.parametrize("m", [1, 2])
    def test_two_particles_match_oracle(self, m):
        params = make_params("azrp", p=0.7)
        marginal = oracle_distribution("azrp", (0, 0), 0.5, params).marginal(m)
        for x in range(-1, 3):
            result = azrp_mth_particle_distribution(m, (0, 0), x, 0.5, params)
            assert result.value == pytest.approx(marginal.get(x, 0.0), abs=1e-7), x

    def test_rejects_bad_index(self, azrp_params):
        with pytest.raises(DomainError):
            azrp_mth_particle_distribution(3, (0, 0), 0, 0.5, azrp_params)

    def test_requires_both_directions(self):
        with pytest.raises(DomainError):
            azrp_mth_particle_distribution(1, (0, 0), 0, 0.5, make_params("azrp", p=1.0))


class TestAzrpAsepMaps:
    def test_examples(self):
        assert azrp_asep_maps("to_asep", (0, 0, 0)).positions == (1, 2, 3)
        assert azrp_asep_maps("to_asep", (-2, 0, 0, 5)).positions == (-1, 2, 3, 9)
        assert azrp_asep_maps("to_asep", (0, 0, 2)).positions == (1, 2, 5)
        assert azrp_asep_maps("to_azrp", (1, 2, 5)).model is ModelKind.AZRP

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=6))
    def test_round_trip(self, values):
        xs = tuple(sorted(values))
        image = azrp_asep_maps("to_asep", xs)
        assert image.model is ModelKind.ASEP
        assert azrp_asep_maps("to_azrp", image).positions == xs

    def test_invalid_input(self):
        with pytest.raises(DomainError):
            azrp_asep_maps("sideways", (0, 1))
        with pytest.raises(DomainError):
            azrp_asep_maps("to_azrp", (0, 0))


class TestDistributionHelpers:
    def test_left_events_needed(self):
        assert left_events_needed("asep", (0, 1), (2, 3)) == 0
        assert left_events_needed("asep", (0, 1), (-2, 0)) == 3
        assert left_events_needed("push", (0, 1, 2), (-2, -1, 0)) == 2
        assert left_events_needed("push", (0, 1), (-3, 1)) == 3

    def test_left_event_cutoff(self):
        cutoff, bound = left_event_cutoff(2, 0.5, 0.3, 1e-9)
        assert cutoff >= 1
        assert bound <= 1e-9
        assert left_event_cutoff(2, 0.5, 0.0, 1e-9) == (1, 0.0)

    def test_distribution_views(self):
        dist = Distribution(entries={(0, 1): 0.25, (0, 2): 0.5, (1, 2): 0.25}, captured_mass=1.0)
        assert dist.probability((0, 2)) == 0.5
        assert dist.probability((5, 6)) == 0.0
        assert dist.marginal(1) == {0: 0.75, 1: 0.25}
        frame = dist.to_frame()
        assert list(frame.columns) == ["x1", "x2", "prob"]
        assert len(frame) == 3

    def test_window_must_contain_initial_configuration(self, asep_params):
        with pytest.raises(DomainError):
            exact_distribution("asep", (0, 5), 0.5, asep_params, 0, 3)
