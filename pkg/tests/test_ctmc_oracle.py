import math

import numpy as np
import pytest

import config
from tools.ctmc_oracle import (
    TruncationWindow,
    build_generator,
    gillespie_sample,
    gillespie_trajectory,
    oracle_distribution,
    resolve_avalanche,
    sample_distribution,
    state_count,
    uniformization_distribution,
    widen,
    window_for,
)
from tools.particle_models import ModelKind, make_params, push_rate
from utils.errors import DomainError, ResourceError


def _rate(gen, source, target):
    return gen.matrix[gen.index[source], gen.index[target]]


class TestWindow:
    def test_time_zero(self):
        window = window_for("asep", (0, 3), 0.0)
        assert (window.lo, window.hi) == (-1, 4)
        assert window.escape_bound == 0.0

    def test_contains_initial_configuration(self):
        window = window_for("push", (0, 1, 2), 1.0, 1e-10)
        assert window.contains((0, 1, 2))
        assert window.escape_bound <= 1e-10

    def test_asap_needs_params(self, asap_params):
        with pytest.raises(DomainError):
            window_for("asap", (0, 1), 1.0)
        wider = window_for("asap", (0, 1), 1.0, params=asap_params)
        plain = window_for("asep", (0, 1), 1.0)
        assert wider.hi > plain.hi

    def test_asap_avalanches_only_extend_the_right_edge(self, asap_params):
        window = window_for("asap", (0, 1), 1.0, params=asap_params)
        assert -window.lo < window.hi - 1
        totally = window_for("asap", (0, 1), 1.0, params=make_params("asap", p=1.0, mu=0.4))
        assert totally.lo == 0

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("ys", [(0, 1, 2), (0, 2, 5)])
    def test_three_asap_particles_fit_the_state_cap(self, asap_params, ys, t):
        window = window_for("asap", ys, t, params=asap_params)
        assert state_count("asap", window) <= config.ORACLE_MAX_STATES

    def test_widen(self):
        window = widen(TruncationWindow(lo=-4, hi=7, n_particles=2), (0, 3), factor=2.0)
        assert (window.lo, window.hi) == (-8, 11)

    def test_negative_time(self):
        with pytest.raises(DomainError):
            window_for("asep", (0, 1), -0.1)


class TestGenerator:
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1)), ("push", (0, 1)), ("asap", (0, 1)), ("azrp", (0, 0)),
    ])
    def test_rows_sum_to_zero(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        gen = build_generator(kind, window_for(kind, ys, 0.5, params=model_params[kind]), model_params[kind])
        sums = np.asarray(gen.matrix.sum(axis=1)).ravel()
        assert np.allclose(sums, 0.0, atol=1e-12)
        assert gen.size == len(gen.states) + 1

    def test_push_entries(self, push_params):
        window = TruncationWindow(lo=-3, hi=4, n_particles=2)
        gen = build_generator("push", window, push_params)
        p, q = push_params.p, push_params.q
        assert _rate(gen, (0, 1), (1, 2)) == pytest.approx(p * push_rate(2, "right", push_params))
        assert _rate(gen, (0, 1), (0, 2)) == pytest.approx(p)
        assert _rate(gen, (0, 1), (-1, 1)) == pytest.approx(q)
        assert _rate(gen, (0, 1), (-1, 0)) == pytest.approx(q * push_rate(2, "left", push_params))

    def test_symmetric_push_entry(self):
        params = make_params("push", p=0.6, mu=0.5)
        gen = build_generator("push", TruncationWindow(lo=-2, hi=3, n_particles=2), params)
        assert _rate(gen, (0, 1), (1, 2)) == pytest.approx(0.6 * 0.5)

    def test_azrp_entries(self, azrp_params):
        gen = build_generator("azrp", TruncationWindow(lo=-2, hi=2, n_particles=2), azrp_params)
        assert _rate(gen, (0, 0), (0, 1)) == pytest.approx(azrp_params.p)
        assert _rate(gen, (0, 0), (-1, 0)) == pytest.approx(azrp_params.q)
        assert _rate(gen, (0, 1), (1, 1)) == pytest.approx(azrp_params.p)

    def test_boundary_moves_go_to_escaped_state(self, asep_params):
        gen = build_generator("asep", TruncationWindow(lo=0, hi=1, n_particles=2), asep_params)
        assert gen.states == ((0, 1),)
        assert gen.matrix[0, gen.escaped_index] == pytest.approx(1.0)

    def test_push_requires_nonnegative_rates(self):
        params = make_params("push", p=0.5, mu=1.5)
        with pytest.raises(DomainError):
            build_generator("push", TruncationWindow(lo=-2, hi=2, n_particles=2), params)

    def test_params_must_match_model(self, asep_params):
        with pytest.raises(DomainError):
            build_generator("azrp", TruncationWindow(lo=-2, hi=2, n_particles=2), asep_params)

    def test_state_cap(self, asep_params, monkeypatch):
        monkeypatch.setattr(config, "ORACLE_MAX_STATES", 10)
        with pytest.raises(ResourceError):
            build_generator("asep", TruncationWindow(lo=-10, hi=10, n_particles=2), asep_params)


class TestAvalanche:
    def test_pair_pile_outcomes(self, asap_params):
        lam, mu = asap_params.lam, asap_params.mu
        outcomes = resolve_avalanche((0, 0), asap_params, tol=1e-14)
        weights = {o.positions: o.weight for o in outcomes}
        for k in range(5):
            assert weights[(k, k + 1)] == pytest.approx(lam * mu ** k, rel=1e-12)
        assert math.fsum(weights.values()) == pytest.approx(1.0, abs=1e-13)

    def test_outcomes_are_exclusion_configurations(self, asap_params):
        for outcome in resolve_avalanche((0, 1, 1, 4), asap_params):
            assert all(a < b for a, b in zip(outcome.positions, outcome.positions[1:]))

    def test_cache_reuses_shifted_piles(self, asap_params):
        cache = {}
        first = resolve_avalanche((0, 0), asap_params, cache=cache)
        shifted = resolve_avalanche((5, 5), asap_params, cache=cache)
        assert len(cache) == 1
        assert [o.positions for o in shifted] == [tuple(x + 5 for x in o.positions) for o in first]

    def test_requires_a_pile(self, asap_params):
        with pytest.raises(DomainError):
            resolve_avalanche((0, 1), asap_params)


class TestUniformization:
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1)), ("push", (0, 2)), ("asap", (0, 1)), ("azrp", (0, 0)),
    ])
    def test_mass_is_conserved(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        dist = oracle_distribution(kind, ys, 1.0, model_params[kind])
        assert dist.captured_mass + dist.escaped_mass == pytest.approx(1.0, abs=1e-9)
        assert dist.escaped_mass <= 1e-9

    @pytest.mark.parametrize("t", [0.5, 2.0])
    def test_single_particle_walk(self, walk, t):
        params = make_params("asep", p=0.7)
        dist = oracle_distribution("asep", (0,), t, params)
        for m in range(-4, 8):
            assert dist.probability((m,)) == pytest.approx(walk(m, t, 0.7, 0.3), abs=1e-9)

    def test_time_zero_is_delta(self, asep_params):
        dist = oracle_distribution("asep", (0, 1), 0.0, asep_params)
        assert dist.entries == {(0, 1): 1.0}

    def test_start_outside_window(self, asep_params):
        gen = build_generator("asep", TruncationWindow(lo=0, hi=3, n_particles=2), asep_params)
        with pytest.raises(DomainError):
            uniformization_distribution(gen, (5, 6), 0.5)

    @pytest.mark.parametrize("model,ys", [("asep", (0, 1)), ("asap", (0, 1)), ("azrp", (0, 0))])
    def test_wider_window_and_tighter_tol_agree(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        params = model_params[kind]
        tol = 1e-10
        window = window_for(kind, ys, 1.0, tol, params)
        base = uniformization_distribution(build_generator(kind, window, params, tol), ys, 1.0, tol)
        wider = widen(window, ys, factor=2.0)
        refined = uniformization_distribution(build_generator(kind, wider, params, tol / 2), ys, 1.0, tol / 2)
        for state in set(base.entries) | set(refined.entries):
            assert base.probability(state) == pytest.approx(refined.probability(state), abs=2 * tol), state
        assert refined.escaped_mass <= base.escaped_mass + tol

    def test_escaped_mass_triggers_widening(self, asep_params, monkeypatch):
        import tools.ctmc_oracle as oracle

        monkeypatch.setattr(oracle, "window_for",
                            lambda *args, **kwargs: TruncationWindow(lo=-1, hi=2, n_particles=2))
        dist = oracle_distribution("asep", (0, 1), 0.5, asep_params)
        reference = uniformization_distribution(
            build_generator("asep", TruncationWindow(lo=-12, hi=13, n_particles=2), asep_params), (0, 1), 0.5)
        assert dist.escaped_mass < 0.05
        assert dist.probability((0, 1)) == pytest.approx(reference.probability((0, 1)), abs=1e-3)

    @pytest.mark.slow
    def test_three_asap_particles_at_time_two(self, asap_params):
        dist = oracle_distribution("asap", (0, 1, 2), 2.0, asap_params)
        assert dist.escaped_mass <= 1e-9
        assert dist.captured_mass == pytest.approx(1.0, abs=1e-9)


class TestGillespie:
    def test_same_seed_same_sample(self, asap_params):
        a = gillespie_sample("asap", (0, 1, 2), 1.5, asap_params, seed=7)
        b = gillespie_sample("asap", (0, 1, 2), 1.5, asap_params, seed=7)
        assert a == b
        assert a.is_physical()

    def test_trajectory(self, push_params):
        path = gillespie_trajectory("push", (0, 1, 2), 2.0, push_params, seed=3)
        assert path[0] == (0.0, (0, 1, 2))
        times = [time for time, _ in path]
        assert times == sorted(times)
        assert times[-1] <= 2.0
        for _, state in path:
            assert all(a < b for a, b in zip(state, state[1:]))

    def test_independent_of_worker_count(self, azrp_params):
        one = sample_distribution("azrp", (0, 0), 1.0, azrp_params, samples=2500, seed=11, workers=1)
        many = sample_distribution("azrp", (0, 0), 1.0, azrp_params, samples=2500, seed=11, workers=3)
        assert one.entries == many.entries
        assert one.captured_mass == pytest.approx(1.0)

    def test_zero_samples(self, asep_params):
        assert sample_distribution("asep", (0, 1), 1.0, asep_params, samples=0).entries == {}

    def test_rejects_negative_push_rates(self):
        with pytest.raises(DomainError):
            gillespie_sample("push", (0, 1), 1.0, make_params("push", p=0.5, mu=1.5))

    @pytest.mark.slow
    @pytest.mark.parametrize("model,ys", [
        ("asep", (0, 1)), ("push", (0, 1)), ("asap", (0, 1)), ("azrp", (0, 0)),
    ])
    def test_agrees_with_uniformization(self, model_params, model, ys):
        kind = ModelKind.parse(model)
        samples = 100_000
        exact = oracle_distribution(kind, ys, 1.0, model_params[kind])
        empirical = sample_distribution(kind, ys, 1.0, model_params[kind], samples=samples, seed=5, workers=4)
        assert empirical.captured_mass == pytest.approx(1.0)
        for state in set(exact.entries) | set(empirical.entries):
            prob = exact.probability(state)
            # 1/samples: piso de la varianza para celdas con probabilidad ínfima
            sigma = math.sqrt((prob * (1 - prob) + 1.0 / samples) / samples)
            assert abs(empirical.probability(state) - prob) <= 4 * sigma, state
