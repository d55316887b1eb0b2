"""
Tests for the linear sensitivity map, the covariance and the Nakagami fit.
"""

import math

import numpy as np
import pytest

from pvsa.exceptions import DegenerateDistribution, DimensionMismatch, InvalidShape, NotPositiveSemidefinite
from pvsa.models.distribution import (
    P,
    Q,
    GammaParams,
    GaussianMoments,
    NakagamiParams,
    PowerChangeCovariance,
    stack_power_changes,
    stacked_index,
    unstack_power_changes,
)
from pvsa.models.phase import Phase
from pvsa.models.scenario import CorrelationSpec, StochasticActor, StochasticScenario
from pvsa.models.vsa import ActorPerturbation
from pvsa.services.covariance_service import build_covariance, ensure_psd
from pvsa.services.pvsa_service import (
    PvsaService,
    build_sensitivity_vectors,
    discretize,
    gamma_params,
    moments,
    violation_probability,
)
from pvsa.services.sampling_service import sample_power_changes
from pvsa.services.vsa_service import VsaService


@pytest.fixture
def wye5_base(wye5, wye5_loads, loadflow):
    return loadflow.solve(wye5, wye5_loads)


@pytest.fixture
def odd_nodes_fit(ieee37, ieee37_base, odd_nodes):
    graph, _ = ieee37
    covariance = build_covariance(graph, odd_nodes)
    return covariance, PvsaService(graph, ieee37_base).fit(covariance, "9", Phase.A)


def random_injections(graph, rng, scale=5e3):
    array = rng.normal(scale=scale, size=(graph.n_buses, 3)) + 1j * rng.normal(scale=scale, size=(graph.n_buses, 3))
    return np.where(graph.phase_mask, array, 0)


class TestStackedLayout:
    """Tests for the 6n stacked vector layout."""

    def test_index_layout(self):
        """Phase blocks of 2n, P entries before Q entries."""
        assert stacked_index(5, Phase.A, P, 0) == 0
        assert stacked_index(5, Phase.A, Q, 0) == 5
        assert stacked_index(5, Phase.B, P, 2) == 12
        assert stacked_index(5, Phase.C, Q, 4) == 29

    def test_stack_places_entries(self):
        array = np.zeros((4, 3), dtype=complex)
        array[2, Phase.B.index] = 3 - 7j
        vector = stack_power_changes(array)
        assert vector[stacked_index(4, Phase.B, P, 2)] == 3
        assert vector[stacked_index(4, Phase.B, Q, 2)] == -7
        assert np.count_nonzero(vector) == 2

    def test_unstack_inverts_batches(self):
        array = np.random.default_rng(1).normal(size=(2, 4, 3)) * (1 + 0.5j)
        np.testing.assert_array_equal(unstack_power_changes(stack_power_changes(array), 4), array)

    def test_unstack_wrong_length(self):
        with pytest.raises(DimensionMismatch):
            unstack_power_changes(np.zeros(10), 4)


class TestSensitivityVectors:
    """Tests for C_R and C_I."""

    @pytest.mark.parametrize("observation,phase", [("3", Phase.A), ("3", Phase.C), ("4", Phase.A), ("1", Phase.B)])
    def test_matches_closed_form_change(self, wye5, wye5_base, observation, phase):
        """C_R . dS + j C_I . dS equals the superposed closed-form dV."""
        injections = random_injections(wye5, np.random.default_rng(21))
        vectors = build_sensitivity_vectors(wye5, wye5_base, observation, phase)
        linear = vectors.apply(stack_power_changes(injections))

        perturbations = [ActorPerturbation(bus, injections[i]) for i, bus in enumerate(wye5.buses)]
        expected = VsaService(wye5, wye5_base).delta_v_multi(perturbations, observation)[phase]
        assert abs(linear - expected) <= 1e-12 * abs(expected)

    def test_batch_apply(self, wye5, wye5_base):
        rng = np.random.default_rng(4)
        vectors = build_sensitivity_vectors(wye5, wye5_base, "3", Phase.B)
        batch = stack_power_changes(np.stack([random_injections(wye5, rng) for _ in range(3)]))
        np.testing.assert_allclose(vectors.apply(batch), [vectors.apply(row) for row in batch], rtol=1e-14)

    def test_zero_where_no_shared_path(self, wye5, wye5_base):
        """The source and absent phases carry no sensitivity."""
        vectors = build_sensitivity_vectors(wye5, wye5_base, "3", Phase.A)
        n = wye5.n_buses
        s = wye5.bus_index("s")
        four = wye5.bus_index("4")
        for phase in Phase:
            for kind in (P, Q):
                assert vectors.c_r[stacked_index(n, phase, kind, s)] == 0
                assert vectors.c_i[stacked_index(n, phase, kind, s)] == 0
        assert vectors.c_r[stacked_index(n, Phase.B, P, four)] == 0
        assert vectors.c_r[stacked_index(n, Phase.A, P, four)] != 0

    def test_apply_wrong_length(self, wye5, wye5_base):
        vectors = build_sensitivity_vectors(wye5, wye5_base, "3", Phase.A)
        with pytest.raises(DimensionMismatch):
            vectors.apply(np.zeros(7))


class TestMoments:
    """Tests for the Gaussian second moments of dV."""

    def test_zero_covariance(self, wye5, wye5_base):
        vectors = build_sensitivity_vectors(wye5, wye5_base, "3", Phase.A)
        result = moments(vectors, PowerChangeCovariance.zeros(wye5.buses))
        assert (result.var_r, result.var_i, result.cov) == (0.0, 0.0, 0.0)
        with pytest.raises(DegenerateDistribution):
            gamma_params(result)

    def test_identity_covariance(self, wye5, wye5_base):
        """Sigma = I gives squared norms and the inner product."""
        vectors = build_sensitivity_vectors(wye5, wye5_base, "2", Phase.C)
        identity = PowerChangeCovariance(wye5.buses, np.eye(6 * wye5.n_buses))
        result = moments(vectors, identity)
        assert result.var_r == pytest.approx(vectors.c_r @ vectors.c_r, rel=1e-12)
        assert result.var_i == pytest.approx(vectors.c_i @ vectors.c_i, rel=1e-12)
        assert result.cov == pytest.approx(vectors.c_r @ vectors.c_i, rel=1e-12)
        assert result.cov**2 <= result.var_r * result.var_i

    def test_cauchy_schwarz_on_ieee37(self, ieee37, ieee37_base, odd_nodes):
        """cov^2 <= var_r var_i at every present phase under the odd-node covariance."""
        graph, _ = ieee37
        covariance = build_covariance(graph, odd_nodes)
        sigma = covariance.matrix
        for bus in graph.buses:
            if bus == graph.source:
                continue
            for phase in graph.phases_of(bus):
                vectors = build_sensitivity_vectors(graph, ieee37_base, bus, phase)
                var_r = vectors.c_r @ sigma @ vectors.c_r
                var_i = vectors.c_i @ sigma @ vectors.c_i
                cov = vectors.c_r @ sigma @ vectors.c_i
                assert cov**2 <= var_r * var_i * (1 + 1e-9)
                result = moments(vectors, covariance)
                assert result.cov**2 <= result.var_r * result.var_i * (1 + 1e-12)
                assert result.var_r == pytest.approx(var_r, rel=1e-10)

    def test_dimension_mismatch(self, wye5, wye5_base, chain3):
        vectors = build_sensitivity_vectors(wye5, wye5_base, "3", Phase.A)
        with pytest.raises(DimensionMismatch):
            moments(vectors, PowerChangeCovariance.zeros(chain3.buses))


class TestGammaFit:
    """Tests for the two-moment Gamma fit of |dV|^2."""

    def test_single_component_is_half_shape(self):
        """Only a real part: |dV|^2 is chi-square with one degree of freedom."""
        gamma = gamma_params(GaussianMoments(var_r=2.0, var_i=0.0, cov=0.0))
        assert gamma.k == pytest.approx(0.5)
        assert gamma.theta == pytest.approx(4.0)

    def test_circular_is_exponential(self):
        """Equal uncorrelated parts: |dV|^2 is exponential, |dV| Rayleigh."""
        gamma = gamma_params(GaussianMoments(var_r=3.0, var_i=3.0, cov=0.0))
        assert gamma.k == pytest.approx(1.0)
        assert gamma.theta == pytest.approx(6.0)

    def test_moment_identities(self):
        """k theta = E|dV|^2 and k theta^2 = Var|dV|^2 of the bivariate Gaussian."""
        m = GaussianMoments(var_r=2.0, var_i=0.5, cov=0.6)
        gamma = gamma_params(m)
        assert gamma.mean == pytest.approx(2.5)
        assert gamma.variance == pytest.approx(2 * (2.0**2 + 0.5**2 + 2 * 0.6**2))
        assert 0.5 <= gamma.k <= 1.0

    def test_identities_against_samples(self):
        rng = np.random.default_rng(17)
        cov = np.array([[2.0, 0.6], [0.6, 0.5]])
        samples = rng.multivariate_normal([0, 0], cov, size=400_000)
        squared = (samples**2).sum(axis=1)
        gamma = gamma_params(GaussianMoments(2.0, 0.5, 0.6))
        assert squared.mean() == pytest.approx(gamma.mean, rel=0.01)
        assert squared.var() == pytest.approx(gamma.variance, rel=0.02)

    def test_invalid_parameters(self):
        with pytest.raises(InvalidShape):
            GammaParams(k=0.0, theta=1.0)


class TestViolationProbability:
    """Tests for P(|dV| > threshold)."""

    def test_zero_threshold(self):
        assert violation_probability(NakagamiParams(0.7, 1.0), 0.0, 2400.0) == 1.0

    def test_rayleigh_tail(self):
        """m = 1: exp(-t^2 / Omega)."""
        v_base = 2400.0
        omega = (0.02 * v_base) ** 2
        expected = math.exp(-((0.03 * v_base) ** 2) / omega)
        assert violation_probability(NakagamiParams(1.0, omega), 0.03, v_base) == pytest.approx(expected, rel=1e-10)

    def test_monotone_in_threshold(self):
        params = NakagamiParams(0.6, 4.0)
        values = [violation_probability(params, t, 1.0) for t in (0.5, 1.0, 2.0, 4.0)]
        assert values == sorted(values, reverse=True)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            violation_probability(NakagamiParams(1.0, 1.0), -0.01, 1.0)

    def test_against_linear_samples(self, ieee37, odd_nodes_fit):
        """The Nakagami tail tracks the empirical tail of the linear map."""
        graph, _ = ieee37
        covariance, fit = odd_nodes_fit
        threshold = fit.nakagami_pu.mean
        magnitudes = np.abs(fit.vectors.apply(sample_power_changes(covariance, 50_000, seed=3))) / graph.v_base
        assert fit.violation_probability(threshold) == pytest.approx(np.mean(magnitudes > threshold), abs=0.03)


class TestDistributionFit:
    """Tests for the end-to-end fit at one observation point."""

    def test_fitted_variance_matches_samples(self, odd_nodes_fit):
        covariance, fit = odd_nodes_fit
        dv = fit.vectors.apply(sample_power_changes(covariance, 200_000, seed=11))
        assert dv.real.var() == pytest.approx(fit.moments.var_r, rel=0.02)
        assert dv.imag.var() == pytest.approx(fit.moments.var_i, rel=0.02)

    def test_shape_range(self, odd_nodes_fit):
        _, fit = odd_nodes_fit
        assert 0.5 - 1e-12 <= fit.nakagami.m <= 1.0 + 1e-12
        assert fit.nakagami.omega == pytest.approx(fit.moments.total, rel=1e-12)

    def test_source_is_degenerate(self, ieee37, ieee37_base, odd_nodes):
        graph, _ = ieee37
        covariance = build_covariance(graph, odd_nodes)
        with pytest.raises(DegenerateDistribution):
            PvsaService(graph, ieee37_base).fit(covariance, graph.source, Phase.A)

    def test_discretized_mass(self, odd_nodes_fit):
        """Bins out to six rms values hold almost all the mass."""
        _, fit = odd_nodes_fit
        params = fit.nakagami_pu
        edges = np.linspace(0, 6 * math.sqrt(params.omega), 201)
        pdf = discretize(fit.nakagami, edges, fit.v_base)
        assert np.all(pdf.probabilities >= 0)
        assert pdf.probabilities.sum() == pytest.approx(1.0, abs=1e-6)


class TestCovariance:
    """Tests for the stacked covariance assembly."""

    @pytest.fixture
    def correlated(self):
        return StochasticScenario(
            "correlated",
            actors=(StochasticActor("2"), StochasticActor("3")),
            var_p=4.0,
            var_q=1.0,
            correlation=CorrelationSpec(pp=0.5, qq=0.3, pq=0.2, cross_phase=0.1),
        )

    def test_entries(self, wye5, correlated):
        covariance = build_covariance(wye5, correlated)
        sigma = covariance.matrix
        n = wye5.n_buses
        two, three = wye5.bus_index("2"), wye5.bus_index("3")

        def at(phase_1, kind_1, bus_1, phase_2, kind_2, bus_2):
            return sigma[stacked_index(n, phase_1, kind_1, bus_1), stacked_index(n, phase_2, kind_2, bus_2)]

        assert at(Phase.A, P, two, Phase.A, P, two) == pytest.approx(4.0)
        assert at(Phase.A, Q, two, Phase.A, Q, two) == pytest.approx(1.0)
        assert at(Phase.A, P, two, Phase.A, P, three) == pytest.approx(0.5 * 4.0)
        assert at(Phase.B, Q, two, Phase.B, Q, three) == pytest.approx(0.3 * 1.0)
        assert at(Phase.C, P, two, Phase.C, Q, two) == pytest.approx(0.2 * 2.0)
        assert at(Phase.A, P, two, Phase.C, Q, three) == pytest.approx(0.2 * 2.0 * 0.1)
        assert at(Phase.A, P, two, Phase.B, P, two) == pytest.approx(0.1 * 4.0)
        np.testing.assert_array_equal(sigma, sigma.T)
        assert covariance.actors == ("2", "3")

    def test_non_actors_are_zero(self, wye5, correlated):
        covariance = build_covariance(wye5, correlated)
        n = wye5.n_buses
        for bus in ("s", "1", "4"):
            rows = [stacked_index(n, phase, kind, wye5.bus_index(bus)) for phase in Phase for kind in (P, Q)]
            assert not np.any(covariance.matrix[rows])

    def test_uncorrelated_default(self, wye5):
        scenario = StochasticScenario("plain", actors=(StochasticActor("2"), StochasticActor("3")), var_p=4.0, var_q=1.0)
        sigma = build_covariance(wye5, scenario).matrix
        np.testing.assert_array_equal(sigma, np.diag(np.diag(sigma)))

    def test_actor_phase_restriction_and_overrides(self, wye5):
        scenario = StochasticScenario(
            "override",
            actors=(StochasticActor("3", phases=frozenset({Phase.B}), var_p=9.0),),
            var_p=4.0,
            var_q=1.0,
        )
        sigma = build_covariance(wye5, scenario).matrix
        n = wye5.n_buses
        three = wye5.bus_index("3")
        assert sigma[stacked_index(n, Phase.B, P, three), stacked_index(n, Phase.B, P, three)] == 9.0
        assert sigma[stacked_index(n, Phase.A, P, three), stacked_index(n, Phase.A, P, three)] == 0.0

    def test_background_variance(self, wye5):
        """Non-actor present phases get independent background variance."""
        scenario = StochasticScenario(
            "background",
            actors=(StochasticActor("3"),),
            var_p=4.0,
            var_q=1.0,
            background_var_p=0.25,
            background_var_q=0.5,
        )
        covariance = build_covariance(wye5, scenario)
        n = wye5.n_buses
        four = wye5.bus_index("4")
        one = wye5.bus_index("1")
        diagonal = np.diag(covariance.matrix)
        assert diagonal[stacked_index(n, Phase.A, P, four)] == 0.25
        assert diagonal[stacked_index(n, Phase.B, Q, one)] == 0.5
        assert diagonal[stacked_index(n, Phase.B, P, four)] == 0.0
        background = stacked_index(n, Phase.A, P, one)
        assert np.count_nonzero(covariance.matrix[background]) == 1

    def test_not_positive_semidefinite(self, wye5):
        """Three mutually anti-correlated variables cannot exist."""
        single = frozenset({Phase.A})
        scenario = StochasticScenario(
            "impossible",
            actors=tuple(StochasticActor(bus, phases=single) for bus in ("1", "2", "3")),
            var_p=4.0,
            var_q=0.0,
            correlation=CorrelationSpec(pp=-1.0),
        )
        with pytest.raises(NotPositiveSemidefinite):
            build_covariance(wye5, scenario)

    def test_tiny_negative_eigenvalue_is_clipped(self, wye5):
        n = wye5.n_buses
        matrix = np.zeros((6 * n, 6 * n))
        i, j = stacked_index(n, Phase.A, P, 1), stacked_index(n, Phase.A, P, 2)
        matrix[i, i] = matrix[j, j] = 1.0
        matrix[i, j] = matrix[j, i] = 1.0 + 1e-12
        repaired = ensure_psd(PowerChangeCovariance(wye5.buses, matrix), tolerance=1e-9)
        assert np.linalg.eigvalsh(repaired.matrix).min() >= -1e-14
        np.testing.assert_allclose(repaired.matrix, matrix, atol=1e-11)

    def test_asymmetric_rejected(self, wye5):
        n = wye5.n_buses
        matrix = np.eye(6 * n)
        matrix[0, 1] = 0.5
        with pytest.raises(NotPositiveSemidefinite):
            ensure_psd(PowerChangeCovariance(wye5.buses, matrix))

    def test_wrong_shape(self, wye5):
        with pytest.raises(DimensionMismatch):
            PowerChangeCovariance(wye5.buses, np.eye(4))
