"""
Tests for the radial feeder model.
"""

import math

import numpy as np
import pytest

from pvsa.exceptions import CycleDetected, Disconnected, PhaseMismatch, UnknownBus, ZeroNeutralSelfImpedance
from pvsa.models.network import FeederGraph, LineSegment, LoadSpec, NodeVoltage, PhaseImpedanceMatrix, kron_reduce, validate
from pvsa.models.phase import ALL_PHASES, Phase, format_phase_set, parse_phase_set

from tests.conftest import TOY_V_BASE, line_impedance


class TestPhases:
    """Tests for phase parsing helpers."""

    def test_parse_and_format_round_trip(self):
        """Phase sets render in canonical a<b<c order."""
        assert format_phase_set(parse_phase_set("ca")) == "ac"
        assert parse_phase_set(["A", "b"]) == frozenset({Phase.A, Phase.B})

    def test_unknown_phase_rejected(self):
        with pytest.raises(ValueError):
            Phase.parse("d")


class TestPhaseImpedanceMatrix:
    """Tests for masked 3x3 impedances."""

    def test_mask_inferred_from_diagonal(self):
        """Rows/columns with zero self impedance are treated as absent."""
        z = np.zeros((3, 3), dtype=complex)
        z[0, 0] = 1 + 1j
        z[2, 2] = 2 + 1j
        z[0, 2] = z[2, 0] = 0.1j
        matrix = PhaseImpedanceMatrix.from_matrix(z)
        assert matrix.phases == frozenset({Phase.A, Phase.C})
        assert matrix[Phase.A, Phase.C] == 0.1j

    def test_nonzero_entry_on_absent_phase_rejected(self):
        z = np.zeros((3, 3), dtype=complex)
        z[1, 1] = 1.0
        with pytest.raises(PhaseMismatch):
            PhaseImpedanceMatrix(z, frozenset({Phase.A}))

    def test_addition_unions_masks(self):
        a = PhaseImpedanceMatrix.from_matrix(np.diag([1.0, 0, 0]))
        c = PhaseImpedanceMatrix.from_matrix(np.diag([0, 0, 2.0]))
        total = a + c
        assert total.phases == frozenset({Phase.A, Phase.C})
        np.testing.assert_array_equal(total.values, np.diag([1.0, 0, 2.0]))

    def test_values_are_read_only(self):
        matrix = line_impedance()
        with pytest.raises(ValueError):
            matrix.values[0, 0] = 0


class TestKronReduce:
    """Tests for neutral elimination."""

    def test_uncoupled_neutral_leaves_phase_block(self):
        """Zero coupling to the neutral leaves the 3x3 block unchanged."""
        z4 = np.zeros((4, 4), dtype=complex)
        z4[:3, :3] = line_impedance().values
        z4[3, 3] = 0.5 + 1.0j
        np.testing.assert_array_equal(kron_reduce(z4).values, line_impedance().values)

    def test_diagonal_matrix(self):
        z4 = np.diag([1 + 1j, 2 + 1j, 3 + 1j, 4 + 1j])
        np.testing.assert_array_equal(kron_reduce(z4).values, np.diag([1 + 1j, 2 + 1j, 3 + 1j]))

    def test_matches_block_elimination(self):
        """Random symmetric 4x4 agrees with the Schur complement via linalg.solve."""
        rng = np.random.default_rng(7)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        z4 = a + a.T + np.diag([4.0, 4.0, 4.0, 4.0])
        expected = z4[:3, :3] - z4[:3, 3:] @ np.linalg.solve(z4[3:, 3:], z4[3:, :3])
        reduced = kron_reduce(z4).values
        assert np.max(np.abs(reduced - expected)) <= 1e-12 * np.max(np.abs(expected))

    def test_zero_neutral_self_impedance(self):
        z4 = np.eye(4, dtype=complex)
        z4[3, 3] = 0
        with pytest.raises(ZeroNeutralSelfImpedance):
            kron_reduce(z4)


class TestNodeVoltage:
    """Tests for per-phase voltages."""

    def test_balanced_set(self):
        v = NodeVoltage.balanced(100.0)
        np.testing.assert_allclose(v.magnitude, [100.0, 100.0, 100.0])
        assert math.isclose(math.degrees(v.angle[1]), -120.0)

    def test_absent_phase_has_no_value(self):
        v = NodeVoltage(np.array([1.0, 2.0, 3.0]), frozenset({Phase.A}))
        assert v[Phase.B] is None
        assert math.isnan(v.magnitude[2])


class TestPaths:
    """Tests for path enumeration and shared-path impedance."""

    def test_source_path_is_empty(self, chain3):
        assert chain3.path_edges("s") == []

    def test_chain_path(self, chain3):
        """Unique path in a chain visits every segment in order."""
        path = chain3.path_edges("2")
        assert [(e.from_bus, e.to_bus) for e in path] == [("s", "1"), ("1", "2")]
        assert chain3.parent("2") == "1"

    def test_segments_oriented_from_source(self):
        """Segments listed against the flow are re-oriented."""
        graph = FeederGraph(
            buses={"s": ALL_PHASES, "1": ALL_PHASES},
            segments=[LineSegment("1", "s", line_impedance())],
            source="s",
            v_base=TOY_V_BASE,
        )
        assert (graph.segments[0].from_bus, graph.segments[0].to_bus) == ("s", "1")

    def test_disjoint_branches_share_nothing_below_source(self):
        graph = FeederGraph(
            buses={"s": ALL_PHASES, "1": ALL_PHASES, "2": ALL_PHASES},
            segments=[LineSegment("s", "1", line_impedance()), LineSegment("s", "2", line_impedance())],
            source="s",
            v_base=TOY_V_BASE,
        )
        assert not np.any(graph.shared_path_impedance("1", "2").values)

    def test_self_pair_is_full_path(self, chain3):
        expected = line_impedance().values + line_impedance(2.0).values
        np.testing.assert_allclose(chain3.shared_path_impedance("2", "2").values, expected)

    def test_wye_hand_enumeration(self, wye5):
        """Paths to 3 and 4 share s-1 and 1-2 only."""
        shared = wye5.shared_path_impedance("3", "4")
        expected = line_impedance().values + line_impedance(1.5).values
        np.testing.assert_allclose(shared.values, expected)
        assert wye5.shared_path_impedance("4", "3") == shared
        np.testing.assert_allclose(wye5.shared_path_impedance("1", "3").values, line_impedance().values)

    def test_tensor_matches_pairwise(self, wye5):
        tensor = wye5.shared_path_tensor()
        for o, observation in enumerate(wye5.buses):
            for a, actor in enumerate(wye5.buses):
                np.testing.assert_allclose(tensor[o, a], wye5.shared_path_impedance(observation, actor).values)

    @pytest.mark.parametrize("name", ["wye5", "ieee37"])
    def test_path_extends_parent_path(self, request, name):
        """path(b) is path(parent(b)) followed by the segment feeding b."""
        graph = request.getfixturevalue(name)
        graph = graph[0] if isinstance(graph, tuple) else graph
        for bus in graph.buses:
            if bus == graph.source:
                continue
            parent = graph.parent(bus)
            path = [(e.from_bus, e.to_bus) for e in graph.path_edges(bus)]
            head = [(e.from_bus, e.to_bus) for e in graph.path_edges(parent)]
            assert path == head + [(parent, bus)]

    @pytest.mark.parametrize("name", ["chain3", "wye5", "ieee37"])
    def test_shared_impedance_symmetric(self, request, name):
        """Z_OA equals Z_AO and the sum over the edges both paths share."""
        graph = request.getfixturevalue(name)
        graph = graph[0] if isinstance(graph, tuple) else graph
        for i, observation in enumerate(graph.buses):
            for actor in graph.buses[i:]:
                np.testing.assert_array_equal(
                    graph.shared_path_impedance(observation, actor).values,
                    graph.shared_path_impedance(actor, observation).values,
                )
                common = [e for e in graph.path_edges(observation) if e.to_bus in {s.to_bus for s in graph.path_edges(actor)}]
                expected = sum((e.impedance.values for e in common), np.zeros((3, 3), dtype=complex))
                np.testing.assert_allclose(graph.shared_path_impedance(observation, actor).values, expected, rtol=1e-12, atol=1e-12)

    def test_is_downstream(self, wye5):
        assert wye5.is_downstream("3", "1")
        assert wye5.is_downstream("4", "s")
        assert not wye5.is_downstream("3", "4")

    def test_bundled_paths_start_at_bus_one(self, ieee37):
        graph, _ = ieee37
        for bus in graph.buses:
            if bus == "1":
                continue
            assert graph.path_edges(bus)[0].from_bus == "1"

    def test_unknown_bus(self, chain3):
        with pytest.raises(UnknownBus):
            chain3.path_edges("nope")


class TestValidation:
    """Tests for radiality and phase checks."""

    def test_duplicated_edge_is_a_cycle(self):
        with pytest.raises(CycleDetected):
            FeederGraph(
                buses={"s": ALL_PHASES, "1": ALL_PHASES},
                segments=[LineSegment("s", "1", line_impedance()), LineSegment("1", "s", line_impedance())],
                source="s",
                v_base=TOY_V_BASE,
            )

    def test_mesh_is_a_cycle(self):
        with pytest.raises(CycleDetected):
            FeederGraph(
                buses={"s": ALL_PHASES, "1": ALL_PHASES, "2": ALL_PHASES},
                segments=[
                    LineSegment("s", "1", line_impedance()),
                    LineSegment("1", "2", line_impedance()),
                    LineSegment("2", "s", line_impedance()),
                ],
                source="s",
                v_base=TOY_V_BASE,
            )

    def test_disconnected_bus(self):
        with pytest.raises(Disconnected):
            FeederGraph(
                buses={"s": ALL_PHASES, "1": ALL_PHASES, "2": ALL_PHASES},
                segments=[LineSegment("s", "1", line_impedance())],
                source="s",
                v_base=TOY_V_BASE,
            )

    def test_bus_phases_must_be_fed(self):
        """A three-phase bus cannot hang off a single-phase segment."""
        single = PhaseImpedanceMatrix.from_matrix(np.diag([1.0 + 1j, 0, 0]))
        with pytest.raises(PhaseMismatch):
            FeederGraph(
                buses={"s": ALL_PHASES, "1": ALL_PHASES},
                segments=[LineSegment("s", "1", single)],
                source="s",
                v_base=TOY_V_BASE,
            )

    def test_load_on_absent_phase(self, wye5):
        """Load on phase b of the phase-a lateral."""
        with pytest.raises(PhaseMismatch):
            validate(wye5, LoadSpec({"4": np.array([0, 1e3, 0])}))

    def test_load_on_unknown_bus(self, wye5):
        with pytest.raises(UnknownBus):
            validate(wye5, LoadSpec({"9": np.array([1e3, 0, 0])}))

    def test_bundled_feeder_validates(self, ieee37):
        graph, loads = ieee37
        validate(graph, loads)
