"""Concrete structure spaces, distances, oracles, and the separation family."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndbal import (
    AngleDistance,
    ApproxBestItemDistance,
    Atom,
    BestItemDistance,
    ClusterIdDistance,
    ConfigError,
    DisagreementDistance,
    FairnessDistance,
    FiniteLabeledSpace,
    IndexedFamily,
    IntervalClusteringSpace,
    IntervalPairDistance,
    IntervalProtectedDistance,
    LinearClassifierSpace,
    LogitChoiceSpace,
    MatrixDistance,
    RankingDistance,
    RankingSpace,
    ResponseSet,
    build_separation_family,
    d_best_item,
    d_classifier,
    d_cluster_id,
    d_fair,
    d_interval_I,
    d_interval_c,
    d_rank,
    flip_oracle,
    logistic_oracle,
    logit_choice_oracle,
    massart_oracle,
    recommended_beta,
)
from instance_helpers import BINARY


# ---------------------------------------------------------------------------
# Classifier angle distance
# ---------------------------------------------------------------------------


class TestClassifierDistance:
    def test_identical_directions(self):
        assert d_classifier([1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal(self):
        assert d_classifier([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5, abs=1e-12)

    def test_antipodal(self):
        assert d_classifier([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(1.0, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            d_classifier([0.0, 0.0], [1.0, 0.0])

    def test_equals_disagreement_rate_over_sphere(self):
        rng = np.random.default_rng(0)
        w1, w2 = rng.standard_normal(3), rng.standard_normal(3)
        xs = rng.standard_normal((200_000, 3))
        emp = np.mean(np.sign(xs @ w1) != np.sign(xs @ w2))
        assert d_classifier(w1, w2) == pytest.approx(emp, abs=0.01)

    @given(
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    )
    @settings(max_examples=200, deadline=None)
    def test_symmetric_bounded_property(self, a, b):
        w1, w2 = np.array(a), np.array(b)
        if np.linalg.norm(w1) < 1e-9 or np.linalg.norm(w2) < 1e-9:
            return
        d12 = d_classifier(w1, w2)
        assert d12 == d_classifier(w2, w1)
        assert 0.0 <= d12 <= 1.0
        # arccos loses half the float precision near 1, hence the tolerance
        assert d_classifier(w1, w1) == pytest.approx(0.0, abs=1e-7)

    def test_distance_object_matrix(self):
        space = LinearClassifierSpace(4)
        rng = np.random.default_rng(1)
        gs = space.sample_structures(40, rng)
        d = AngleDistance()
        m = d.matrix(gs)
        assert np.allclose(m, m.T)
        assert np.allclose(np.diag(m), 0.0, atol=1e-9)
        assert np.all((m >= -1e-12) & (m <= 1.0 + 1e-12))
        # spot-check against the scalar form
        assert m[3, 7] == pytest.approx(d(gs[3], gs[7]), abs=1e-12)
        assert np.allclose(d.to_target(gs, gs[5]), m[:, 5], atol=1e-12)


# ---------------------------------------------------------------------------
# Ranking distance
# ---------------------------------------------------------------------------


class TestRankingDistance:
    def test_closed_form_equals_angle(self):
        w1, w2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert d_rank(w1, w2) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("dim", [2, 3, 5])
    def test_monte_carlo_agrees_with_closed_form(self, dim):
        rng = np.random.default_rng(10 + dim)
        space = RankingSpace(dim)
        w1, w2 = rng.standard_normal(dim), rng.standard_normal(dim)
        exact = d_rank(w1, w2)
        mc = d_rank(
            w1, w2, mode="mc", space=space, n_samples=100_000,
            rng=np.random.default_rng(99),
        )
        sigma = math.sqrt(max(exact * (1 - exact), 1e-4) / 100_000)
        assert abs(mc - exact) <= 4.0 * sigma + 1e-6

    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigError):
            d_rank(np.ones(2), np.ones(2), mode="guess")

    def test_mc_needs_space_and_rng(self):
        with pytest.raises(ConfigError):
            d_rank(np.ones(2), np.ones(2), mode="mc")

    def test_evaluate_orders_pairs(self):
        space = RankingSpace(2)
        g = space.structure(np.array([1.0, 0.0]))
        prefer = Atom(0, (np.array([0.5, 0.0]), np.array([0.2, 0.0])))
        avoid = Atom(1, (np.array([0.2, 0.0]), np.array([0.5, 0.0])))
        assert space.evaluate(g, prefer) == 1
        assert space.evaluate(g, avoid) == 0

    def test_symmetry_and_range_bulk(self):
        rng = np.random.default_rng(2)
        d = RankingDistance()
        space = RankingSpace(3)
        gs = space.sample_structures(100, rng)
        m = d.matrix(gs)
        assert np.allclose(m, m.T)
        assert np.allclose(np.diag(m), 0.0, atol=1e-9)
        assert np.all((m >= -1e-12) & (m <= 1.0 + 1e-12))

    def test_gaussian_measure_supported(self):
        space = RankingSpace(3, measure="gaussian")
        xs, ys = space.sample_pair_arrays(100, np.random.default_rng(3))
        assert xs.shape == (100, 3)
        assert ys.shape == (100, 3)


# ---------------------------------------------------------------------------
# Best-item distances
# ---------------------------------------------------------------------------


class TestBestItemDistances:
    items = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])

    def test_indicator(self):
        w1, w2 = np.array([1.0, 0.1]), np.array([1.0, -0.1])
        assert d_best_item(w1, w2, self.items) == 0.0
        assert d_best_item(w1, -w1, self.items) == 1.0

    def test_approx_gap_antipodal(self):
        from ndbal import d_approx_best_item

        w1, w2 = np.array([1.0, 0.0]), np.array([-1.0, 0.0])
        assert d_approx_best_item(w1, w2, self.items) == pytest.approx(2.0)
        assert d_approx_best_item(w1, w2, self.items, normalized=True) == pytest.approx(1.0)

    def test_argmax_tie_breaks_low(self):
        from ndbal import best_index

        items = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert best_index(items, np.array([1.0, 0.0])) == 0

    def test_matrix_forms_match_scalar(self):
        rng = np.random.default_rng(4)
        space = LogitChoiceSpace(self.items)
        gs = space.sample_structures(30, rng)
        for d in (BestItemDistance(self.items), ApproxBestItemDistance(self.items)):
            m = d.matrix(gs)
            assert np.allclose(m, m.T)
            assert np.allclose(np.diag(m), 0.0)
            for i, j in [(0, 1), (5, 9), (12, 29)]:
                assert m[i, j] == pytest.approx(d(gs[i], gs[j]), abs=1e-12)

    def test_normalized_unit_items_stay_bounded(self):
        rng = np.random.default_rng(5)
        space = LogitChoiceSpace.random(20, 4, rng)
        gs = space.sample_structures(50, rng)
        m = ApproxBestItemDistance(space.items, normalized=True).matrix(gs)
        assert np.all(m <= 1.0 + 1e-12)


# ---------------------------------------------------------------------------
# Interval clustering distances
# ---------------------------------------------------------------------------


def quadrature_pair_distance(g, h, steps=400):
    xs = (np.arange(steps) + 0.5) / steps
    c1 = np.searchsorted(g.params, xs, side="right")
    c2 = np.searchsorted(h.params, xs, side="right")
    same1 = c1[:, None] == c1[None, :]
    same2 = c2[:, None] == c2[None, :]
    return float(np.mean(same1 != same2))


def quadrature_protected_distance(g, h, interval, steps=400):
    xs = (np.arange(steps) + 0.5) / steps
    mid = 0.5 * (interval[0] + interval[1])
    in_g = np.searchsorted(g.params, xs) == np.searchsorted(g.params, mid)
    in_h = np.searchsorted(h.params, xs) == np.searchsorted(h.params, mid)
    return float(np.mean(in_g != in_h))


class TestIntervalDistances:
    def test_pair_distance_frozen_example(self):
        space = IntervalClusteringSpace(3, (0.0, 0.2))
        g = space.structure([0.5])
        h = space.structure([0.7])
        assert d_interval_c(g, h) == pytest.approx(0.32, abs=1e-12)

    def test_protected_distance_frozen_example(self):
        space = IntervalClusteringSpace(3, (0.0, 0.2))
        g = space.structure([0.5])
        h = space.structure([0.7])
        assert d_interval_I(g, h, (0.0, 0.2)) == pytest.approx(0.2, abs=1e-12)

    def test_identical_structures_zero(self):
        space = IntervalClusteringSpace(4, (0.0, 0.1))
        g = space.structure([0.3, 0.6])
        assert d_interval_c(g, g) == pytest.approx(0.0, abs=1e-12)
        assert d_interval_I(g, g, (0.0, 0.1)) == pytest.approx(0.0, abs=1e-12)

    def test_quadrature_cross_check(self):
        rng = np.random.default_rng(6)
        space = IntervalClusteringSpace(5, (0.0, 0.2))
        gs = space.sample_structures(12, rng)
        for i in range(0, 12, 2):
            g, h = gs[i], gs[i + 1]
            assert d_interval_c(g, h) == pytest.approx(
                quadrature_pair_distance(g, h), abs=0.01
            )
            assert d_interval_I(g, h, space.interval) == pytest.approx(
                quadrature_protected_distance(g, h, space.interval), abs=0.01
            )

    def test_boundary_inside_protected_interval_rejected(self):
        space = IntervalClusteringSpace(3, (0.2, 0.4))
        with pytest.raises(ConfigError):
            space.structure([0.3])
        with pytest.raises(ConfigError):
            d_interval_I(
                space.structure([0.5]),
                # structure built by hand to bypass space validation
                type(space.structure([0.5]))(np.array([0.3])),
                (0.2, 0.4),
            )

    def test_boundary_at_interval_endpoint_allowed(self):
        space = IntervalClusteringSpace(3, (0.2, 0.4))
        g = space.structure([0.2, 0.4])
        assert g.params.tolist() == [0.2, 0.4]

    def test_sampled_structures_respect_interval(self):
        rng = np.random.default_rng(7)
        space = IntervalClusteringSpace(6, (0.3, 0.45))
        for g in space.sample_structures(200, rng):
            b = g.params
            assert np.all(np.diff(b) >= 0)
            assert not np.any((b > 0.3) & (b < 0.45))
            assert np.all((b >= 0.0) & (b <= 1.0))

    def test_point_atom_mode(self):
        space = IntervalClusteringSpace(3, (0.0, 0.2), atom_mode="point")
        g = space.structure([0.5])
        assert space.evaluate(g, Atom(0, 0.3)) == 1
        assert space.evaluate(g, Atom(1, 0.7)) == 0

    def test_symmetry_and_range_bulk(self):
        rng = np.random.default_rng(8)
        space = IntervalClusteringSpace(5, (0.1, 0.3))
        gs = space.sample_structures(40, rng)
        dc = IntervalPairDistance()
        di = IntervalProtectedDistance((0.1, 0.3))
        for d in (dc, di):
            m = d.matrix(gs)
            assert np.allclose(m, m.T, atol=1e-12)
            assert np.allclose(np.diag(m), 0.0, atol=1e-12)
            assert np.all((m >= -1e-12) & (m <= 1.0 + 1e-12))

    def test_interval_validation(self):
        with pytest.raises(ConfigError):
            IntervalClusteringSpace(3, (0.5, 0.4))
        with pytest.raises(ConfigError):
            IntervalClusteringSpace(0, (0.0, 0.2))
        with pytest.raises(ConfigError):
            IntervalProtectedDistance((0.6, 0.6))


# ---------------------------------------------------------------------------
# Cluster identification and fairness distances
# ---------------------------------------------------------------------------


class TestClusterIdDistance:
    def test_frozen_example(self):
        space = FiniteLabeledSpace(5, BINARY, item_of_interest=1)
        g = space.table([0, 1, 1, 1, 1])
        h = space.table([0, 1, 1, 0, 0])
        assert d_cluster_id(g, h, space) == pytest.approx(0.5)

    def test_disjoint_apart_from_the_item(self):
        space = FiniteLabeledSpace(5, BINARY, item_of_interest=0)
        g = space.table([1, 1, 1, 0, 0])
        h = space.table([1, 0, 0, 1, 1])
        assert d_cluster_id(g, h, space) == pytest.approx(2.0 / 3.0)

    def test_equal_clusters_zero(self):
        space = FiniteLabeledSpace(4, BINARY)
        g = space.table([1, 1, 0, 0])
        h = space.table([1, 1, 0, 0])
        assert d_cluster_id(g, h, space) == 0.0

    def test_item_override_and_range(self):
        rng = np.random.default_rng(9)
        space = FiniteLabeledSpace(6, BINARY)
        for _ in range(200):
            g = space.table(rng.integers(0, 2, size=6).tolist())
            h = space.table(rng.integers(0, 2, size=6).tolist())
            i = int(rng.integers(6))
            v = d_cluster_id(g, h, space, i_star=i)
            assert 0.0 <= v <= 1.0
            assert v == d_cluster_id(h, g, space, i_star=i)

    def test_bad_item_rejected(self):
        space = FiniteLabeledSpace(3, BINARY)
        g = space.table([1, 0, 1])
        with pytest.raises(ConfigError):
            d_cluster_id(g, g, space, i_star=9)


class TestFairnessDistance:
    def make_space(self):
        return FiniteLabeledSpace(4, BINARY, protected=[0, 0, 1, 1])

    def test_frozen_example(self):
        space = self.make_space()
        g = space.table([1, 1, 1, 0])
        h = space.table([1, 1, 1, 1])
        assert d_fair(g, h, 1.0, space) == pytest.approx(0.5)

    def test_lambda_zero_is_plain_disagreement(self):
        space = self.make_space()
        g = space.table([1, 1, 1, 0])
        h = space.table([1, 1, 1, 1])
        assert d_fair(g, h, 0.0, space) == pytest.approx(0.25)

    def test_needs_protected_bits(self):
        space = FiniteLabeledSpace(4, BINARY)
        g = space.table([1, 0, 1, 0])
        with pytest.raises(ConfigError):
            d_fair(g, g, 1.0, space)

    def test_lambda_validation(self):
        space = self.make_space()
        g = space.table([1, 0, 1, 0])
        with pytest.raises(ConfigError):
            d_fair(g, g, 1.5, space)

    def test_symmetry_and_range_bulk(self):
        rng = np.random.default_rng(10)
        space = FiniteLabeledSpace(6, BINARY, protected=[0, 1, 0, 1, 0, 1])
        d = FairnessDistance(space, 0.7)
        for _ in range(500):
            g = space.table(rng.integers(0, 2, size=6).tolist())
            h = space.table(rng.integers(0, 2, size=6).tolist())
            v = d(g, h)
            assert 0.0 <= v <= 1.0
            assert v == pytest.approx(d(h, g), abs=1e-12)
            assert d(g, g) == 0.0


class TestDisagreementDistance:
    def test_weighted_table_mismatch(self):
        space = FiniteLabeledSpace(4, BINARY, weights=[0.4, 0.3, 0.2, 0.1])
        d = DisagreementDistance(space)
        g = space.table([1, 1, 0, 0])
        h = space.table([0, 1, 0, 1])
        assert d(g, h) == pytest.approx(0.5)

    def test_matrix_cross_target_consistent(self):
        rng = np.random.default_rng(11)
        space = FiniteLabeledSpace(5, BINARY)
        gs = [space.table(rng.integers(0, 2, size=5).tolist()) for _ in range(8)]
        d = DisagreementDistance(space)
        m = d.matrix(gs)
        assert np.allclose(m, m.T)
        assert np.allclose(np.diag(m), 0.0)
        assert m[1, 4] == pytest.approx(d(gs[1], gs[4]))
        assert np.allclose(d.to_target(gs, gs[2]), m[:, 2])
        assert np.allclose(d.cross(gs[:4], gs[4:]), [d(gs[i], gs[4 + i]) for i in range(4)])


class TestMatrixDistanceValidation:
    def test_requires_square_symmetric_zero_diag(self):
        with pytest.raises(ConfigError):
            MatrixDistance(np.zeros((2, 3)))
        with pytest.raises(ConfigError):
            MatrixDistance(np.array([[0.0, 1.0], [0.5, 0.0]]))
        with pytest.raises(ConfigError):
            MatrixDistance(np.array([[0.1, 1.0], [1.0, 0.0]]))
        with pytest.raises(ConfigError):
            MatrixDistance(np.array([[0.0, -1.0], [-1.0, 0.0]]))

    def test_lookup_by_structure_index(self):
        space = IndexedFamily([[0], [1], [0]], BINARY)
        m = np.array([[0.0, 0.5, 0.2], [0.5, 0.0, 0.7], [0.2, 0.7, 0.0]])
        d = MatrixDistance(m)
        gs = space.structures
        assert d(gs[0], gs[2]) == pytest.approx(0.2)
        assert np.allclose(d.matrix([gs[1], gs[2]]), [[0.0, 0.7], [0.7, 0.0]])
        assert np.allclose(d.to_target(gs, gs[1]), [0.5, 0.0, 0.7])

    def test_indexed_family_validation(self):
        with pytest.raises(ConfigError):
            IndexedFamily([], BINARY)
        with pytest.raises(ConfigError):
            IndexedFamily([[0, 1], [0]], BINARY)
        space = IndexedFamily([[0], [1]], BINARY)
        with pytest.raises(ConfigError):
            space.structure(5)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class TestOracles:
    def test_flip_oracle_noiseless(self):
        space = IndexedFamily([[1, 0], [0, 1]], BINARY)
        oracle = flip_oracle(space.structures[0], 0.0, space)
        rng = np.random.default_rng(12)
        assert all(
            oracle.respond(space.atoms[0], rng) == 1 for _ in range(20)
        )
        assert oracle.flip_rate == 0.0

    def test_flip_oracle_frequencies(self):
        rs = ResponseSet((0, 1, 2))
        space = IndexedFamily([[1, 1], [2, 0]], rs)
        oracle = flip_oracle(space.structures[0], 0.3, space)
        rng = np.random.default_rng(13)
        n = 100_000
        draws = np.array([oracle.respond(space.atoms[0], rng) for _ in range(n)])
        p_target = np.mean(draws == 1)
        sigma = math.sqrt(0.7 * 0.3 / n)
        assert abs(p_target - 0.7) <= 4 * sigma
        p_other = np.mean(draws == 0)
        sigma_o = math.sqrt(0.15 * 0.85 / n)
        assert abs(p_other - 0.15) <= 4 * sigma_o

    def test_flip_rate_validation(self):
        space = IndexedFamily([[1], [0]], BINARY)
        with pytest.raises(ConfigError):
            flip_oracle(space.structures[0], 0.5, space)
        with pytest.raises(ConfigError):
            flip_oracle(space.structures[0], -0.1, space)

    def test_massart_margin_binary(self):
        space = IndexedFamily([[1, 0], [0, 1]], BINARY)
        oracle = massart_oracle(space.structures[0], 0.5, space)
        assert oracle.massart_margin == pytest.approx(0.5)
        assert oracle.flip_rate == pytest.approx(0.25)
        # the margin holds exactly at every atom
        for a in space.atoms:
            law = oracle.law(a)
            top = np.max(law)
            second = np.max(law[law < top]) if np.any(law < top) else 0.0
            assert top - second == pytest.approx(0.5)

    def test_massart_validation(self):
        space = IndexedFamily([[1], [0]], BINARY)
        with pytest.raises(ConfigError):
            massart_oracle(space.structures[0], 0.0, space)
        with pytest.raises(ConfigError):
            massart_oracle(space.structures[0], 1.5, space)

    def test_recommended_beta(self):
        assert recommended_beta(0.25) == pytest.approx(math.log(3.0), abs=1e-12)
        with pytest.raises(ConfigError):
            recommended_beta(0.0)
        with pytest.raises(ConfigError):
            recommended_beta(0.5)

    def test_logistic_oracle_rate(self):
        space = LinearClassifierSpace(2)
        w_star = np.array([1.0, 0.0])
        oracle = logistic_oracle(w_star, space)
        atom = Atom(0, np.array([math.log(3.0), 0.0]))
        law = oracle.law(atom)
        assert law[space.response_set.index(1)] == pytest.approx(0.75, abs=1e-12)
        rng = np.random.default_rng(14)
        n = 100_000
        hits = sum(oracle.respond(atom, rng) == 1 for _ in range(n))
        assert abs(hits / n - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / n)

    def test_logit_choice_oracle_rate(self):
        items = np.array([[1.0, 0.0], [0.0, 1.0]])
        space = LogitChoiceSpace(items)
        # utility gap <w*, x_0 - x_1> = log 3 makes the first item a 3:1 pick
        oracle = logit_choice_oracle(np.array([math.log(3.0), 0.0]), space)
        law = oracle.law(space.atom(0, 1))
        assert law[space.response_set.index(1)] == pytest.approx(0.75, abs=1e-12)


# ---------------------------------------------------------------------------
# Linear classifier space details
# ---------------------------------------------------------------------------


class TestLinearClassifierSpace:
    def test_sampled_atoms_unit_norm(self):
        space = LinearClassifierSpace(5)
        rng = np.random.default_rng(15)
        atoms = space.sample_atoms(100, rng)
        for a in atoms:
            assert np.linalg.norm(a.payload) == pytest.approx(1.0, abs=1e-12)

    def test_sampled_structures_unit_norm(self):
        space = LinearClassifierSpace(5)
        rng = np.random.default_rng(16)
        for g in space.sample_structures(50, rng):
            assert np.linalg.norm(g.params) == pytest.approx(1.0, abs=1e-12)

    def test_predict_matrix_matches_scalar(self):
        space = LinearClassifierSpace(3)
        rng = np.random.default_rng(17)
        gs = space.sample_structures(6, rng)
        atoms = space.sample_atoms(9, rng)
        m = space.predict_matrix(gs, atoms)
        assert m.shape == (6, 9)
        assert m[2, 5] == pytest.approx(space.predict(gs[2], atoms[5]))

    def test_label_sign(self):
        space = LinearClassifierSpace(2)
        assert space.label_sign(1) == 1.0
        assert space.label_sign(-1) == -1.0


class TestLogitChoiceSpace:
    def test_random_items_unit_norm(self):
        space = LogitChoiceSpace.random(8, 3, np.random.default_rng(18))
        assert space.items.shape == (8, 3)
        assert np.allclose(np.linalg.norm(space.items, axis=1), 1.0)

    def test_atom_validation(self):
        space = LogitChoiceSpace(np.eye(3))
        with pytest.raises(ConfigError):
            space.atom(1, 1)
        with pytest.raises(ConfigError):
            space.atom(0, 9)

    def test_best_index(self):
        space = LogitChoiceSpace(np.eye(3))
        g = space.structure(np.array([0.0, 2.0, 1.0]))
        assert space.best_index(g) == 1


# ---------------------------------------------------------------------------
# The separation family
# ---------------------------------------------------------------------------


class TestSeparationFamily:
    def test_geometry_k4(self):
        fam = build_separation_family(4, (0.0, 0.2))
        assert np.allclose(fam.base.params, [0.2, 0.4, 0.6, 0.8])
        expected_extra = [0.3, 0.5, 0.7, 0.9]
        for i, v in enumerate(fam.variants):
            assert sorted(set(v.params) - set(fam.base.params)) == pytest.approx(
                [expected_extra[i]]
            )

    def test_pair_distances(self):
        fam = build_separation_family(4, (0.0, 0.2))
        for v in fam.variants:
            assert d_interval_c(fam.base, v) == pytest.approx(0.02, abs=1e-12)
        assert d_interval_c(fam.variants[0], fam.variants[1]) == pytest.approx(
            0.04, abs=1e-12
        )

    def test_protected_distance_identically_zero(self):
        fam = build_separation_family(4, (0.0, 0.2))
        gs = fam.structures
        interval = fam.space.interval
        for i in range(len(gs)):
            for j in range(len(gs)):
                assert d_interval_I(gs[i], gs[j], interval) == pytest.approx(
                    0.0, abs=1e-15
                )

    def test_anchoring_validation(self):
        with pytest.raises(ConfigError):
            build_separation_family(4, (0.1, 0.3))
        with pytest.raises(ConfigError):
            build_separation_family(4, (0.0, 0.7))
        with pytest.raises(ConfigError):
            build_separation_family(0, (0.0, 0.2))

    def test_structure_count(self):
        fam = build_separation_family(7, (0.0, 0.25))
        assert len(fam.structures) == 8
