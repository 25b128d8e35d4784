import numpy as np
import pytest
import scipy.sparse as sp

from coherentsets import (
    BoxPartition,
    ConstantFlow,
    CoherentPair,
    DegenerateMaskError,
    FpConfig,
    RealField,
    SdeRun,
    TransitionMatrix,
    assemble_transfer,
    coherence_ratio,
    kmeans_partition,
    left_vector_field,
    line_search_threshold,
    make_grid,
    sde_kappa,
    singular_triples,
    threshold_pair,
    vector_to_field,
)


def _field_pair(values_v, values_u, lengths=(2.0, 2.0)):
    M = values_v.shape[0]
    N = M if M % 2 == 1 else M - 1
    g = make_grid(2, N, M, lengths)
    return RealField(g, values_v), RealField(g, values_u)


class TestThresholdPair:
    def test_symmetric_field_halves_domain(self):
        x = np.linspace(0, 2, 16, endpoint=False)
        X, _ = np.meshgrid(x, x, indexing="ij")
        v = np.sin(np.pi * X)
        v2, u2 = _field_pair(v, v)
        pair = threshold_pair(v2, u2, 0.0)
        assert pair.volume_a0 == pytest.approx(0.5 * 4.0, rel=0.1)
        assert pair.a0_mask.mean() == pytest.approx(0.5, abs=0.05)

    def test_threshold_above_max_degenerate(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal((16, 16))
        v2, u2 = _field_pair(v, v)
        with pytest.raises(DegenerateMaskError):
            threshold_pair(v2, u2, v.max() + 1.0)

    def test_grid_mismatch(self):
        v2, _ = _field_pair(np.ones((16, 16)) * np.linspace(-1, 1, 16)[:, None], None
                            if False else np.zeros((16, 16)))
        g2 = make_grid(2, 5, 8, [2.0, 2.0])
        u2 = RealField(g2, np.zeros((8, 8)))
        with pytest.raises(ValueError, match="same plot grid"):
            threshold_pair(v2, u2, 0.0)


def identity_operator(M=9):
    g = make_grid(2, M, M, [2.0, 2.0])
    flow = ConstantFlow((0.0, 0.0), (2.0, 2.0))
    return assemble_transfer(g, flow, FpConfig(epsilon=0.0, t0=0, t1=1, steps=1))


class TestCoherenceRatio:
    def test_identity_with_matching_pair_gives_two(self):
        tm = identity_operator()
        rng = np.random.default_rng(1)
        mask = rng.uniform(size=(9, 9)) > 0.5
        pair = CoherentPair(mask, mask, 0.0, tm.grid.quad_weight, tm.grid.lengths)
        assert coherence_ratio(tm, pair) == pytest.approx(2.0, abs=1e-10)

    def test_identity_with_complement_gives_zero(self):
        tm = identity_operator()
        rng = np.random.default_rng(2)
        mask = rng.uniform(size=(9, 9)) > 0.5
        pair = CoherentPair(mask, ~mask, 0.0, tm.grid.quad_weight, tm.grid.lengths)
        assert coherence_ratio(tm, pair) == pytest.approx(0.0, abs=1e-10)

    def test_uniform_averaging_gives_one(self):
        tm = identity_operator()
        # rank-one averaging operator in the same weighted format
        u1 = tm.entries[:, 0:1]
        v1 = np.zeros((tm.grid.n_modes, 1))
        v1[0, 0] = 1.0
        tm.entries = u1 @ v1.T
        rng = np.random.default_rng(3)
        for _ in range(3):
            m0 = rng.uniform(size=(9, 9)) > rng.uniform(0.2, 0.8)
            m1 = rng.uniform(size=(9, 9)) > rng.uniform(0.2, 0.8)
            if not (m0.any() and not m0.all()):
                continue
            pair = CoherentPair(m0, m1, 0.0, tm.grid.quad_weight, tm.grid.lengths)
            assert coherence_ratio(tm, pair) == pytest.approx(1.0, abs=1e-10)

    def test_complement_symmetry(self, quad_tm):
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        pair = threshold_pair(v2, u2, 0.0)
        rho = coherence_ratio(quad_tm, pair)
        rho_c = coherence_ratio(quad_tm, pair.complement())
        assert rho == pytest.approx(rho_c, abs=1e-12)

    def test_relaxation_bound(self, quad_tm):
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        for theta in (-0.2, 0.0, 0.15, 0.4):
            pair = threshold_pair(v2, u2, theta)
            rho = coherence_ratio(quad_tm, pair)
            assert rho - 1.0 <= tr.sigma[1] + 1e-6

    def test_mask_shape_checked(self, quad_tm):
        pair = CoherentPair(np.ones((4, 4), bool), np.ones((4, 4), bool), 0.0,
                            quad_tm.grid.quad_weight, quad_tm.grid.lengths)
        pair.a0_mask[0, 0] = False
        with pytest.raises(ValueError, match="match"):
            coherence_ratio(quad_tm, pair)


class TestLineSearch:
    def _two_block_operator(self):
        # box chain with two internally averaging blocks
        n = 8
        dense = np.zeros((n * n, n * n))
        part = BoxPartition(n, (1.0, 1.0))
        idx = part.multi_index(np.arange(n * n))
        left = idx[:, 0] < n // 2
        for j in range(n * n):
            grp = left if left[j] else ~left
            dense[grp, j] = 1.0 / grp.sum()
        return TransitionMatrix(part, sp.csc_matrix(dense), 1, None, 0.01), part, left

    def test_recovers_block_split(self):
        op, part, left = self._two_block_operator()
        # monotone surrogate for the second singular function
        vals = part.center_grid(np.where(left, 1.0, -1.0) * (1 + 0.01 * np.arange(64)))
        g = make_grid(2, 7, 8, [1.0, 1.0])
        v2 = RealField(g, vals)
        u2 = RealField(g, vals)
        best = line_search_threshold(v2, u2, op)
        assert best.rho == pytest.approx(2.0, abs=1e-10)
        assert best.a0_mask.sum() == 32

    def test_single_candidate_equals_threshold_pair(self, quad_tm):
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        best = line_search_threshold(v2, u2, quad_tm, thetas=[0.0])
        ref = threshold_pair(v2, u2, 0.0)
        assert np.array_equal(best.a0_mask, ref.a0_mask)
        assert best.rho == pytest.approx(coherence_ratio(quad_tm, ref))

    def test_all_degenerate_raises(self, quad_tm):
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        with pytest.raises(DegenerateMaskError):
            line_search_threshold(v2, u2, quad_tm, thetas=[1e9, -1e9])

    def test_benchmark_regression(self, quad_tm):
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        best = line_search_threshold(v2, u2, quad_tm)
        assert best.rho >= coherence_ratio(quad_tm, threshold_pair(v2, u2, 0.0)) - 1e-12
        assert best.rho == pytest.approx(1.77466, abs=5e-4)


class TestSdeKappa:
    def _square_pair(self, M=16, lengths=(2.0, 2.0)):
        g = make_grid(2, M - 1, M, lengths)
        x = g.axis_nodes(0)
        X, Y = np.meshgrid(x, x, indexing="ij")
        a0 = (X < 1.0) & (Y < 1.0)
        return CoherentPair(a0, a0.copy(), 0.0, g.quad_weight, g.lengths)

    def test_frozen_dynamics_identity(self):
        pair = self._square_pair()
        flow = ConstantFlow((0.0, 0.0), (2.0, 2.0))
        est = sde_kappa(flow, 0.0, pair, SdeRun(particles=2000, seed=1), 0.0, 1.0)
        assert est.kappa == 1.0

    def test_mixing_limit(self):
        pair = self._square_pair()
        pair.a1_mask = np.zeros_like(pair.a1_mask)
        pair.a1_mask[:, :8] = True  # lower half in y
        flow = ConstantFlow((0.0, 0.0), (2.0, 2.0))
        est = sde_kappa(flow, 1.5, pair, SdeRun(particles=40000, seed=4), 0.0, 6.0)
        assert abs(est.kappa - 0.5) <= 3 * est.stderr + 0.01

    def test_complements_sum_to_one(self, quad_gyre):
        pair = self._square_pair()
        run = SdeRun(particles=5000, seed=9)
        a = sde_kappa(quad_gyre, 0.05, pair, run, 0.0, 1.0)
        comp = CoherentPair(pair.a0_mask, ~pair.a1_mask, 0.0, pair.cell_volume,
                            pair.lengths)
        b = sde_kappa(quad_gyre, 0.05, comp, run, 0.0, 1.0)
        assert a.kappa + b.kappa == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self, quad_gyre):
        pair = self._square_pair()
        run = SdeRun(particles=3000, seed=21)
        a = sde_kappa(quad_gyre, 0.1, pair, run, 0.0, 0.5)
        b = sde_kappa(quad_gyre, 0.1, pair, run, 0.0, 0.5)
        assert a.kappa == b.kappa

    def test_empty_a0_rejected(self, quad_gyre):
        pair = self._square_pair()
        pair.a0_mask = np.zeros_like(pair.a0_mask)
        with pytest.raises(DegenerateMaskError):
            sde_kappa(quad_gyre, 0.1, pair, SdeRun(particles=10), 0.0, 0.5)

    def test_benchmark_pair_regression(self, quad_tm, quad_gyre):
        # value frozen from the first run of the benchmark extraction
        tr = singular_triples(quad_tm, 2)
        v2 = vector_to_field(quad_tm, tr.right[:, 1], quad_tm.grid.M)
        u2 = left_vector_field(quad_tm, tr, 1)
        pair = threshold_pair(v2, u2, 0.0)
        est = sde_kappa(quad_gyre, 0.02, pair, SdeRun(particles=20000, seed=12),
                        0.0, 10.25)
        assert est.kappa == pytest.approx(0.4615, abs=0.012)


class TestKmeans:
    def test_two_blocks_exact(self):
        g = make_grid(2, 7, 8, [2.0, 2.0])
        vals = np.zeros((8, 8))
        vals[:4] = 5.0
        labels = kmeans_partition([RealField(g, vals)], 2, seed=0)
        assert len(np.unique(labels)) == 2
        assert len(np.unique(labels[:4])) == 1
        assert len(np.unique(labels[4:])) == 1
        assert labels[0, 0] != labels[7, 0]

    def test_deterministic(self):
        g = make_grid(2, 7, 8, [2.0, 2.0])
        rng = np.random.default_rng(5)
        fields = [RealField(g, rng.standard_normal((8, 8))) for _ in range(3)]
        a = kmeans_partition(fields, 3, seed=11, restarts=4)
        b = kmeans_partition(fields, 3, seed=11, restarts=4)
        assert np.array_equal(a, b)

    def test_k_validation(self):
        g = make_grid(2, 3, 4, [2.0, 2.0])
        f = RealField(g, np.zeros((4, 4)))
        with pytest.raises(ValueError):
            kmeans_partition([f], 1)
        with pytest.raises(ValueError):
            kmeans_partition([f], 17)

    def test_benchmark_cluster_quadrant_overlap_regression(self, quad_tm):
        # frozen diagnostic: two clusters align with quadrants, two straddle
        tr = singular_triples(quad_tm, 5)
        fields = [vector_to_field(quad_tm, tr.right[:, i], 64) for i in range(1, 5)]
        labels = kmeans_partition(fields, 4, seed=3, restarts=8)
        x = np.arange(64) * 2 / 64
        X, Y = np.meshgrid(x, x, indexing="ij")
        quad = (X >= 1).astype(int) * 2 + (Y >= 1).astype(int)
        overlaps = sorted(
            max(np.mean(quad[labels == c] == q) for q in range(4)) for c in range(4)
        )
        assert overlaps[-1] > 0.9
        assert overlaps[0] > 0.3
