from fractions import Fraction

import numpy as np
import pytest

from gglr.embedding import (
    betweenness,
    choose_gamma,
    embed,
    is_manifold_graph,
    require_manifold,
    two_hop_matrix,
    two_hop_sets,
    vbc,
)
from gglr.errors import DimensionTooSmall, NotConnected, NotManifold
from gglr.graphs import Graph, gershgorin_lower_bound, laplacian

from conftest import (
    complete_graph,
    line_graph,
    random_geometric_graph,
    ring_graph,
    star_graph,
)


def naive_betweenness(g):
    """All-pairs BFS path counting in exact rational arithmetic."""
    adj = [[] for _ in range(g.n)]
    for i, j in zip(g.edge_i, g.edge_j):
        adj[int(i)].append(int(j))
        adj[int(j)].append(int(i))
    n = g.n

    def count_paths(s):
        # number of shortest paths from s to every node, with distances
        from collections import deque

        dist = [-1] * n
        cnt = [0] * n
        dist[s] = 0
        cnt[s] = 1
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
                if dist[v] == dist[u] + 1:
                    cnt[v] += cnt[u]
        return dist, cnt

    dists, counts = zip(*(count_paths(s) for s in range(n)))
    cb = [Fraction(0)] * n
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            for v in range(n):
                if v in (s, t):
                    continue
                if dists[s][v] + dists[v][t] == dists[s][t]:
                    through = counts[s][v] * counts[t][v]
                    cb[v] += Fraction(through, counts[s][t])
    norm = (n - 1) * (n - 2)
    return np.array([float(c / norm) for c in cb])


class TestTwoHopSets:
    def test_triangle_has_no_disconnected_two_hop(self):
        g = complete_graph(3)
        assert all(len(t) == 0 for t in two_hop_sets(g))
        assert two_hop_matrix(g).is_zero

    def test_five_node_line_enumeration(self):
        g = line_graph(5)
        tsets = two_hop_sets(g)
        assert tsets == [{2}, {3}, {0, 4}, {1}, {2}]

    def test_star_leaves_pairwise(self):
        g = star_graph(4)
        tsets = two_hop_sets(g)
        assert len(tsets[0]) == 0  # hub is adjacent to everyone
        for leaf in range(1, 5):
            assert tsets[leaf] == {v for v in range(1, 5) if v != leaf}
            assert len(tsets[leaf]) == 3


class TestTwoHopMatrix:
    def test_laplacian_like_structure(self, rng):
        for _ in range(4):
            g = random_geometric_graph(rng, int(rng.integers(8, 25)), 2)
            q = two_hop_matrix(g)
            dense = q.q.to_dense()
            assert np.allclose(dense, dense.T, atol=1e-12)
            assert np.max(np.abs(dense.sum(axis=1))) <= 1e-12
            assert np.linalg.eigvalsh(dense).min() >= -1e-10

    def test_pair_weights(self):
        g = line_graph(5)
        q = two_hop_matrix(g).q.to_dense()
        # nodes 0 and 2: T_0 = 1, T_2 = 2, so the pair weight is 1 + 1/2
        assert q[0, 2] == pytest.approx(-1.5)
        assert q[0, 0] == pytest.approx(1.5)


class TestChooseGamma:
    def test_zero_two_hop_gives_zero(self):
        g = complete_graph(4)
        q = two_hop_matrix(g)
        assert choose_gamma(laplacian(g), q, 0.5) == 0.0

    def test_five_node_line_psd(self):
        g = line_graph(5)
        lap = laplacian(g)
        q = two_hop_matrix(g)
        eps = 0.3
        gamma = choose_gamma(lap, q, eps)
        assert gamma > 0
        a = lap.to_dense() - gamma * q.q.to_dense() + eps * np.eye(5)
        assert np.linalg.eigvalsh(a).min() >= -1e-10

    def test_disjoint_support(self, rng):
        # an off-diagonal position is never used by both matrices
        for _ in range(4):
            g = random_geometric_graph(rng, 15, 2)
            lap = laplacian(g).to_dense()
            q = two_hop_matrix(g).q.to_dense()
            off = ~np.eye(15, dtype=bool)
            both = (np.abs(lap) > 0) & (np.abs(q) > 0) & off
            assert not both.any()

    def test_collapsed_formula_equals_full_disc_formula(self, rng):
        # the per-row bound simplifies because Laplacian rows sum to zero;
        # the uncollapsed disc expression must give the same gamma
        for _ in range(4):
            g = random_geometric_graph(rng, 18, 2, weight_kind="random")
            lap = laplacian(g)
            q = two_hop_matrix(g)
            if q.is_zero:
                continue
            eps = 0.2
            gamma = choose_gamma(lap, q, eps)
            ld = lap.to_dense()
            qd = q.q.to_dense()
            full = []
            for i in range(g.n):
                denom = qd[i, i] - (qd[i].sum() - qd[i, i])
                if qd[i, i] <= 0:
                    continue
                numer = ld[i, i] + (ld[i].sum() - ld[i, i]) + eps
                full.append(numer / denom)
            assert gamma == pytest.approx(min(full), rel=1e-12)

    def test_disc_left_ends_stay_non_negative(self, rng):
        for _ in range(4):
            g = random_geometric_graph(rng, 20, 2, weight_kind="random")
            lap = laplacian(g)
            q = two_hop_matrix(g)
            if q.is_zero:
                continue
            eps = 0.1
            gamma = choose_gamma(lap, q, eps)
            from gglr.embedding import _assemble_embedding_matrix

            a = _assemble_embedding_matrix(lap, q.q, gamma, eps)
            assert gershgorin_lower_bound(a) >= -1e-12


class TestEmbed:
    def test_line_graph_monotone(self):
        g = line_graph(5)
        emb = embed(g, 1)
        coords = emb.coords[:, 0]
        diffs = np.diff(coords)
        assert np.all(diffs > 0) or np.all(diffs < 0)

    def test_ring_equidistant(self):
        g = ring_graph(5)
        emb = embed(g, 2)
        p = emb.coords
        dists = [np.linalg.norm(p[i] - p[(i + 1) % 5]) for i in range(5)]
        assert max(dists) / min(dists) <= 1.05

    def test_columns_orthonormal(self, rng):
        g = random_geometric_graph(rng, 20, 2)
        emb = embed(g, 3)
        gram = emb.coords.T @ emb.coords
        assert np.allclose(gram, np.eye(3), atol=1e-6)

    def test_epsilon_matches_dense_second_smallest(self, rng):
        g = random_geometric_graph(rng, 15, 2)
        q = two_hop_matrix(g)
        if q.is_zero:
            pytest.skip("no two-hop structure in this draw")
        emb = embed(g, 2)
        w = np.linalg.eigvalsh(q.q.to_dense())
        assert emb.epsilon == pytest.approx(w[1], abs=1e-6)

    def test_dimension_guards(self):
        g = line_graph(6)
        with pytest.raises(DimensionTooSmall):
            embed(g, 5)  # K = N - 1
        with pytest.raises(DimensionTooSmall):
            embed(g, 9)

    def test_disconnected_rejected(self):
        g = Graph(4, np.array([(0, 1, 1.0), (2, 3, 1.0)]))
        with pytest.raises(NotConnected):
            embed(g, 1)

    def test_restoration_invariant_to_sign_flip(self):
        # flipping embedded coordinates changes the selected edges but not
        # restoration quality on a planar-reachable signal
        from gglr.restore import ObservationMap, RestoreProblem, restore

        g = line_graph(7)
        bare = Graph(7, np.column_stack([g.edge_i, g.edge_j, g.edge_w]))
        emb = embed(bare, 1)
        y = np.array([0.0, 1.0, 2.1, 2.9, 4.2, 5.0, 6.1])
        outs = []
        for sign in (1.0, -1.0):
            gc = Graph(7, np.column_stack([g.edge_i, g.edge_j, g.edge_w]),
                       coords=sign * emb.coords)
            problem = RestoreProblem(y=y, h=ObservationMap.identity(7), mu=0.5,
                                     mode="signal-dependent", sigma_alpha=1.0,
                                     max_iters=20)
            outs.append(restore(problem, gc).x_star)
        assert np.allclose(outs[0], outs[1], atol=1e-6)


class TestBetweenness:
    def test_complete_graph_zero(self):
        g = complete_graph(5)
        assert np.allclose(betweenness(g), 0.0)
        assert vbc(g) == 0.0

    def test_exact_match_with_naive_oracle(self, rng):
        for _ in range(4):
            g = random_geometric_graph(rng, int(rng.integers(6, 30)), 2)
            got = betweenness(g)
            expect = naive_betweenness(g)
            assert got.tolist() == expect.tolist()

    def test_line_exceeds_ring(self):
        n = 9
        assert vbc(line_graph(n)) > vbc(ring_graph(n))

    def test_hub_dominated_graph_fails_gate(self):
        g = star_graph(33)
        assert vbc(g) > 1e-4
        ok, diag = is_manifold_graph(g)
        assert not ok and diag["vbc"] > 1e-4
        with pytest.raises(NotManifold):
            require_manifold(g)

    def test_regular_graphs_pass_gate(self):
        ok, diag = is_manifold_graph(ring_graph(30))
        assert ok and diag["vbc"] <= 1e-4
        ok, _ = is_manifold_graph(complete_graph(8), threshold=1e-12)
        assert ok

    def test_zero_threshold_rejects_non_transitive(self):
        ok, _ = is_manifold_graph(line_graph(6), threshold=0.0)
        assert not ok
