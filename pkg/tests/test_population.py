import math

import numpy as np
import pytest
from scipy.stats import truncnorm

from poolpricer.errors import InvalidInputError, ParseError
from poolpricer.population import (DEFAULT_CLASSES, BehaviouralClass, NetworkModel, TripRequest, check_shares,
                                   discretize_class, generate_demand, load_requests, make_request,
                                   sample_population, sample_vot, sample_vot_discrete, save_requests,
                                   travel_time, truncated_mean)


def test_table_classes():
    got = [(c.vot_mean, c.vot_std, c.share) for c in DEFAULT_CLASSES]
    assert got == [(16.98, 0.318, 0.29), (14.02, 0.201, 0.28), (26.25, 5.777, 0.24), (7.78, 1.0, 0.19)]


class TestTravelTime:
    def test_zero_distance(self):
        for metric in ("rectilinear", "euclidean"):
            assert travel_time((0, 0), (0, 0), NetworkModel(metric, 20)) == 0

    def test_rectilinear(self):
        assert travel_time((0, 0), (3, 4), NetworkModel("rectilinear", 20)) == pytest.approx(7 / 20)

    def test_euclidean(self):
        assert travel_time((0, 0), (3, 4), NetworkModel("euclidean", 20)) == pytest.approx(0.25)

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(3)
        for metric in ("rectilinear", "euclidean"):
            net = NetworkModel(metric, 17.0)
            for _ in range(200):
                a, b, c = (tuple(rng.uniform(-5, 5, 2)) for _ in range(3))
                assert travel_time(a, b, net) == pytest.approx(travel_time(b, a, net))
                assert travel_time(a, c, net) <= travel_time(a, b, net) + travel_time(b, c, net) + 1e-12

    @pytest.mark.parametrize("speed", [0.0, -1.0, float("nan")])
    def test_bad_speed(self, speed):
        with pytest.raises(InvalidInputError):
            NetworkModel("rectilinear", speed)

    def test_bad_metric(self):
        with pytest.raises(InvalidInputError):
            NetworkModel("manhattan2")

    def test_non_finite_coordinates(self, net):
        with pytest.raises(InvalidInputError):
            net.distance((0, float("inf")), (1, 1))


class TestDemand:
    def test_cardinality_positive(self, net):
        reqs = generate_demand(300, (0, 0, 5, 5), net, np.random.default_rng(1))
        assert len(reqs) == 300
        assert all(r.d > 0 and r.t > 0 for r in reqs)
        assert [r.traveller_id for r in reqs] == list(range(300))

    def test_deterministic(self, net):
        a = generate_demand(50, (0, 0, 5, 5), net, np.random.default_rng(7))
        b = generate_demand(50, (0, 0, 5, 5), net, np.random.default_rng(7))
        assert a == b

    def test_mean_length(self, net):
        reqs = generate_demand(1000, (0, 0, 5, 5), net, np.random.default_rng(11))
        d = np.array([r.d for r in reqs])
        # E|dx| for two uniforms on [0, 5] is 5/3, so E[d] = 10/3
        assert abs(d.mean() - 10 / 3) < 3 * d.std(ddof=1) / math.sqrt(len(d))

    def test_speed_consistency(self):
        net = NetworkModel("euclidean", 13.0)
        for r in generate_demand(100, (0, 0, 3, 2), net, np.random.default_rng(0)):
            assert r.t * net.speed == pytest.approx(r.d, rel=1e-9)

    def test_bad_args(self, net):
        with pytest.raises(InvalidInputError):
            generate_demand(0, (0, 0, 5, 5), net, np.random.default_rng(0))
        with pytest.raises(InvalidInputError):
            generate_demand(5, (0, 0, 0, 5), net, np.random.default_rng(0))


class TestCsv:
    def test_roundtrip(self, tmp_path, net):
        reqs = generate_demand(20, (0, 0, 5, 5), net, np.random.default_rng(5))
        path = tmp_path / "req.csv"
        save_requests(path, reqs)
        back = load_requests(path, net)
        assert back == reqs

    def test_line_numbers(self, tmp_path, net):
        path = tmp_path / "bad.csv"
        path.write_text("traveller_id,ox,oy,dx,dy\n0,0,0,1,1\n1,0,zero,1,1\n")
        with pytest.raises(ParseError) as err:
            load_requests(path, net)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_header(self, tmp_path, net):
        path = tmp_path / "bad.csv"
        path.write_text("id,a,b,c,d\n")
        with pytest.raises(ParseError) as err:
            load_requests(path, net)
        assert err.value.line == 1

    def test_zero_length(self, tmp_path, net):
        path = tmp_path / "bad.csv"
        path.write_text("traveller_id,ox,oy,dx,dy\n0,1,1,1,1\n")
        with pytest.raises(ParseError):
            load_requests(path, net)

    def test_duplicate_ids(self, tmp_path, net):
        path = tmp_path / "dup.csv"
        path.write_text("traveller_id,ox,oy,dx,dy\n4,0,0,1,1\n4,0,0,2,1\n")
        with pytest.raises(InvalidInputError):
            load_requests(path, net)

    def test_field_count(self, tmp_path, net):
        path = tmp_path / "bad.csv"
        path.write_text("traveller_id,ox,oy,dx,dy\n0,0,0,1\n")
        with pytest.raises(ParseError):
            load_requests(path, net)


class TestDiscretize:
    def test_two_points_symmetric(self):
        dist = discretize_class(DEFAULT_CLASSES[0], K=2)
        lo, hi = dist.support
        assert dist.weights == (0.5, 0.5)
        assert (lo + hi) / 2 == pytest.approx(16.98, abs=1e-9)
        # half-normal conditional mean: mu +- sigma * sqrt(2/pi)
        assert hi - 16.98 == pytest.approx(0.318 * math.sqrt(2 / math.pi), rel=1e-9)

    @pytest.mark.parametrize("K", [2, 5, 20])
    def test_degenerate(self, K):
        dist = discretize_class(BehaviouralClass(0, 12.0, 0.0, 1.0), K)
        assert dist.support == (12.0,) and dist.weights == (1.0,)

    @pytest.mark.parametrize("c", DEFAULT_CLASSES)
    @pytest.mark.parametrize("K", [2, 7, 20, 50])
    def test_invariants(self, c, K):
        dist = discretize_class(c, K)
        assert math.fsum(dist.weights) == pytest.approx(1.0, abs=1e-12)
        assert all(np.diff(dist.support) > 0)
        assert abs(dist.mean - truncated_mean(c)) <= max(1e-6, 2 * c.vot_std / K)

    def test_bins_against_scipy(self):
        # independent oracle: average of truncnorm quantiles inside each bin
        c = BehaviouralClass(0, 3.0, 2.5, 1.0)   # visible truncation at 0
        K = 8
        dist = discretize_class(c, K)
        a = -c.vot_mean / c.vot_std
        tn = truncnorm(a, np.inf, loc=c.vot_mean, scale=c.vot_std)
        u = (np.arange(200000) + 0.5) / 200000
        x = tn.ppf(u).reshape(K, -1).mean(axis=1)
        assert np.allclose(dist.support, x, atol=2e-3)
        assert dist.mean == pytest.approx(tn.mean(), abs=1e-9)

    def test_bad_K(self):
        with pytest.raises(InvalidInputError):
            discretize_class(DEFAULT_CLASSES[0], 1)


class TestSampling:
    def test_class_frequencies(self):
        reqs = [TripRequest(i, (0, 0), (1, 0), 1.0, 0.05) for i in range(10000)]
        pop = sample_population(DEFAULT_CLASSES, reqs, np.random.default_rng(2))
        counts = np.bincount([g.true_class for g in pop], minlength=4)
        for c, k in zip(DEFAULT_CLASSES, counts):
            se = math.sqrt(c.share * (1 - c.share) / 10000)
            assert abs(k / 10000 - c.share) < 3 * se
        assert all(g.satisfaction == 0 for g in pop)

    def test_single_class(self):
        reqs = [TripRequest(i, (0, 0), (1, 0), 1.0, 0.05) for i in range(30)]
        cls = [BehaviouralClass(5, 10.0, 1.0, 1.0)]
        pop = sample_population(cls, reqs, np.random.default_rng(0), initial_satisfaction=0.3)
        assert {g.true_class for g in pop} == {5}
        assert all(g.satisfaction == 0.3 for g in pop)

    def test_reproducible(self):
        reqs = [TripRequest(i, (0, 0), (1, 0), 1.0, 0.05) for i in range(100)]
        a = sample_population(DEFAULT_CLASSES, reqs, np.random.default_rng(9))
        b = sample_population(DEFAULT_CLASSES, reqs, np.random.default_rng(9))
        assert a == b

    def test_shares_must_sum_to_one(self):
        with pytest.raises(InvalidInputError):
            check_shares([BehaviouralClass(0, 1, 1, 0.5), BehaviouralClass(1, 2, 1, 0.4)])

    def test_vot_degenerate(self):
        c = BehaviouralClass(0, 9.5, 0.0, 1.0)
        rng = np.random.default_rng(0)
        assert all(sample_vot(c, rng) == 9.5 for _ in range(10))

    def test_vot_mean(self):
        rng = np.random.default_rng(4)
        x = np.array([sample_vot(DEFAULT_CLASSES[3], rng) for _ in range(100000)])
        assert abs(x.mean() - 7.78) < 3 * x.std(ddof=1) / math.sqrt(len(x))
        assert (x >= 0).all()

    def test_vot_truncation(self):
        rng = np.random.default_rng(5)
        c = BehaviouralClass(0, 0.5, 2.0, 1.0)
        x = np.array([sample_vot(c, rng) for _ in range(5000)])
        assert (x >= 0).all()

    def test_discrete_inverse_cdf(self):
        dist = discretize_class(DEFAULT_CLASSES[2], 20)
        u = (np.arange(20) + 0.5) / 20
        assert [sample_vot_discrete(dist, v) for v in u] == list(dist.support)
        assert sample_vot_discrete(dist, 0.0) == dist.support[0]
        assert sample_vot_discrete(dist, 1 - 1e-16) == dist.support[-1]


def test_make_request_rejects_zero_trip(net):
    with pytest.raises(InvalidInputError):
        make_request(0, (1, 1), (1, 1), net)
