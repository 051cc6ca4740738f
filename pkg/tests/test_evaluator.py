"""Exact ROC/GAR sweeps checked against a brute-force threshold scan."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siamverify import (NetworkSpec, ScoreSet, accuracy_at, best_accuracy,
                        build_network, gar_at_far, metrics_report, roc_curve,
                        score_pairs)
from siamverify.dataset import ImageRecord, PairRecord
from siamverify.errors import ConfigError, DomainError

EXAMPLE = ScoreSet(genuine=np.array([0.9, 0.8, 0.7, 0.4]),
                   impostor=np.array([0.6, 0.3, 0.2, 0.1]))


def brute_force_gar(s: ScoreSet, far_target: float):
    """Scan every observed threshold ascending; first with FAR <= target wins."""
    best = (0.0, np.inf)
    for t in sorted(set(s.genuine) | set(s.impostor)):
        far = np.mean(s.impostor >= t)
        if far <= far_target:
            return float(np.mean(s.genuine >= t)), float(t)
    return best


def brute_force_best_acc(s: ScoreSet):
    total = s.genuine.size + s.impostor.size
    best_acc, best_t = -1.0, None
    for t in sorted(set(s.genuine) | set(s.impostor) | {np.inf}):
        acc = (np.sum(s.genuine >= t) + np.sum(s.impostor < t)) / total
        if acc > best_acc:
            best_acc, best_t = float(acc), float(t)
    return best_acc, best_t


def random_scores(seed):
    rng = np.random.default_rng(seed)
    n_g = int(rng.integers(1, 40))
    n_i = int(rng.integers(1, 40))
    # small value grid so score ties actually occur
    pool = rng.random(8)
    return ScoreSet(genuine=rng.choice(pool, n_g), impostor=rng.choice(pool, n_i))


class TestGarAtFar:
    def test_hand_example_quarter(self):
        gar, t = gar_at_far(EXAMPLE, 0.25)
        assert gar == 1.0 and t == 0.4

    def test_hand_example_fifth(self):
        # FAR 0.25 is not allowed at 0.2; next feasible threshold is 0.7
        gar, t = gar_at_far(EXAMPLE, 0.2)
        assert gar == 0.75 and t == 0.7

    def test_unreachable_target(self):
        s = ScoreSet(genuine=np.array([0.2]), impostor=np.array([0.9]))
        gar, t = gar_at_far(s, 0.5)
        assert gar == 0.0 and t == np.inf

    def test_target_one_accepts_everything(self):
        gar, t = gar_at_far(EXAMPLE, 1.0)
        assert gar == 1.0 and t == 0.1

    def test_bad_target(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(DomainError):
                gar_at_far(EXAMPLE, bad)

    def test_empty_population(self):
        with pytest.raises(DomainError):
            gar_at_far(ScoreSet(np.array([]), np.array([0.5])), 0.1)

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force(self, seed):
        s = random_scores(seed)
        for target in (0.001, 0.01, 0.1, 0.25, 0.5, 1.0):
            assert gar_at_far(s, target) == brute_force_gar(s, target)


class TestBestAccuracy:
    def test_hand_example(self):
        # 0.875 at both t=0.4 (4 genuine in, 3 impostors out) and t=0.7
        # (3 genuine in, 4 impostors out); tie resolves to the lower threshold
        acc, t = best_accuracy(EXAMPLE)
        assert acc == 0.875 and t == 0.4

    def test_perfect_separation(self):
        s = ScoreSet(genuine=np.array([0.8, 0.9]), impostor=np.array([0.1, 0.2]))
        acc, t = best_accuracy(s)
        assert acc == 1.0 and t == 0.8

    def test_majority_class_lower_bound(self):
        for seed in range(100):
            s = random_scores(seed)
            acc, _ = best_accuracy(s)
            total = s.genuine.size + s.impostor.size
            assert acc >= max(s.genuine.size, s.impostor.size) / total

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force(self, seed):
        assert best_accuracy(random_scores(seed)) == brute_force_best_acc(random_scores(seed))

    def test_accuracy_at_threshold(self):
        assert accuracy_at(EXAMPLE, 0.5) == pytest.approx(6 / 8)
        assert accuracy_at(EXAMPLE, np.inf) == 0.5  # rejects everything


class TestRocCurve:
    def test_starts_at_origin(self):
        points = roc_curve(EXAMPLE).points
        assert points[0] == (np.inf, 0.0, 0.0)
        assert points[-1] == (0.1, 1.0, 1.0)

    def test_thresholds_descend_rates_ascend(self):
        for seed in range(50):
            points = roc_curve(random_scores(seed)).points
            ts = [p[0] for p in points]
            fars = [p[1] for p in points]
            gars = [p[2] for p in points]
            assert ts == sorted(ts, reverse=True)
            assert fars == sorted(fars)
            assert gars == sorted(gars)
            assert fars[-1] == 1.0 and gars[-1] == 1.0

    def test_distinct_thresholds_only(self):
        s = ScoreSet(genuine=np.array([0.5, 0.5, 0.9]), impostor=np.array([0.5, 0.1]))
        points = roc_curve(s).points
        assert [p[0] for p in points] == [np.inf, 0.9, 0.5, 0.1]

    def test_csv_contract(self, tmp_path):
        path = tmp_path / "roc.csv"
        roc_curve(EXAMPLE).write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "threshold,far,gar"
        assert lines[1].startswith("inf,0,0")
        assert len(lines) == 1 + len(roc_curve(EXAMPLE).points)


class TestInvariances:
    @pytest.mark.parametrize("seed", range(50))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed + 1000)
        s = random_scores(seed)
        # strictly increasing map preserves score ordering, hence FAR/GAR values
        a, b = float(rng.uniform(0.5, 3.0)), float(rng.uniform(-1.0, 1.0))
        f = lambda x: a * np.asarray(x) + b
        t = ScoreSet(genuine=f(s.genuine), impostor=f(s.impostor))
        for target in (0.01, 0.1, 0.5):
            assert gar_at_far(s, target)[0] == gar_at_far(t, target)[0]
        assert best_accuracy(s)[0] == best_accuracy(t)[0]
        assert [(p[1], p[2]) for p in roc_curve(s).points] == \
               [(p[1], p[2]) for p in roc_curve(t).points]

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_gar_weakly_increasing_in_target(self, seed):
        s = random_scores(seed)
        gars = [gar_at_far(s, t)[0] for t in (0.001, 0.01, 0.1, 0.5, 1.0)]
        assert gars == sorted(gars)


class TestScorePairs:
    def make_pairs(self, tmp_path, n=3):
        from siamverify.images import write_pgm
        rng = np.random.default_rng(0)
        recs = []
        for i in range(2 * n):
            p = tmp_path / f"im{i}.pgm"
            write_pgm(p, rng.random((1, 32, 32)))
            recs.append(ImageRecord("id01", str(p), "genuine"))
        pairs = [PairRecord(recs[2 * i], recs[2 * i + 1], i % 2, "overall")
                 for i in range(n)]
        return pairs

    def test_head_scores_in_unit_interval(self, tmp_path):
        params = build_network(NetworkSpec.tiny(), seed=0)
        pairs = self.make_pairs(tmp_path, n=4)
        s = score_pairs(params, pairs, mode="head")
        assert s.genuine.size == 2 and s.impostor.size == 2
        all_scores = np.concatenate([s.genuine, s.impostor])
        assert np.all((all_scores > 0) & (all_scores < 1))

    def test_cosine_mode_and_determinism(self, tmp_path):
        params = build_network(NetworkSpec.tiny(), seed=0)
        pairs = self.make_pairs(tmp_path, n=2)
        s1 = score_pairs(params, pairs, mode="cosine")
        s2 = score_pairs(params, pairs, mode="cosine")
        assert np.array_equal(s1.genuine, s2.genuine)
        assert np.all((s1.genuine >= 0) & (s1.genuine <= 1))  # nonneg embeddings

    def test_bad_mode_and_empty(self, tmp_path):
        params = build_network(NetworkSpec.tiny(), seed=0)
        with pytest.raises(ConfigError):
            score_pairs(params, self.make_pairs(tmp_path), mode="euclid")
        with pytest.raises(ConfigError):
            score_pairs(params, [], mode="head")


class TestMetricsReport:
    def test_shape_and_values(self):
        report = metrics_report(EXAMPLE, mode="head")
        assert report["mode"] == "head"
        assert report["n_genuine"] == 4 and report["n_impostor"] == 4
        assert set(report["gar_at"]) == {"0.001", "0.01", "0.1"}
        assert report["best_accuracy"] == 0.875
        assert report["acc_at_0.5"] == 0.75
