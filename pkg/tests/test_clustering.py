import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taskshift.clustering import (
    ExposureCluster,
    _label_request,
    build_taxonomy,
    cluster_roles,
    fit_pca,
    kmeans,
    lemmatize,
    normalize_text,
)
from taskshift.errors import DataError, UsageError
from taskshift.gateway import BatchManager, MockProvider, RetryPolicy

REFERENCE_CENTROIDS = [(0.381, 0.118), (0.483, 0.158), (0.586, 0.162), (0.697, 0.136)]


def brute_force_min_inertia(points, k):
    """Exhaustive minimizer over all assignments with k non-empty clusters."""
    matrix = np.asarray(points, dtype=float)
    best = np.inf
    best_assignment = None
    for assignment in itertools.product(range(k), repeat=len(points)):
        if len(set(assignment)) != k:
            continue
        labels = np.asarray(assignment)
        inertia = 0.0
        for cluster in range(k):
            members = matrix[labels == cluster]
            inertia += float(((members - members.mean(axis=0)) ** 2).sum())
        if inertia < best - 1e-12:
            best = inertia
            best_assignment = labels
    return best, best_assignment


class TestKMeans:
    def test_k_one_centroid_is_mean(self):
        points = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])
        result = kmeans(points, k=1, seed=0)
        assert np.allclose(result.centroids[0], points.mean(axis=0))
        assert result.assignments.tolist() == [0, 0, 0]

    def test_k_equals_n_zero_inertia(self):
        points = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
        result = kmeans(points, k=3, seed=1)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)
        assert sorted(result.assignments.tolist()) == [0, 1, 2]

    def test_two_blobs_recovered(self):
        rng = np.random.default_rng(5)
        points = np.vstack(
            [rng.normal((0, 0), 0.4, (25, 2)), rng.normal((10, 10), 0.4, (25, 2))]
        )
        result = kmeans(points, k=2, seed=3)
        first_half = set(result.assignments[:25].tolist())
        second_half = set(result.assignments[25:].tolist())
        assert len(first_half) == 1 and len(second_half) == 1 and first_half != second_half

    @pytest.mark.parametrize("n,k,seed", [(8, 2, 0), (9, 3, 1), (12, 2, 2), (10, 3, 3)])
    def test_matches_exhaustive_partition_oracle(self, n, k, seed):
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-5, 5, (k, 2)) * 3
        points = np.vstack([rng.normal(center, 0.3, (n // k + 1, 2)) for center in centers])[:n]
        best, _ = brute_force_min_inertia(points, k)
        result = kmeans(points, k=k, seed=seed)
        assert result.inertia == pytest.approx(best, abs=1e-9)

    def test_terminal_assignment_is_fixpoint(self):
        rng = np.random.default_rng(9)
        points = rng.normal(size=(40, 3))
        result = kmeans(points, k=4, seed=2)
        distances = ((points[:, None, :] - result.centroids[None, :, :]) ** 2).sum(axis=2)
        assert (distances.argmin(axis=1) == result.assignments).all()

    def test_inertia_non_increasing_across_iterations(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(60, 4))
        inertias = [
            kmeans(points, k=5, seed=7, n_init=1, max_iter=limit).inertia
            for limit in range(1, 8)
        ]
        for earlier, later in zip(inertias, inertias[1:]):
            assert later <= earlier + 1e-9

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(30, 2))
        first = kmeans(points, k=3, seed=11)
        second = kmeans(points, k=3, seed=11)
        assert (first.assignments == second.assignments).all()
        assert np.array_equal(first.centroids, second.centroids)

    def test_invalid_inputs(self):
        with pytest.raises(UsageError):
            kmeans(np.empty((0, 2)), k=1, seed=0)
        with pytest.raises(UsageError):
            kmeans(np.ones((3, 2)), k=4, seed=0)


def synthetic_roles(per_cluster=200, noise=0.01, seed=13):
    rng = np.random.default_rng(seed)
    points, truth = [], []
    for index, (mean, std) in enumerate(REFERENCE_CENTROIDS):
        for _ in range(per_cluster):
            points.append((mean + rng.normal(0, noise), std + rng.normal(0, noise)))
            truth.append(index)
    return points, truth


class TestClusterRoles:
    def test_recovers_seeded_clusters_with_ascending_names(self):
        points, truth = synthetic_roles()
        clusters = cluster_roles(points, seed=5)
        names = [c.value for c in ExposureCluster]
        agreement = sum(
            1 for label, t in zip(clusters.labels, truth) if label.value == names[t]
        ) / len(truth)
        assert agreement >= 0.99
        ordered = sorted(clusters.centroids.items(), key=lambda kv: kv[1][0])
        assert [name.value for name, _ in ordered] == ["Low", "Augmentation", "Adaptation", "Automation"]

    def test_all_identical_roles_error(self):
        with pytest.raises(DataError, match="degenerate"):
            cluster_roles([(0.5, 0.1)] * 20, seed=0)

    def test_too_few_roles_error(self):
        with pytest.raises(DataError):
            cluster_roles([(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)], seed=0)

    def test_order_invariance_of_named_partition(self):
        points, _ = synthetic_roles(per_cluster=50)
        clusters = cluster_roles(points, seed=5)
        permutation = np.random.default_rng(3).permutation(len(points))
        shuffled = [points[i] for i in permutation]
        clusters_shuffled = cluster_roles(shuffled, seed=5)
        for original_index, shuffled_position in enumerate(permutation):
            assert clusters.labels[shuffled_position] == clusters_shuffled.labels[original_index]


class TestNormalizeText:
    def test_worked_example(self):
        assert normalize_text("Managing 3 visa applications!") == "manage visa application"

    def test_empty_input(self):
        assert normalize_text("") == ""
        assert normalize_text("37 2019 !!!") == ""

    def test_stopwords_removed(self):
        assert normalize_text("the and of report") == "report"

    @pytest.mark.parametrize(
        "word,expected",
        [
            ("managing", "manage"),
            ("applications", "application"),
            ("processes", "process"),
            ("running", "run"),
            ("meetings", "meet"),
            ("studies", "study"),
            ("analysis", "analysis"),
            ("developing", "develop"),
            ("driving", "drive"),
            ("reviewed", "review"),
            ("passes", "pass"),
            ("status", "status"),
        ],
    )
    def test_lemmatizer_rule_table(self, word, expected):
        assert lemmatize(word) == expected

    @given(st.text(max_size=120))
    def test_idempotent(self, text):
        once = normalize_text(text)
        assert normalize_text(once) == once


class TestFitPca:
    def test_exact_two_dim_subspace_zero_reconstruction(self):
        rng = np.random.default_rng(2)
        basis = rng.normal(size=(2, 10))
        data = rng.normal(size=(50, 2)) @ basis + rng.normal(size=10)
        model = fit_pca(data, out_dim=2)
        reconstructed = model.transform(data) @ model.components + model.mean
        assert float(((data - reconstructed) ** 2).sum()) <= 1e-9

    def test_matches_covariance_eigenvalue_oracle(self):
        rng = np.random.default_rng(8)
        data = rng.normal(size=(40, 6)) * np.array([5.0, 3.0, 2.0, 1.0, 0.5, 0.1])
        model = fit_pca(data, out_dim=4)
        centered = data - data.mean(axis=0)
        eigenvalues = np.sort(np.linalg.eigvalsh(centered.T @ centered / data.shape[0]))[::-1]
        assert np.allclose(model.explained_variance, eigenvalues[:4], atol=1e-9)
        discarded = eigenvalues[4:].sum() * data.shape[0]
        projected = model.transform(data)
        reconstructed = projected @ model.components + model.mean
        residual = float(((data - reconstructed) ** 2).sum())
        assert residual == pytest.approx(discarded, abs=1e-6)

    def test_isotropic_sample_has_flat_spectrum(self):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(4000, 5))
        model = fit_pca(data, out_dim=5)
        ratios = model.explained_variance_ratio
        assert ratios.max() / ratios.min() < 1.2

    def test_output_dimension(self):
        rng = np.random.default_rng(4)
        data = rng.normal(size=(60, 768))
        model = fit_pca(data, out_dim=25)
        assert model.transform(data).shape == (60, 25)
        assert np.allclose(model.components @ model.components.T, np.eye(25), atol=1e-6)

    def test_rank_deficiency_reports_achieved_rank(self):
        data = np.tile(np.arange(6.0), (20, 1)) * np.arange(1.0, 21.0)[:, None]
        with pytest.raises(DataError, match="rank 1"):
            fit_pca(data, out_dim=3)

    def test_round_trip_serialization(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(30, 8))
        model = fit_pca(data, out_dim=3)
        from taskshift.clustering import ProjectionModel

        clone = ProjectionModel.from_dict(json.loads(json.dumps(model.to_dict())))
        assert np.allclose(clone.transform(data), model.transform(data))


@dataclass
class GroupedEmbedProvider:
    """Embeddings preset per text; completions via the mock synthesizer."""

    vectors: dict[str, np.ndarray]
    inner: MockProvider = field(default_factory=MockProvider)

    def complete(self, request):
        return self.inner.complete(request)

    def embed(self, texts):
        return np.vstack([self.vectors[text] for text in texts])


def grouped_tasks(n_groups=10, per_group=3, dim=32, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_groups, dim)) * 10
    texts, vectors, truth = [], {}, []
    for group in range(n_groups):
        for member in range(per_group):
            text = f"group {group} duty {member}"
            texts.append(text)
            vectors[text] = centers[group] + rng.normal(0, 0.05, dim)
            truth.append(group)
    return texts, vectors, truth


class TestBuildTaxonomy:
    def test_recovers_ten_groups_of_three(self):
        texts, vectors, truth = grouped_tasks()
        manager = BatchManager(GroupedEmbedProvider(vectors))
        taxonomy, _ = build_taxonomy(texts, manager, seed=3)
        by_category: dict[int, set[int]] = {}
        for index, (category, _) in enumerate(taxonomy.assignments):
            by_category.setdefault(category, set()).add(truth[index])
        assert len(by_category) == 10
        assert all(len(groups) == 1 for groups in by_category.values())

    def test_assignment_total_and_stable(self):
        texts, vectors, _ = grouped_tasks()
        manager = BatchManager(GroupedEmbedProvider(vectors))
        first, _ = build_taxonomy(texts, manager, seed=3)
        second, _ = build_taxonomy(texts, manager, seed=3)
        assert first.assignments == second.assignments
        assert len(first.assignments) == len(texts)
        assert all(label for label in first.category_labels.values())

    def test_fixture_label_attached_verbatim(self):
        texts = ["records filing duty", "records scanning duty", "records archive duty"]
        request = _label_request("label:cat:0", texts, np.array([0, 1, 2]), seed=3, cap=200)
        provider = MockProvider(fixtures={request.fingerprint(): {"label": "Records Management"}})
        manager = BatchManager(provider)
        taxonomy, _ = build_taxonomy(
            texts, manager, seed=3, n_categories=1, n_subclusters=1, pca_dim=2
        )
        assert taxonomy.category_labels[0] == "Records Management"

    def test_label_failure_uses_placeholder(self):
        texts, vectors, _ = grouped_tasks()
        provider = GroupedEmbedProvider(vectors, inner=MockProvider(strict=True))
        manager = BatchManager(provider, policy=RetryPolicy(backoff_base=0.0))
        taxonomy, _ = build_taxonomy(texts, manager, seed=3)
        assert taxonomy.category_labels[0] == "cluster-0"
        assert taxonomy.label_failures

    def test_sampling_caps_at_population(self):
        texts = [f"duty {i}" for i in range(150)]
        request = _label_request("label:cat:0", texts, np.arange(150), seed=1, cap=200)
        listed = request.user_prompt.count("\n")
        assert listed >= 150  # all 150 sampled when below the cap

    def test_sampling_respects_cap(self):
        texts = [f"duty {i}" for i in range(300)]
        request = _label_request("label:cat:0", texts, np.arange(300), seed=1, cap=200)
        assert request.user_prompt.count(". duty") == 200

    def test_too_few_tasks_rejected(self, manager):
        with pytest.raises(UsageError):
            build_taxonomy(["a", "b"], manager, seed=0)

    def test_empty_normalized_text_rejected(self, manager):
        with pytest.raises(UsageError):
            build_taxonomy([""] * 40, manager, seed=0)
