import tempfile
import unittest
from dataclasses import fields
from pathlib import Path
from typing import Union

import numpy as np
import pytest
from scipy.stats import binomtest, chisquare

from umsli import dtg, shapes
from umsli.classify import synthetic_library
from umsli.dtg import DtgSettings, TemplateMdp, TransitionModel, divergence, hu_moments, train_dtg
from umsli.errors import EmptyMask, EmptySelection, FormatError, InvalidDiscount, InvalidParam, NoSupport

SMALL = DtgSettings(model_steps=300, steps=200, clusters=4, per_cluster=1)


def _point_model(next_state, action: int = 1, bandwidth: Union[float, np.ndarray] = 1.0) -> TransitionModel:
    return TransitionModel(
        np.zeros((1, 2)), np.array([next_state], dtype=float), np.array([action]), np.zeros(1), bandwidth
    )


def _value_iteration(mdp: TemplateMdp, table: np.ndarray, gamma: float) -> np.ndarray:
    q = np.zeros_like(table)
    for _ in range(500):
        best = q.max(axis=1)
        q = np.array(
            [
                [table[s, j] + gamma * best[mdp.next_state(s, a)] for j, a in enumerate(mdp.actions)]
                for s in range(mdp.n_states)
            ]
        )
    return q


class HuMomentTests(unittest.TestCase):
    def setUp(self) -> None:
        self.mask = shapes.render_silhouette("amberjack", 36.0, rotation_deg=20.0, squash=0.8)

    def test_translation_invariant(self) -> None:
        canvas = np.zeros((self.mask.shape[0] + 20, self.mask.shape[1] + 30), dtype=bool)
        canvas[3 : 3 + self.mask.shape[0], 5 : 5 + self.mask.shape[1]] = self.mask
        moved = np.zeros_like(canvas)
        moved[17 : 17 + self.mask.shape[0], 26 : 26 + self.mask.shape[1]] = self.mask
        np.testing.assert_allclose(hu_moments(moved), hu_moments(canvas), atol=1e-9)

    def test_quarter_turn_invariant(self) -> None:
        np.testing.assert_allclose(hu_moments(np.rot90(self.mask)), hu_moments(self.mask), atol=1e-9)

    def test_integer_upscaling_invariant(self) -> None:
        upscaled = np.kron(self.mask, np.ones((3, 3), dtype=bool))
        np.testing.assert_allclose(hu_moments(upscaled), hu_moments(self.mask), atol=1e-6)

    def test_mirror_flips_only_the_last_invariant(self) -> None:
        hu = hu_moments(self.mask)
        mirrored = hu_moments(self.mask[:, ::-1])
        np.testing.assert_allclose(mirrored[:6], hu[:6], atol=1e-9)
        np.testing.assert_allclose(mirrored[6], -hu[6], atol=1e-9)

    def test_empty_mask(self) -> None:
        with self.assertRaises(EmptyMask):
            hu_moments(np.zeros((5, 5), dtype=bool))


class TemplateMdpTests(unittest.TestCase):
    def test_cyclic_transitions(self) -> None:
        mdp = TemplateMdp(np.eye(5))
        self.assertEqual(mdp.next_state(4, 3), 2)
        self.assertEqual(mdp.next_state(0, -1), 4)
        self.assertEqual(mdp.template_indices, (0, 1, 2, 3, 4))

    def test_validation(self) -> None:
        with self.assertRaises(InvalidParam):
            TemplateMdp(np.zeros((1, 7)))
        with self.assertRaises(InvalidParam):
            TemplateMdp(np.eye(3), actions=(0, 1))

    def test_rollout_follows_the_rule(self) -> None:
        states = np.arange(6, dtype=float)[:, None] * np.array([[1.0, 0.0]])
        mdp = TemplateMdp(states, actions=(-2, 1, 3))
        model = dtg.build_transition_model(mdp, steps=200, seed=3)
        self.assertEqual(len(model), 200)
        self.assertFalse(model.rewards.any())
        frm = model.states[:, 0].astype(int)
        to = model.next_states[:, 0].astype(int)
        np.testing.assert_array_equal(to, (frm + model.actions) % 6)
        np.testing.assert_array_equal(frm[1:], to[:-1])

    def test_rollout_visits_states_uniformly(self) -> None:
        states = np.arange(20, dtype=float)[:, None] * np.array([[1.0, 0.0]])
        model = dtg.build_transition_model(TemplateMdp(states), steps=5000, seed=11)
        counts = np.bincount(model.states[:, 0].astype(int), minlength=20)
        self.assertGreater(chisquare(counts).pvalue, 0.01)


class DivergenceTests(unittest.TestCase):
    def test_point_masses_closed_form(self) -> None:
        value = divergence(_point_model([0.0, 0.0]), _point_model([1.0, 0.0]), np.zeros(2), 1)
        self.assertAlmostEqual(value, 0.5, places=12)

    def test_identical_and_symmetric(self) -> None:
        rng = np.random.default_rng(0)
        a = TransitionModel.from_arrays(rng.random((30, 2)), rng.random((30, 2)), rng.integers(1, 3, 30))
        b = TransitionModel.from_arrays(
            rng.random((30, 2)), rng.random((30, 2)) + 0.5, rng.integers(1, 3, 30)
        )
        x = np.array([0.5, 0.5])
        self.assertAlmostEqual(divergence(a, a, x, 1), 0.0, places=9)
        self.assertAlmostEqual(divergence(a, b, x, 2), divergence(b, a, x, 2), places=9)
        self.assertGreater(divergence(a, b, x, 2), 0.0)

    def test_capped_at_maximum(self) -> None:
        value = divergence(_point_model([0.0, 0.0]), _point_model([10.0, 0.0]), np.zeros(2), 1, d_max=3.0)
        self.assertEqual(value, 3.0)

    def test_missing_action(self) -> None:
        own, other = _point_model([0.0, 0.0], action=1), _point_model([1.0, 0.0], action=2)
        self.assertEqual(divergence(own, other, np.zeros(2), 1), dtg.DEFAULT_D_MAX)
        with self.assertRaises(NoSupport):
            divergence(own, other, np.zeros(2), 1, strict=True)

    def test_far_state_has_no_support(self) -> None:
        own, other = _point_model([0.0, 0.0]), _point_model([1.0, 0.0])
        far = np.array([50.0, 0.0])
        self.assertEqual(divergence(own, other, far, 1), dtg.DEFAULT_D_MAX)
        with self.assertRaises(NoSupport):
            divergence(own, other, far, 1, strict=True)
        self.assertAlmostEqual(divergence(own, other, far, 1, support=100.0), 0.5, places=12)

    def test_bandwidth_is_per_dimension(self) -> None:
        rng = np.random.default_rng(1)
        samples = rng.normal(size=(400, 2)) * np.array([1.0, 100.0])
        h = dtg.silverman_bandwidth(samples)
        self.assertEqual(h.shape, (2,))
        self.assertAlmostEqual(float(h[1] / h[0]), 100.0, delta=15.0)
        wide = _point_model([0.0, 1.0], bandwidth=np.array([1.0, 10.0]))
        narrow = _point_model([0.0, 0.0], bandwidth=np.array([1.0, 10.0]))
        self.assertAlmostEqual(divergence(wide, narrow, np.zeros(2), 1), 0.005, places=12)

    def test_table_shape(self) -> None:
        mdp = TemplateMdp(np.eye(3), actions=(1, 2))
        model = dtg.build_transition_model(mdp, 100, seed=1)
        self.assertEqual(dtg.divergence_table(mdp, model, model).shape, (3, 2))


class TrainDtgTests(unittest.TestCase):
    def setUp(self) -> None:
        self.mdp = TemplateMdp(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]]), actions=(1, 2))
        self.table = np.array([[0.1, 0.9], [0.5, 0.2], [1.0, 0.0], [0.3, 0.4]])

    def test_separated_states_match_value_iteration(self) -> None:
        gamma = 0.5
        fn, _ = train_dtg(
            self.mdp, self.table, n_select=2, steps=20000, gamma=gamma, alpha=0.2, epsilon=0.3,
            kernel_sigma=0.01, seed=0,
        )
        learned = np.stack([fn.values(s) for s in self.mdp.states])
        np.testing.assert_allclose(learned, _value_iteration(self.mdp, self.table, gamma), atol=1e-3)
        self.assertAlmostEqual(fn(self.mdp.states[2], 1), learned[2, 0], places=12)

    def test_learned_values_match_value_iteration_for_each_discount(self) -> None:
        spread = float(self.table.max() - self.table.min())
        for gamma in (0.0, 0.5, 0.9):
            with self.subTest(gamma=gamma):
                fn, _ = train_dtg(
                    self.mdp, self.table, n_select=2, steps=20000, gamma=gamma, alpha=0.2, epsilon=0.3,
                    kernel_sigma=0.01, seed=0,
                )
                learned = np.stack([fn.values(s) for s in self.mdp.states])
                expected = _value_iteration(self.mdp, self.table, gamma)
                np.testing.assert_allclose(learned, expected, rtol=0.15, atol=1e-6)
                if gamma == 0.0:
                    self.assertLess(float(np.mean(np.abs(learned - self.table))), 0.1 * spread)

    def test_single_divergent_state_is_visited_most(self) -> None:
        mdp = TemplateMdp(np.eye(5) * 10.0, actions=(1, 2, 3, 4))
        table = np.zeros((5, 4))
        table[2] = 1.0
        for temperature in (None, 0.25):
            with self.subTest(temperature=temperature):
                _, result = train_dtg(
                    mdp, table, n_select=1, steps=3000, gamma=0.9, kernel_sigma=0.01, seed=4,
                    temperature=temperature,
                )
                assert result.visits is not None  # nosec B101
                self.assertEqual(int(np.argmax(result.visits)), 2)
                self.assertEqual(result.indices, (2,))

    def test_identical_models_give_zero_divergence_and_uniform_visits(self) -> None:
        rng = np.random.default_rng(5)
        mdp = TemplateMdp(rng.normal(size=(10, 7)))
        model = dtg.build_transition_model(mdp, 2000, seed=6)
        table = dtg.divergence_table(mdp, model, model)
        np.testing.assert_allclose(table, 0.0, atol=1e-9)
        for temperature in (None, 0.25):
            with self.subTest(temperature=temperature):
                _, result = train_dtg(mdp, table, n_select=5, steps=5000, seed=7, temperature=temperature)
                assert result.visits is not None  # nosec B101
                self.assertGreater(chisquare(result.visits).pvalue, 0.01)

    def test_temperature_must_be_positive(self) -> None:
        with self.assertRaises(InvalidParam):
            train_dtg(self.mdp, self.table, n_select=1, temperature=0.0)

    def test_selection_is_most_visited(self) -> None:
        _, result = train_dtg(self.mdp, self.table, n_select=3, steps=500, seed=2)
        self.assertEqual(len(result.indices), 3)
        self.assertEqual(len(set(result.indices)), 3)
        assert result.visits is not None  # nosec B101
        self.assertEqual(int(result.visits.sum()), 500)
        self.assertEqual(list(result.chosen_visits), sorted(result.chosen_visits, reverse=True))
        self.assertEqual(list(result.chosen_visits), [int(result.visits[i]) for i in result.indices])

    def test_discount_range(self) -> None:
        for gamma in (1.0, -0.1, 1.5):
            with self.subTest(gamma=gamma), self.assertRaises(InvalidDiscount):
                train_dtg(self.mdp, self.table, gamma=gamma)
        train_dtg(self.mdp, self.table, n_select=1, steps=10, gamma=0.0)

    def test_argument_checks(self) -> None:
        with self.assertRaises(InvalidParam):
            train_dtg(self.mdp, self.table[:2])
        with self.assertRaises(InvalidParam):
            train_dtg(self.mdp, self.table, n_select=5)


class BaselineTests(unittest.TestCase):
    def test_kmeans_keeps_least_l1_member_per_cluster(self) -> None:
        rows = [np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]) * (1 - 0.01 * i) for i in range(3)]
        rows += [np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]) * (1 - 0.01 * i) for i in range(3)]
        result = dtg.kmeans_select(np.stack(rows), k=2)
        self.assertEqual(result.indices, (2, 5))
        with self.assertRaises(InvalidParam):
            dtg.kmeans_select(np.stack(rows), k=7)

    def test_kmeans_on_distances_keeps_the_central_member(self) -> None:
        positions = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
        dist = np.abs(positions[:, None] - positions[None, :])
        self.assertEqual(dtg.kmeans_select(dist, k=1).indices, (2,))

    def test_random_is_seeded(self) -> None:
        a = dtg.random_select(20, 5, seed=4)
        self.assertEqual(a.indices, dtg.random_select(20, 5, seed=4).indices)
        self.assertEqual(list(a.indices), sorted(set(a.indices)))
        with self.assertRaises(InvalidParam):
            dtg.random_select(3, 4)

    def test_duplicate_indices_rejected(self) -> None:
        with self.assertRaises(InvalidParam):
            dtg.SelectionResult("random", (1, 1))


class SelectTemplatesTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.library = synthetic_library(per_class=6, seed=0)

    def test_every_method_returns_n_per_class(self) -> None:
        for method in ("dtg", "kmeans", "random"):
            with self.subTest(method=method):
                chosen = dtg.select_templates(self.library, method, 3, seed=1, settings=SMALL)
                self.assertEqual(sorted(chosen), sorted(self.library.classes))
                for result in chosen.values():
                    self.assertEqual(len(result.indices), 3)
                    self.assertTrue(all(0 <= i < 6 for i in result.indices))

    def test_count_comes_from_the_caller(self) -> None:
        self.assertNotIn("n_select", {f.name for f in fields(DtgSettings)})
        chosen = dtg.select_templates(self.library, "dtg", 5, seed=1, settings=SMALL)
        self.assertTrue(all(len(result.indices) == 5 for result in chosen.values()))

    def test_distance_matrix(self) -> None:
        dist = dtg.distance_matrix(self.library, "turtle")
        self.assertEqual(dist.shape, (6, 6))
        np.testing.assert_array_equal(np.diag(dist), 0.0)
        np.testing.assert_allclose(dist, dist.T)
        self.assertTrue(np.all(dist[~np.eye(6, dtype=bool)] > 0))

    def test_unknown_method_and_single_class(self) -> None:
        with self.assertRaises(InvalidParam):
            dtg.select_templates(self.library, "greedy", 3)  # type: ignore[arg-type]
        lonely = synthetic_library(("turtle",), per_class=4)
        with self.assertRaises(InvalidParam):
            dtg.select_templates(lonely, "dtg", 2, settings=SMALL)

    def test_selection_file_round_trip(self) -> None:
        chosen = dtg.select_templates(self.library, "random", 2, seed=5)
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "selection.csv"
            dtg.write_selection(path, self.library, chosen)
            back = dtg.read_selection(path)
        self.assertEqual(back, {name: list(r.indices) for name, r in chosen.items()})

    def test_bad_selection_files(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            empty = Path(td) / "empty.csv"
            empty.write_text(",".join(dtg.SELECTION_COLUMNS) + "\n", encoding="utf-8")
            broken = Path(td) / "broken.csv"
            broken.write_text("class,index\nturtle,first\n", encoding="utf-8")
            with self.assertRaises(EmptySelection):
                dtg.read_selection(empty)
            with self.assertRaises(FormatError):
                dtg.read_selection(broken)
        with self.assertRaises(EmptySelection):
            dtg.evaluate_selection(self.library, {}, [])

    def test_evaluate_selection(self) -> None:
        queries = [(self.library.templates[c][0].mask, c) for c in self.library.classes]
        result = dtg.evaluate_selection(
            self.library, {c: [0, 1] for c in self.library.classes}, queries, use_correntropy=False
        )
        self.assertEqual(int(result.matrix.sum()), 3)


def test_selection_benchmark_single_seed() -> None:
    outcomes = dtg.selection_benchmark((0,), per_class=6, queries_per_class=2, n=3, settings=SMALL)
    assert [o.seed for o in outcomes] == [0]  # nosec B101
    assert set(outcomes[0].accuracy) == {"dtg", "random", "kmeans"}  # nosec B101
    assert all(0.0 <= v <= 1.0 for v in outcomes[0].accuracy.values())  # nosec B101


@pytest.mark.slow
def test_dtg_selection_beats_random_over_ten_seeds() -> None:
    outcomes = dtg.selection_benchmark(tuple(range(10)))
    acc = {m: np.array([o.accuracy[m] for o in outcomes]) for m in ("dtg", "random", "kmeans")}
    assert acc["dtg"].mean() >= acc["random"].mean()  # nosec B101
    wins = int(np.sum(acc["dtg"] > acc["random"]))
    losses = int(np.sum(acc["dtg"] < acc["random"]))
    assert binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue < 0.05  # nosec B101
    assert int(np.sum(acc["dtg"] >= acc["kmeans"])) >= 6  # nosec B101
