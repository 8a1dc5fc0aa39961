import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehsstune.abc import (AbcConfig, FoodSource, campaign_spread, candidate_update, fitness,
                          init_population, onlooker_probabilities, run, write_campaign)
from ehsstune.errors import DomainError, EvaluationError

from oracles import random_search, sphere

BOX = ((-5.0, 5.0), (-5.0, 5.0))


# configuration

@pytest.mark.parametrize("kw", [dict(colony_size=3), dict(colony_size=7), dict(generations=0),
                                dict(limit=0), dict(bounds=((1.0, 0.0),))])
def test_config_invalid(kw):
    with pytest.raises(DomainError):
        AbcConfig(**kw)


def test_config_defaults():
    cfg = AbcConfig(bounds=BOX)
    assert cfg.SN == 25 and cfg.D == 2 and cfg.trial_limit == 50


# init_population

def test_init_within_bounds():
    cfg = AbcConfig(bounds=((0.0, 1.0), (0.0, 1.0)), colony_size=50)
    pop = init_population(cfg, sphere)
    assert len(pop) == 25
    for s in pop:
        assert np.all((s.position >= 0) & (s.position <= 1))
        assert s.trial_count == 0
        assert s.fitness == 1 / (1 + s.objective_value)


def test_init_deterministic():
    cfg = AbcConfig(bounds=BOX, seed=11)
    a = [s.position for s in init_population(cfg)]
    b = [s.position for s in init_population(cfg)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_init_degenerate_bounds():
    cfg = AbcConfig(bounds=((2.0, 2.0), (-1.0, -1.0)), colony_size=10)
    assert all(np.array_equal(s.position, [2.0, -1.0]) for s in init_population(cfg))


# candidate_update

def test_update_equal_coordinates():
    pos = np.array([[0.5, 1.0], [0.5, 3.0]])
    for u in (-1.0, 0.3, 1.0):
        assert np.array_equal(candidate_update(0, 1, 0, pos, u, BOX), pos[0])


def test_update_clamped():
    pos = np.array([[1.0, 0.0], [0.0, 0.0]])
    x = candidate_update(0, 1, 0, pos, 1.0, ((0.0, 1.5), (0.0, 1.0)))
    assert x[0] == 1.5
    x = candidate_update(0, 1, 0, pos, 1.0, ((0.0, 5.0), (0.0, 1.0)))
    assert x[0] == 2.0


def test_update_zero_step():
    pos = np.array([[1.0, 2.0], [0.0, 0.0]])
    assert np.array_equal(candidate_update(0, 1, 1, pos, 0.0, BOX), pos[0])


def test_update_partner_must_differ():
    with pytest.raises(DomainError):
        candidate_update(0, 0, 0, np.zeros((2, 2)), 0.5, BOX)


@given(st.integers(0, 2**32 - 1))
def test_update_only_one_dimension(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-5, 5, (4, 3))
    x = candidate_update(1, 2, 2, pos, rng, ((-5, 5),) * 3)
    assert np.array_equal(x[:2], pos[1, :2])
    assert -5 <= x[2] <= 5


# onlooker probabilities

def test_probabilities_example():
    np.testing.assert_allclose(onlooker_probabilities([1, 1, 2]), [0.25, 0.25, 0.5], rtol=0)


def test_probabilities_single():
    assert list(onlooker_probabilities([0.3])) == [1.0]


def test_probabilities_uniform():
    p = onlooker_probabilities([0.7] * 9)
    np.testing.assert_allclose(p, 1 / 9, rtol=1e-15)


def test_probabilities_sources():
    src = [FoodSource(np.zeros(1), 0.0, 1.0), FoodSource(np.zeros(1), 1.0, 0.5)]
    np.testing.assert_allclose(onlooker_probabilities(src), [2 / 3, 1 / 3])


@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=30), st.floats(1e-3, 1e3))
def test_probabilities_scale_invariant(f, c):
    p = onlooker_probabilities(f)
    assert abs(p.sum() - 1) <= 1e-12 and np.all(p >= 0)
    np.testing.assert_allclose(onlooker_probabilities(np.array(f) * c), p, rtol=1e-12)


def test_fitness():
    assert fitness(0.0) == 1.0 and fitness(3.0) == 0.25


# run

def test_sphere_converges():
    h = run(sphere, AbcConfig(bounds=BOX, seed=0))
    assert h.best < 1e-6
    assert h.generations == 100 and len(h.best_objective) == 101


def test_history_monotone_and_budget():
    cfg = AbcConfig(bounds=BOX, seed=4, cache=False)
    h = run(sphere, cfg)
    assert np.all(np.diff(h.best_objective) <= 0)
    assert h.evaluations == cfg.SN * (1 + 2 * cfg.generations) + h.scouts
    assert h.unique_evaluations == h.evaluations


def test_positions_stay_in_bounds():
    seen = []

    def spy(x):
        seen.append(np.array(x))
        return sphere(x)

    run(spy, AbcConfig(bounds=((-1.0, 2.0), (0.5, 0.75)), seed=2, generations=30,
                       colony_size=10, cache=False))
    seen = np.array(seen)
    assert seen[:, 0].min() >= -1 and seen[:, 0].max() <= 2
    assert seen[:, 1].min() >= 0.5 and seen[:, 1].max() <= 0.75


def test_zero_step_keeps_population():
    cfg = AbcConfig(bounds=BOX, seed=3, generations=5, colony_size=10, limit=math.inf)
    h = run(sphere, cfg, u_override=0.0)
    init = init_population(cfg, sphere)
    for a, b in zip(h.final_sources, init):
        assert np.array_equal(a.position, b.position)
    assert h.scouts == 0


def test_constant_objective_scouts():
    cfg = AbcConfig(bounds=BOX, seed=1, generations=40, colony_size=10)
    h = run(lambda x: 1.0, cfg)
    assert np.all(h.best_objective == 1.0)
    assert np.array_equal(h.best_position[0], h.best_position[-1])
    # each failed visit adds one trial; the first abandonment needs > limit of them
    assert 0 < h.scouts <= cfg.generations


def test_at_most_one_scout_per_generation():
    cfg = AbcConfig(bounds=BOX, seed=1, generations=30, colony_size=10, limit=1)
    h = run(lambda x: 1.0, cfg)
    assert h.scouts <= cfg.generations


def test_deterministic_infinite_limit():
    cfg = AbcConfig(bounds=BOX, seed=9, generations=30, limit=math.inf)
    a, b = run(sphere, cfg), run(sphere, cfg)
    assert np.array_equal(a.best_objective, b.best_objective)
    assert np.array_equal(a.best_position, b.best_position)


def test_parallel_equals_serial():
    cfg = AbcConfig(bounds=BOX, seed=5, generations=20)
    a = run(sphere, cfg)
    with ThreadPoolExecutor(4) as ex:
        b = run(sphere, cfg, executor=ex)
    assert np.array_equal(a.best_objective, b.best_objective)
    assert np.array_equal(a.best_position, b.best_position)


def test_cache_does_not_change_result():
    cfg = AbcConfig(bounds=((0.0, 1.0), (0.0, 1.0)), seed=6, generations=40, colony_size=10)
    a = run(lambda x: float(np.sum(x)), cfg)
    b = run(lambda x: float(np.sum(x)), AbcConfig(**{**cfg.__dict__, "cache": False}))
    assert np.array_equal(a.best_objective, b.best_objective)
    assert a.unique_evaluations <= b.unique_evaluations


def test_positive_u_option():
    h = run(sphere, AbcConfig(bounds=BOX, seed=0, generations=30, positive_u=True))
    assert np.isfinite(h.best)


def test_nan_objective_rejected():
    with pytest.raises(EvaluationError):
        run(lambda x: math.nan, AbcConfig(bounds=BOX, generations=1, colony_size=4))


def test_evaluation_error_propagates():
    def bad(x):
        raise EvaluationError("nope")

    with pytest.raises(EvaluationError):
        run(bad, AbcConfig(bounds=BOX, generations=1, colony_size=4))


def test_beats_random_search():
    cfg = AbcConfig(bounds=BOX, seed=3, cache=False)
    h = run(sphere, cfg)
    assert h.best < random_search(sphere, BOX, h.evaluations, seed=3)


# serialization

def test_history_csv(tmp_path):
    h = run(sphere, AbcConfig(bounds=BOX, seed=0, generations=3, colony_size=6))
    path = tmp_path / "h.csv"
    h.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "generation,best_objective,best_param_1,best_param_2"
    assert len(lines) == 5
    assert float(lines[-1].split(",")[1]) == h.best


def test_campaign_table(tmp_path):
    cfg = AbcConfig(bounds=BOX, generations=5, colony_size=6)
    hs = [run(sphere, AbcConfig(**{**cfg.__dict__, "seed": s})) for s in range(3)]
    rows = write_campaign(hs, tmp_path / "c.csv", tmp_path / "c.txt", names=["x", "y"])
    assert len(rows) == 3
    table = (tmp_path / "c.txt").read_text().splitlines()
    assert table[0].startswith("Experiment No") and table[1].startswith("Objective")
    assert campaign_spread(hs) >= 0
