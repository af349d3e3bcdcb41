import math

import numpy as np
import pytest

from swarmcodesign.fitness import (
    BudgetModel,
    FitnessWeights,
    budget_penalty,
    ema_smooth,
    gated_fitness,
    raw_fitness,
    roi_fitness,
    swarm_cost,
    unit_cost,
)
from swarmcodesign.genome import GenomeConfig, random_genome
from swarmcodesign.seeding import derive_rng
from swarmcodesign.sim2d import TrialStats

W = FitnessWeights()
B = BudgetModel()


def stats(**kwargs):
    return TrialStats(**kwargs)


def test_raw_fitness_floor():
    assert raw_fitness(stats(), W) == 0.1


def test_raw_fitness_delivery_only():
    assert raw_fitness(stats(n_delivered=4, n_picked=4), W) == pytest.approx(404.0)
    assert raw_fitness(stats(n_delivered=4), W) == pytest.approx(400.0)


def test_raw_fitness_collaborative_terms():
    s = stats(n_collab_delivered=1, grip_points_delivered=2, n_collab_picked=1)
    # 2 grip points * 100 + 1 * 50 bonus, plus the pickup unit
    assert raw_fitness(s, W) == pytest.approx(251.0)


def test_activity_penalty_halves_without_retrievals():
    s = stats(n_picked=6, energy_avg_final=1.0)
    expected = (6 * W.w_pickup + 1.0 * W.w_energy) * 0.5
    assert raw_fitness(s, W) == pytest.approx(expected)
    delivered = stats(n_picked=6, energy_avg_final=1.0, n_delivered=1)
    assert raw_fitness(delivered, W) == pytest.approx(6 + 0.03 + 100.0)


def test_raw_fitness_monotone_in_deliveries():
    previous = 0.0
    for n in range(0, 30):
        value = raw_fitness(stats(n_delivered=n), W)
        assert value >= previous
        previous = value


def test_raw_fitness_uses_mean_proximity_and_closeness():
    s = stats(
        n_delivered=1,
        proximity_scores=np.array([10.0, 0.0]),
        closeness_progress=np.array([0.5, -0.5, 1.0]),
    )
    expected = 100.0 + 5.0 * W.w_proximity + np.mean([0.5, -0.5, 1.0]) * W.w_closeness
    assert raw_fitness(s, W) == pytest.approx(expected)


def test_swarm_cost_empty():
    assert swarm_cost([], 0, B) == 0.0


def test_swarm_cost_homogeneous():
    g = random_genome(GenomeConfig(), derive_rng(70))
    fee = BudgetModel(species_fee=500.0)
    cost = swarm_cost([(g, 20)], 1, fee)
    assert cost == pytest.approx(20 * unit_cost(g, fee) + 500.0)


def test_swarm_cost_species_fee_additive():
    rng = derive_rng(71)
    a = random_genome(GenomeConfig(), rng)
    b = random_genome(GenomeConfig(), rng)
    fee = BudgetModel(species_fee=500.0)
    one = swarm_cost([(a, 5)], 1, fee)
    two = swarm_cost([(a, 5), (b, 1)], 2, fee)
    assert two - one == pytest.approx(500.0 + unit_cost(b, fee))


def test_budget_penalty_boundary_and_floor():
    model = BudgetModel(c_budget=1000.0)
    assert budget_penalty(1000.0, model) == 1.0
    assert budget_penalty(999.0, model) == 1.0
    assert budget_penalty(2000.0, model) == pytest.approx(math.exp(-1.0), abs=1e-9)
    assert budget_penalty(1000.0 + 1e7, model) == 0.05


def test_budget_penalty_continuous_and_monotone():
    model = BudgetModel(c_budget=500.0)
    assert budget_penalty(500.0 + 1e-9, model) == pytest.approx(1.0, abs=1e-6)
    previous = 1.0
    for excess in np.linspace(0, 1e5, 300):
        value = budget_penalty(500.0 + excess, model)
        assert value <= previous + 1e-15
        assert 0.05 <= value <= 1.0
        previous = value


def test_gated_fitness_branches():
    assert gated_fitness(200.0, 150.0, 200.0) == 200.0
    assert gated_fitness(100.0, 150.0, 100.0) == pytest.approx(25.0)
    # zero marginal contribution is penalized
    assert gated_fitness(100.0, 100.0, 80.0) == pytest.approx(20.0)


def test_gate_depends_only_on_marginal_sign():
    rng = derive_rng(72)
    for _ in range(200):
        focal = float(rng.uniform(0, 100))
        baseline = float(rng.uniform(0, 100))
        base = float(rng.uniform(0.1, 500))
        scale = float(rng.uniform(0.01, 100))
        plain = gated_fitness(focal, baseline, base)
        scaled = gated_fitness(focal * scale, baseline * scale, base)
        assert plain == scaled


def test_ema_smooth():
    assert ema_smooth(None, 100.0) == 100.0
    assert ema_smooth(100.0, 0.0, alpha=0.6) == pytest.approx(60.0)
    value = 42.0
    for _ in range(10):
        value = ema_smooth(value, 42.0, alpha=0.6)
    assert value == pytest.approx(42.0)


def test_roi_fitness():
    assert roi_fitness(510.0, 5100.0) == pytest.approx(0.1)
    assert math.isfinite(roi_fitness(100.0, 0.0))
    assert roi_fitness(100.0, 0.0) == pytest.approx(100.0)  # epsilon guard
    assert roi_fitness(100.0, 4000.0) == pytest.approx(2 * roi_fitness(100.0, 8000.0))
