import numpy as np
import pytest

from otxgrad.core import (DualIterate, OTInstance, TransportPlan, entropy_rows,
                          eval_f, eval_F, instance_from_json, instance_to_json,
                          load_instance, marginal_violation, penalized_objective,
                          save_instance, transport_cost)


def random_instance(rng, n, unit_cost=False):
    W = rng.uniform(size=(n, n))
    if unit_cost:
        W = W / W.max()
    r = rng.dirichlet(np.ones(n))
    c = rng.dirichlet(np.ones(n))
    return OTInstance.make(W, r, c)


def test_make_basic():
    inst = OTInstance.make([[0.0, 2.0], [1.0, 0.0]], [0.5, 0.5], [0.25, 0.75])
    assert inst.n == 2
    assert inst.w_inf == 2.0
    assert inst.W.dtype == np.float64
    norm = inst.normalized()
    assert norm.w_inf == 1.0
    assert np.allclose(norm.W, inst.W / 2.0)


def test_make_rejects_bad_inputs():
    r = [0.5, 0.5]
    with pytest.raises(ValueError):
        OTInstance.make([[0.0, -1.0], [1.0, 0.0]], r, r)   # negative cost
    with pytest.raises(ValueError):
        OTInstance.make([[0.0, 1.0], [1.0, 0.0]], [0.6, 0.5], r)  # off simplex
    with pytest.raises(ValueError):
        OTInstance.make([[0.0, 1.0], [1.0, 0.0]], [-0.1, 1.1], r)
    with pytest.raises(ValueError):
        OTInstance.make([[0.0, np.inf], [1.0, 0.0]], r, r)
    with pytest.raises(ValueError):
        OTInstance.make(np.zeros((2, 3)), r, r)


def test_arrays_frozen():
    inst = OTInstance.make(np.ones((2, 2)), [0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        inst.W[0, 0] = 5.0
    with pytest.raises(ValueError):
        inst.r[0] = 1.0


def test_zero_marginal_entries_allowed():
    inst = OTInstance.make(np.ones((3, 3)), [0.0, 0.4, 0.6], [1.0, 0.0, 0.0])
    assert inst.r[0] == 0.0


def test_marginal_violation_hand_case():
    # both row sums 0.6 against targets 0.5: 0.1 + 0.1 per side
    P = np.array([[0.6, 0.0], [0.0, 0.6]])
    rv, cv = marginal_violation(P, [0.5, 0.5], [0.5, 0.5])
    assert rv == pytest.approx(0.2, abs=1e-15)
    assert cv == pytest.approx(0.2, abs=1e-15)


def test_transport_cost():
    inst = OTInstance.make([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5], [0.5, 0.5])
    plan = TransportPlan.from_matrix(np.eye(2) * 0.5, inst.r, inst.c)
    assert transport_cost(inst, plan) == 0.0
    anti = TransportPlan.from_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]), inst.r, inst.c)
    assert transport_cost(inst, anti) == 1.0


def test_penalized_objective_hand_case():
    # all mass of both rows on column 1 while c wants column 0:
    # 0.5*(0.5*1 + 0.5*0) + 1*(|0-1| + |1-0|) = 2.25
    inst = OTInstance.make([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5], [1.0, 0.0])
    rows = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert penalized_objective(rows, inst) == pytest.approx(2.25, abs=1e-15)


def test_penalized_objective_scales_with_w_inf():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 4)
    rows = rng.dirichlet(np.ones(4), size=4)
    base = penalized_objective(rows, inst.normalized())
    scaled = penalized_objective(rows, inst)
    # half-cost scales by w_inf and so does the penalty weight
    assert scaled == pytest.approx(inst.w_inf * base, rel=1e-12)


def test_feasible_plan_attains_plain_cost():
    # at an exactly feasible row decomposition the penalty vanishes and the
    # objective is half the transport cost
    rng = np.random.default_rng(1)
    inst = random_instance(rng, 5, unit_cost=True)
    rows = np.tile(inst.c, (5, 1))          # p_i = c: product coupling
    P = inst.r[:, None] * rows
    plan = TransportPlan.from_matrix(P, inst.r, inst.c)
    assert penalized_objective(rows, inst) == pytest.approx(
        0.5 * transport_cost(inst, plan), abs=1e-14)


def test_vertex_dual_recovers_penalty():
    """Maximizing the bilinear form over each 2-point dual simplex puts all
    weight on the sign of the column residual, recovering the l1 penalty."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 17))
        inst = random_instance(rng, n, unit_cost=True)
        rows = rng.dirichlet(np.ones(n), size=n)
        residual = rows.T @ inst.r - inst.c
        mu = np.where((residual > 0)[:, None], [1.0, 0.0], [0.0, 1.0])
        duals = DualIterate.make(mu)
        assert eval_f(rows, duals, inst) == pytest.approx(
            penalized_objective(rows, inst), abs=1e-10)


def test_eval_f_requires_unit_cost():
    inst = OTInstance.make([[0.0, 2.0], [2.0, 0.0]], [0.5, 0.5], [0.5, 0.5])
    rows = np.full((2, 2), 0.5)
    with pytest.raises(ValueError):
        eval_f(rows, DualIterate.uniform(2), inst)


def test_eval_f_uniform_duals_drop_penalty():
    # mu_+ = mu_- makes the dual term vanish identically
    rng = np.random.default_rng(3)
    inst = random_instance(rng, 6, unit_cost=True)
    rows = rng.dirichlet(np.ones(6), size=6)
    half = 0.5 * float(inst.r @ (inst.W * rows).sum(axis=1))
    assert eval_f(rows, DualIterate.uniform(6), inst) == pytest.approx(half, abs=1e-14)


def test_entropy_rows():
    X = np.array([[1.0, 0.0], [0.5, 0.5]])
    H = entropy_rows(X)
    assert H[0] == 0.0                       # 0*log 0 convention
    assert H[1] == pytest.approx(np.log(2.0), abs=1e-15)


def test_eval_F_hand_composition():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, 3, unit_cost=True)
    rows = rng.dirichlet(np.ones(3), size=3)
    duals = DualIterate.make(rng.dirichlet(np.ones(2), size=3))
    tau_mu = rng.uniform(0.1, 1.0, 3)
    tau_p = rng.uniform(0.1, 1.0, 3)
    expect = (eval_f(rows, duals, inst)
              + tau_mu @ entropy_rows(duals.mu)
              - tau_p @ entropy_rows(rows))
    assert eval_F(rows, duals, inst, tau_mu, tau_p) == pytest.approx(expect, abs=1e-14)
    with pytest.raises(ValueError):
        eval_F(rows, duals, inst, -tau_mu, tau_p)


def test_dual_iterate_validation():
    with pytest.raises(ValueError):
        DualIterate.make(np.array([[0.7, 0.7]]))
    u = DualIterate.uniform(3)
    assert np.all(u.mu == 0.5)


def test_json_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    inst = random_instance(rng, 7)
    back = instance_from_json(instance_to_json(inst))
    assert np.array_equal(back.W, inst.W)
    assert np.array_equal(back.r, inst.r)
    assert np.array_equal(back.c, inst.c)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    disk = load_instance(path)
    assert np.array_equal(disk.W, inst.W)


def test_json_rejects_garbage():
    with pytest.raises(ValueError):
        instance_from_json("[1, 2, 3]")
    with pytest.raises(ValueError):
        instance_from_json('{"n": 2, "W": [0, 1, 1], "r": [0.5, 0.5], "c": [0.5, 0.5]}')
