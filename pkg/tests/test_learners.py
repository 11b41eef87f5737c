import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tecmrl import SynthParams, synth_cohort
from tecmrl.errors import DataError, ValidationError
from tecmrl.learners import (
    BehaviorModel,
    Checkpoint,
    Hyper,
    bcq_mask,
    policy_best,
    policy_worst,
    td_targets,
    train,
    train_deep,
    train_ql,
)
from tecmrl.mdp import TransitionSet, build_transitions

import oracles

SMALL = Hyper(epochs=3, checkpoint_every=1, batch_size=64, sync_every=10, hidden=(16, 16), seed=2)


def _tabular(rows):
    return TransitionSet(
        mode="tabular", kind="sofa",
        s=np.array([t[0] for t in rows]), a=np.array([t[1] for t in rows]),
        r=np.array([t[2] for t in rows], dtype=float), s_next=np.array([t[3] for t in rows]),
        done=np.array([t[4] for t in rows]), died=np.zeros(len(rows), bool), episode=np.zeros(len(rows), int),
    )


@pytest.fixture(scope="module")
def vector_ts():
    return build_transitions(synth_cohort(SynthParams(n_patients=30), seed=1), "vector", "cxsofa")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_ql_matches_value_iteration_on_random_deterministic_mdps(seed):
    rng = np.random.default_rng(seed)
    n_s, n_a = 4, 3
    rows = []
    for s in range(n_s):
        for a in rng.choice(n_a, size=rng.integers(1, n_a + 1), replace=False):
            rows.append((s, int(a), float(rng.normal()), int(rng.integers(n_s)), bool(rng.random() < 0.3)))
    run = train_ql(_tabular(rows), Hyper(gamma=0.5, lr_tabular=0.5, epochs=400, seed=seed))
    # unseen actions stay at 0 in the learner's 5-wide table and take part in the max
    ref = np.array(oracles.value_iteration(rows, n_s, 5, 0.5))
    assert np.abs(run.checkpoints[-1].q.values[:n_s] - ref).max() < 1e-9


def test_zero_rewards_give_zero_values():
    rows = [(s, a, 0.0, (s + 1) % 5, s == 4) for s in range(5) for a in range(5)]
    q = train_ql(_tabular(rows), Hyper(epochs=20)).checkpoints[-1].q
    assert not q.values.any()
    assert q.visits[:5].tolist() == [[20] * 5] * 5
    assert q.unvisited[5:].all()


def test_ql_checkpoints_every_sweep():
    run = train_ql(_tabular([(0, 0, 1.0, 0, True)]), Hyper(epochs=4))
    assert [c.epoch for c in run.checkpoints] == [1, 2, 3, 4]
    # each checkpoint is a snapshot, not a view of the live table
    assert run.checkpoints[0].q.values[0, 0] == pytest.approx(0.1)
    assert run.checkpoints[-1].q.values[0, 0] == pytest.approx(1 - 0.9 ** 4)


def test_train_dispatch_rules(vector_ts):
    tab = _tabular([(0, 0, 1.0, 0, True)])
    with pytest.raises(ValidationError, match="discrete SOFA"):
        train(tab, "ql", kind="cxsofa")
    with pytest.raises(ValidationError):
        train_ql(vector_ts)
    with pytest.raises(ValidationError):
        train_deep(tab, "dqn")
    with pytest.raises(ValidationError):
        train_deep(vector_ts, "sarsa")


def test_hyper_validation_and_round_trip():
    h = Hyper(hidden=(8, 4), cql_alpha=2.0)
    assert Hyper.from_dict(json.loads(json.dumps(h.to_dict()))) == h
    for bad in ({"gamma": 0}, {"bcq_threshold": 1.5}, {"cql_alpha": -1}, {"batch_size": 0}, {"lr": 0}):
        with pytest.raises(ValidationError):
            Hyper(**bad)
    with pytest.raises(ValidationError):
        Hyper.from_dict({"momentum": 0.9})


@pytest.mark.filterwarnings("ignore:BCQ behavior model")
@pytest.mark.parametrize("algo", ["dqn", "ddqn", "bcq", "cql"])
def test_deep_training_is_seeded_and_offline(vector_ts, algo):
    before = vector_ts.digest()
    a = train_deep(vector_ts, algo, SMALL)
    b = train_deep(vector_ts, algo, SMALL)
    assert vector_ts.digest() == before  # the dataset is never touched
    assert a.losses == b.losses and a.targets_digest == b.targets_digest
    assert [c.epoch for c in a.checkpoints] == [1, 2, 3]
    assert all(np.isfinite(a.losses))
    c = train_deep(vector_ts, algo, Hyper(**{**SMALL.to_dict(), "hidden": SMALL.hidden, "seed": 3}))
    assert c.losses != a.losses


def test_checkpoint_cadence_includes_last_epoch(vector_ts):
    run = train_deep(vector_ts, "dqn", Hyper(epochs=5, checkpoint_every=2, hidden=(8,), batch_size=128))
    assert [c.epoch for c in run.checkpoints] == [2, 4, 5]


def test_checkpoint_round_trip(tmp_path, vector_ts):
    ck = train_deep(vector_ts, "cql", SMALL).checkpoints[-1]
    ck.save(tmp_path / "c.json")
    again = Checkpoint.load(tmp_path / "c.json")
    x = np.array([[s.vitals.as_array() for s in ep.steps] for ep in synth_cohort(SynthParams(n_patients=1), 0)][0])
    assert np.array_equal(ck.action_values(x), again.action_values(x))
    assert again.tag == "cxsofa-cql" and again.epoch == 3
    with pytest.raises(FileExistsError):
        ck.save(tmp_path / "c.json")


def test_tabular_checkpoint_round_trip(tmp_path):
    ck = train_ql(_tabular([(3, 1, 2.0, 4, False), (4, 2, 1.0, 4, True)]), Hyper(epochs=2)).checkpoints[-1]
    ck.save(tmp_path / "q.json")
    again = Checkpoint.load(tmp_path / "q.json")
    assert np.array_equal(again.q.values, ck.q.values) and np.array_equal(again.q.visits, ck.q.visits)
    assert again.mode == "tabular"


def test_corrupt_checkpoints(tmp_path):
    ck = train_ql(_tabular([(0, 0, 1.0, 0, True)]), Hyper(epochs=1)).checkpoints[0]
    d = ck.to_dict()
    d["epoch"] = 7
    (tmp_path / "a.json").write_text(json.dumps(d))
    with pytest.raises(DataError, match="checksum"):
        Checkpoint.load(tmp_path / "a.json")
    (tmp_path / "b.json").write_text("{")
    with pytest.raises(DataError):
        Checkpoint.load(tmp_path / "b.json")
    with pytest.raises(DataError):
        Checkpoint.load(tmp_path / "missing.json")


def test_behavior_model_probabilities():
    states = np.array([[0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0.2], [1, 0, 0, 0, 0, 0]], dtype=float)
    bm = BehaviorModel.fit(states, np.array([1, 3, 4]))
    p = bm.probs(np.array([[0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0], [3, 3, 3, 3, 3, 3]], dtype=float))
    assert p[0].tolist() == [0, 0.5, 0, 0.5, 0]
    assert p[1].tolist() == [0, 0, 0, 0, 1]
    assert not p[2].any()


def test_bcq_mask():
    probs = np.array([[0.1, 0.6, 0.3, 0, 0], [0, 0, 0, 0, 0]])
    mask, empty = bcq_mask(probs, 0.3)
    assert mask[0].tolist() == [False, True, True, False, False]
    assert mask[1].all() and empty == 1
    full, _ = bcq_mask(probs, 0.0)
    assert full.all()


def test_td_targets():
    r = np.array([1.0, 2.0])
    done = np.array([0.0, 1.0])
    qt = np.array([[1.0, 5.0, 2.0], [9.0, 9.0, 9.0]])
    qo = np.array([[0.0, 1.0, 3.0], [0.0, 0.0, 0.0]])
    assert td_targets("dqn", r, done, qt, gamma=0.5).tolist() == [3.5, 2.0]
    assert td_targets("ddqn", r, done, qt, qo, gamma=0.5).tolist() == [2.0, 2.0]
    mask = np.array([[True, True, False], [True, True, True]])
    assert td_targets("bcq", r, done, qt, qo, mask, gamma=0.5).tolist() == [3.5, 2.0]
    with pytest.raises(ValidationError):
        td_targets("a2c", r, done, qt)


def test_policy_tie_breaks():
    assert policy_best([1.0, 3.0, 3.0, 0.0, 0.0]) == 1
    assert policy_worst([1.0, 3.0, 3.0, 0.0, 0.0]) == 3
    assert policy_best(np.zeros((2, 5))).tolist() == [0, 0]
    assert policy_worst(np.zeros((2, 5))).tolist() == [0, 0]


def test_bcq_warns_when_next_states_unseen():
    rows = TransitionSet(
        mode="vector", kind="cxsofa", s=np.zeros((2, 6)), a=np.array([0, 1]), r=np.array([1.0, 0.0]),
        s_next=np.full((2, 6), 3.0), done=np.array([False, True]), died=np.zeros(2, bool), episode=np.zeros(2, int),
    )
    with pytest.warns(RuntimeWarning, match="no mass"):
        train_deep(rows, "bcq", Hyper(epochs=1, hidden=(4,)))
