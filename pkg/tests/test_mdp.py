import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tecmrl import cxsofa, sofa_discrete
from tecmrl.actions import DOSE_EDGES, bin_action, bin_actions
from tecmrl.errors import ValidationError
from tecmrl.mdp import (
    N_TABULAR_STATES,
    RewardSpec,
    build_transitions,
    encode_state,
    encode_states,
    episode_rewards,
    episode_scores,
    reward,
)

from conftest import cohort_of, make_episode


@pytest.mark.parametrize("dose,action", [
    (0.0, 0), (1e-9, 1), (1.38, 1), (1.3800001, 2), (1.88, 2), (1.89, 3), (3.5, 3), (3.51, 4), (40.0, 4),
])
def test_bin_edges(dose, action):
    assert bin_action(dose) == action
    assert bin_actions([dose]).tolist() == [action]


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 20))
def test_scalar_and_vector_binning_agree(d):
    assert bin_actions([d])[0] == bin_action(d)


@pytest.mark.parametrize("bad", [-0.1, float("nan")])
def test_bad_doses(bad):
    with pytest.raises(ValueError):
        bin_action(bad)
    with pytest.raises(ValueError):
        bin_actions([1.0, bad])


def test_edges_are_increasing():
    assert list(DOSE_EDGES) == sorted(DOSE_EDGES)


def test_reward_rule():
    assert reward(8.0, 5.0, False) == 3.0
    assert reward(5.0, 8.0, False) == -3.0
    assert reward(5.0, 0.0, True) == -15.0
    assert reward(5.0, 0.0, True, RewardSpec(penalty=-100)) == -100


def test_reward_spec_validation():
    with pytest.raises(ValidationError):
        RewardSpec(kind="apache")
    with pytest.raises(ValidationError):
        RewardSpec(penalty=1.0)
    with pytest.raises(ValidationError):
        RewardSpec(gamma=0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 600), min_size=2, max_size=30), st.sampled_from(["sofa", "cxsofa"]))
def test_rewards_telescope_for_survivors(plts, kind):
    ep = make_episode("e", [1] * len(plts), platelets=plts)
    scores = episode_scores(ep, kind)
    r = episode_rewards(ep, kind)
    assert len(r) == len(plts) - 1
    assert r.sum() == pytest.approx(scores[0] - scores[-1], abs=1e-9)


def test_death_penalty_replaces_last_reward():
    ep = make_episode("e", [1, 1, 1], platelets=[300, 90, 40], died=True)
    r = episode_rewards(ep, "sofa")
    assert r.tolist() == [-2.0, -15.0]


def test_scores_match_scalar_scorers():
    ep = make_episode("e", [0, 1, 2], platelets=[300, 90, 15])
    assert episode_scores(ep, "sofa").tolist() == [sofa_discrete(s.vitals) for s in ep.steps]
    assert episode_scores(ep, "cxsofa").tolist() == [cxsofa(s.vitals) for s in ep.steps]


def test_state_encodings(healthy):
    assert encode_state(healthy, "tabular", "sofa") == 0
    assert encode_state(healthy.replace(platelets=10), "tabular", "cxsofa") == 4
    vec = encode_state(healthy, "vector", "cxsofa")
    assert vec.shape == (6,) and vec[3] == 2.0
    assert encode_state(healthy, "vector", "sofa").tolist() == [0.0] * 6
    worst = healthy.replace(pf_ratio=50, pf_ratio_vent=50, platelets=5, bilirubin=300, dopamine=20, gcs=3,
                            creatinine=600, urine_output=50)
    assert encode_state(worst, "tabular", "sofa") == N_TABULAR_STATES - 1
    with pytest.raises(ValidationError):
        encode_states(healthy.as_array(), "graph", "sofa")


def test_transitions_layout():
    a = make_episode("a", [0, 1, 2, 3], platelets=[300, 120, 80, 40], died=True)
    b = make_episode("b", [4, 4], platelets=[100, 200])
    ts = build_transitions(cohort_of(a, b), "tabular", "sofa")
    assert len(ts) == 4
    assert ts.a.tolist() == [0, 1, 2, 4]
    assert ts.s.tolist() == [0, 1, 2, 1]
    assert ts.s_next.tolist() == [1, 2, 3, 0]
    assert ts.done.tolist() == [False, False, True, True]
    assert ts.died.tolist() == [False, False, True, False]
    assert ts.r.tolist() == [-1.0, -1.0, -15.0, 1.0]
    assert ts.episode.tolist() == [0, 0, 0, 1]
    vec = build_transitions(cohort_of(a, b), "vector", "cxsofa")
    assert vec.s.shape == (4, 6)
    with pytest.raises(ValidationError):
        build_transitions(cohort_of(), "tabular", "sofa")


def test_digest_and_jsonl(tmp_path, small_cohort):
    t1 = build_transitions(small_cohort, "vector", "cxsofa")
    t2 = build_transitions(small_cohort, "vector", "cxsofa")
    assert t1.digest() == t2.digest()
    assert t1.digest() != build_transitions(small_cohort, "vector", "sofa").digest()
    t1.to_jsonl(tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == len(t1)
    row = json.loads(lines[0])
    assert len(row["s"]) == 6 and row["a"] == int(t1.a[0])
    assert np.isclose(row["r"], t1.r[0])
