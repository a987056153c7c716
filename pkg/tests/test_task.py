import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valueramp.analysis import optimal_values_iterate
from valueramp.task import (
    TaskError,
    TaskModel,
    TaskParseError,
    dump_graph_task,
    escape_failures,
    goals_and_rewards,
    is_connected,
    is_deterministic,
    is_navigation_problem,
    is_reducible,
    is_restartable,
    load_graph_task,
    reducibility,
)

from conftest import chain


def one(n_states, tr, reward=None, starts=(0,)):
    """Single-action task from {state: successors}."""
    return TaskModel.build(n_states, 1, starts, {(s, 0): t for s, t in tr.items()}, {(s, 0): r for s, r in (reward or {}).items()})


def non_reducible_task(escape=False):
    # 1 -a-> 2, 1 -b-> 3; state 2 keeps the agent in {2, 3}; 3 pays 4 and restarts at 1
    tr = {
        (0, 0): [1], (0, 1): [2],
        (1, 0): [1, 2] + ([0] if escape else []), (1, 1): [1, 2],
        (2, 0): [0], (2, 1): [0],
    }
    return TaskModel.build(3, 2, [0], tr, {(2, 0): 4, (2, 1): 4}, ("1", "2", "3"), ("a", "b"))


class TestLoad:
    def test_fluctuation_task(self, fluct, fluct_ids):
        s1, s2, s3, a, b = fluct_ids
        assert (fluct.n_states, fluct.n_actions) == (3, 2)
        assert fluct.tr(s1, a) == (s2, s3)
        assert fluct.reward(s3, a) == fluct.reward(s3, b) == 4
        assert fluct.reward(s1, a) == 0
        assert fluct.start_states == (s1,)
        assert not is_deterministic(fluct)

    def test_degenerate_single_state(self):
        T = load_graph_task("task v1\nstates x\nactions go\nstart x\ntr x go x\n")
        assert (T.n_states, T.n_actions) == (1, 1)
        assert T.tr(0, 0) == (0,) and T.reward(0, 0) == 0

    def test_totality_error_names_missing_pair(self):
        text = "task v1\nstates 1 2\nactions a b\nstart 1\ntr 1 a 2\ntr 1 b 2\ntr 2 a 1\n"
        with pytest.raises(TaskError, match=r"\(2, b\)"):
            load_graph_task(text)

    @pytest.mark.parametrize(
        "body,line",
        [
            ("tr 1 a 1\ntr 1 a 1\n", 6),
            ("tr 1 a 9\n", 5),
            ("tr 1 z 1\n", 5),
            ("tr 1 a 1\nreward 1 a x\n", 6),
            ("tr 1 a 1\nreward 1 a 2\nreward 1 a 3\n", 7),
            ("bogus\n", 5),
        ],
    )
    def test_parse_errors_carry_line_numbers(self, body, line):
        with pytest.raises(TaskParseError) as err:
            load_graph_task("task v1\nstates 1\nactions a\nstart 1\n" + body)
        assert err.value.lineno == line

    def test_bad_header(self):
        with pytest.raises(TaskParseError):
            load_graph_task("task v2\n")

    def test_comments_and_blank_lines(self):
        T = load_graph_task("# lead\ntask v1\n\nstates x # trailing\nactions a\nstart x\ntr x a x\nreward x a 3\n")
        assert T.reward(0, 0) == 3

    def test_round_trip(self, fluct):
        assert load_graph_task(dump_graph_task(fluct)) == fluct


class TestPredicates:
    def test_deterministic(self):
        assert is_deterministic(one(1, {0: [0]}))
        assert is_deterministic(one(2, {0: [1], 1: [1]}))

    def test_connected(self):
        assert is_connected(one(1, {0: [0]}))
        assert not is_connected(one(2, {0: [1], 1: [1]}))
        assert is_connected(one(4, {0: [1], 1: [2], 2: [3], 3: [0]}))

    def test_goals_and_rewards(self, fluct, fluct_ids):
        s1, s2, s3, a, b = fluct_ids
        assert goals_and_rewards(one(2, {0: [1], 1: [0]})) == (frozenset(), frozenset(), None)
        assert goals_and_rewards(fluct) == (frozenset({(s3, a), (s3, b)}), frozenset({s3}), 4)
        mixed = one(3, {0: [1], 1: [2], 2: [0]}, {0: 2, 1: 4})
        assert goals_and_rewards(mixed) == (frozenset({(1, 0)}), frozenset({1}), 4)

    def test_navigation_problem(self):
        ring = {0: [1], 1: [2], 2: [3], 3: [0]}
        assert is_navigation_problem(one(4, ring, {3: 5}), 1)
        assert not is_navigation_problem(one(4, ring, {3: 4}), 1)
        assert not is_navigation_problem(one(4, ring), 1)

    def test_small_reward_task_is_not_navigation(self):
        # rewards 2 and 4 coexist
        tr = {(s, a): [(s + 1) % 4] for s in range(4) for a in range(2)}
        T = TaskModel.build(4, 2, [0], tr, {(2, 0): 2, (3, 0): 4, (3, 1): 4})
        assert not is_navigation_problem(T, 1)


class TestReducibility:
    def test_hand_unrolled_layers(self):
        T = one(3, {2: [0], 1: [2], 0: [1, 2]}, {2: 10})
        rep = reducibility(T)
        assert rep.layers == (frozenset({2}), frozenset({1, 2}), frozenset({0, 1, 2}))
        assert rep.non_reducible == frozenset()
        assert rep.layer_index == {2: 1, 1: 2, 0: 3}

    def test_no_rewards(self):
        rep = reducibility(one(2, {0: [1], 1: [0]}))
        assert rep.reducible == frozenset()
        assert all(not layer for layer in rep.layers)
        assert rep.non_reducible == frozenset({0, 1})

    def test_non_reducible_state(self):
        T = non_reducible_task()
        rep = reducibility(T)
        assert rep.non_reducible == frozenset({T.state_index("2")})
        assert not is_reducible(T)
        assert escape_failures(T, rep) == [(1, 0)]

    def test_escape_option_makes_it_reducible(self):
        assert is_reducible(non_reducible_task(escape=True))

    def test_vacuous_escape_condition(self):
        T = one(2, {0: [1], 1: [0]}, {1: 9})
        assert reducibility(T).non_reducible == frozenset()
        assert is_reducible(T)
        # a start outside the reducible states fails condition 1
        assert not is_reducible(one(2, {0: [0], 1: [1]}, {1: 9}, starts=(0,)))

    def test_rewardless_sink(self):
        T = one(3, {0: [1, 2], 1: [0], 2: [2]}, {1: 9})
        assert 2 in reducibility(T).non_reducible
        assert not is_reducible(T)

    def test_escape_endpoints_exempt(self):
        # non-reducible 2 escapes to start 0 in a single jump
        T = one(3, {0: [1], 1: [0], 2: [0, 2]}, {1: 9}, starts=(0,))
        assert reducibility(T).non_reducible == frozenset({2})
        assert is_reducible(T)

    def test_restartable(self):
        assert is_restartable(one(2, {0: [1], 1: [0]}, {1: 9}))
        assert not is_restartable(one(2, {0: [1], 1: [0, 1]}, {1: 9}))
        assert is_restartable(one(2, {0: [1], 1: [1]}))


task_shapes = st.tuples(st.integers(1, 6), st.integers(1, 3), st.randoms(use_true_random=False))


@settings(max_examples=60, deadline=None)
@given(task_shapes)
def test_layer_properties(shape):
    S, A, rnd = shape
    tr = {(s, a): rnd.sample(range(S), rnd.randint(1, S)) for s in range(S) for a in range(A)}
    rew = {(s, a): rnd.choice([0, 0, 7]) for s in range(S) for a in range(A)}
    T = TaskModel.build(S, A, [0], tr, rew)
    rep = reducibility(T)
    _, goals, _ = goals_and_rewards(T)
    assert rep.layers[0] == goals
    assert all(x <= y for x, y in zip(rep.layers, rep.layers[1:]))
    assert len(rep.layers) <= S
    assert rep.reducible | rep.non_reducible == frozenset(range(S))
    for s in rep.non_reducible:
        for a in range(A):
            assert set(T.tr(s, a)) & rep.non_reducible


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.randoms(use_true_random=False))
def test_dc_navigation_values_positive(n, rnd):
    # a ring plus random chords is connected; M > |S|K makes every state valuable
    tr = {(s, 0): [(s + 1) % n] for s in range(n)}
    tr.update({(s, 1): [rnd.randrange(n)] for s in range(n)})
    T = TaskModel.build(n, 2, [0], tr, {(n - 1, 0): n + 1})
    assert is_connected(T) and is_navigation_problem(T, 1)
    assert min(optimal_values_iterate(T, 1)) > 0


def test_chain_helper_is_dc():
    T = chain(4, 9)
    assert is_deterministic(T) and is_connected(T) and is_restartable(T)
