import pytest
from hypothesis import given
from hypothesis import strategies as st

from valueramp.core import (
    DomainError,
    ValueFunction,
    clamp,
    delta,
    preferred_actions,
    state_value,
    update,
    update_in_place,
)


def vf(*row):
    return ValueFunction.from_rows([list(row)])


class TestStateValue:
    def test_all_zero(self):
        assert state_value(vf(0, 0), 0) == 0

    def test_both_actions_at_three(self):
        assert state_value(vf(3, 3), 0) == 3

    def test_direct_max(self):
        assert state_value(vf(1, 7, 4), 0) == 7


class TestPreferredActions:
    def test_unique_max(self):
        assert preferred_actions(vf(2, 5), 0) == [1]

    def test_full_tie(self):
        assert preferred_actions(vf(0, 0), 0) == [0, 1]

    def test_partial_tie(self):
        assert preferred_actions(vf(3, 3, 1), 0) == [0, 1]


class TestDelta:
    def test_reward_four(self):
        assert delta(1, 0, 0, 4) == 3

    def test_no_signal(self):
        assert delta(1, 0, 0, 0) == -1

    def test_hand_evaluation(self):
        assert delta(2, 5, 9, 0) == 2

    def test_rejects_zero_step(self):
        with pytest.raises(ValueError):
            delta(0, 0, 0, 0)


class TestUpdate:
    def test_rewarding_pair_from_zero(self):
        V = ValueFunction.zeros(4, 2)
        W = update(V, 3, 0, 1, 4, 1)
        assert W[3, 0] == 3
        assert sum(W.values) == 3
        assert sum(V.values) == 0  # input untouched

    def test_clamp_floor(self):
        V = ValueFunction.zeros(2, 2)
        assert update(V, 0, 1, 1, 0, 1) == V

    def test_hand_evaluation(self):
        # V(0,a)=2, V(0)=5 via (0,b), V(1)=9, r=0, K=2 -> 2 + (9 - 2 - 5) = 4
        V = ValueFunction.from_rows([[2, 5], [9, 0]])
        assert update(V, 0, 0, 1, 0, 2)[0, 0] == 4

    def test_uses_old_state_values_on_self_loop(self):
        # s' == s: the successor value is read before the write
        V = ValueFunction.from_rows([[4, 1]])
        old, new = update_in_place(V, 0, 1, 0, 0, 1)
        assert (old, new) == (1, clamp(1 + 4 - 1 - 4))

    def test_domain_errors(self):
        V = ValueFunction.zeros(2, 2)
        for args in [(2, 0, 0), (0, 2, 0), (0, 0, 2), (-1, 0, 0)]:
            with pytest.raises(DomainError):
                update(V, *args, 0, 1)


class TestValueFunction:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ValueFunction(1, 2, [0, -1])

    def test_rejects_ragged_rows(self):
        with pytest.raises(ValueError):
            ValueFunction.from_rows([[1, 2], [3]])

    def test_copy_is_independent(self):
        V = vf(1, 2)
        W = V.copy()
        W[0, 0] = 9
        assert V[0, 0] == 1 and W != V

    def test_rows_and_state_values(self):
        V = ValueFunction.from_rows([[1, 5], [0, 0], [7, 2]])
        assert V.row(2) == [7, 2]
        assert V.state_values() == [5, 0, 7]


ints = st.integers(min_value=-10**6, max_value=10**6)


@given(ints, ints)
def test_clamp_commutes_with_max(x, y):
    assert max(clamp(x), clamp(y)) == clamp(max(x, y))


@given(
    st.lists(st.integers(0, 50), min_size=6, max_size=6),
    st.integers(0, 2),
    st.integers(0, 1),
    st.integers(0, 2),
    st.integers(0, 60),
    st.integers(1, 5),
)
def test_update_is_local_and_natural(vals, s, a, s_next, r, K):
    V = ValueFunction(3, 2, vals)
    W = update(V, s, a, s_next, r, K)
    diff = [i for i in range(6) if V.values[i] != W.values[i]]
    assert diff in ([], [s * 2 + a])
    assert min(W.values) >= 0
    assert W[s, a] == clamp(V[s, a] + delta(K, state_value(V, s), state_value(V, s_next), r))
