"""The Value-Ramp learning rule over natural-number value functions.

Values are stored densely: entry ``s * n_actions + a`` holds V(s, a).
"""

from __future__ import annotations

from typing import Iterable, List, Sequence, Tuple

# Rewards and values are validated against this cap so arithmetic stays well
# inside a signed 64-bit range.
VALUE_CAP = 2**32 - 1


class DomainError(ValueError):
    """A state or action id lies outside the value function's domain."""


def clamp(x: int) -> int:
    return x if x > 0 else 0


def delta(K: int, v: int, v_next: int, r: int) -> int:
    """Proposed value change ``max(v_next, r) - K - v``; may be negative."""
    if K < 1:
        raise ValueError(f"step size must be >= 1, got {K}")
    return max(v_next, r) - K - v


class ValueFunction:
    """Dense mapping (state, action) -> natural number."""

    __slots__ = ("n_states", "n_actions", "values")

    def __init__(self, n_states: int, n_actions: int, values: Iterable[int] | None = None):
        if n_states < 1 or n_actions < 1:
            raise ValueError("value function needs at least one state and one action")
        self.n_states = n_states
        self.n_actions = n_actions
        if values is None:
            self.values: List[int] = [0] * (n_states * n_actions)
        else:
            self.values = [int(v) for v in values]
            if len(self.values) != n_states * n_actions:
                raise ValueError(
                    f"expected {n_states * n_actions} entries, got {len(self.values)}"
                )
            if any(v < 0 for v in self.values):
                raise ValueError("value functions hold naturals only")

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "ValueFunction":
        return cls(n_states, n_actions)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "ValueFunction":
        n_actions = len(rows[0])
        if any(len(r) != n_actions for r in rows):
            raise ValueError("ragged value rows")
        return cls(len(rows), n_actions, (v for r in rows for v in r))

    def _check(self, s: int, a: int | None = None) -> None:
        if not 0 <= s < self.n_states:
            raise DomainError(f"state {s} out of range 0..{self.n_states - 1}")
        if a is not None and not 0 <= a < self.n_actions:
            raise DomainError(f"action {a} out of range 0..{self.n_actions - 1}")

    def __getitem__(self, key: Tuple[int, int]) -> int:
        s, a = key
        self._check(s, a)
        return self.values[s * self.n_actions + a]

    def __setitem__(self, key: Tuple[int, int], value: int) -> None:
        s, a = key
        self._check(s, a)
        if value < 0:
            raise ValueError("value functions hold naturals only")
        self.values[s * self.n_actions + a] = value

    def row(self, s: int) -> List[int]:
        self._check(s)
        base = s * self.n_actions
        return self.values[base : base + self.n_actions]

    def rows(self) -> List[List[int]]:
        return [self.row(s) for s in range(self.n_states)]

    def state_values(self) -> List[int]:
        n = self.n_actions
        vals = self.values
        return [max(vals[i : i + n]) for i in range(0, len(vals), n)]

    def copy(self) -> "ValueFunction":
        out = ValueFunction.__new__(ValueFunction)
        out.n_states = self.n_states
        out.n_actions = self.n_actions
        out.values = list(self.values)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValueFunction):
            return NotImplemented
        return (
            self.n_states == other.n_states
            and self.n_actions == other.n_actions
            and self.values == other.values
        )

    def __repr__(self) -> str:
        return f"ValueFunction({self.n_states}x{self.n_actions}, {self.rows()!r})"


def state_value(V: ValueFunction, s: int) -> int:
    """Highest action value at ``s``."""
    V._check(s)
    n = V.n_actions
    return max(V.values[s * n : s * n + n])


def preferred_actions(V: ValueFunction, s: int) -> List[int]:
    """Actions attaining the state value at ``s``, in index order. Never empty."""
    row = V.row(s)
    top = max(row)
    return [a for a, v in enumerate(row) if v == top]


def update_in_place(V: ValueFunction, s: int, a: int, s_next: int, r: int, K: int) -> Tuple[int, int]:
    """Apply one transition to ``V`` and return ``(old, new)`` for the pair ``(s, a)``.

    The change is computed from the state values of ``s`` and ``s_next`` under
    the value function *before* the write.
    """
    V._check(s, a)
    V._check(s_next)
    if K < 1:
        raise ValueError(f"step size must be >= 1, got {K}")
    n = V.n_actions
    vals = V.values
    v_s = max(vals[s * n : s * n + n])
    v_next = max(vals[s_next * n : s_next * n + n])
    idx = s * n + a
    old = vals[idx]
    new = old + max(v_next, r) - K - v_s
    if new < 0:
        new = 0
    vals[idx] = new
    return old, new


def update(V: ValueFunction, s: int, a: int, s_next: int, r: int, K: int) -> ValueFunction:
    """Return the value function after the transition ``s --a--> s_next`` with reward ``r``."""
    out = V.copy()
    update_in_place(out, s, a, s_next, r, K)
    return out
