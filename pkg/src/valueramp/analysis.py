"""Oracles and checkers: path values, optimal values, validity, sprints, strategies."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from valueramp.core import ValueFunction, clamp
from valueramp.task import (
    Pair,
    TaskModel,
    adjacency,
    goals_and_rewards,
    is_deterministic,
    is_navigation_problem,
)

ActionPath = Sequence[Pair]


class UnsupportedTaskError(ValueError):
    """The check is only defined for a narrower class of tasks."""


class InfeasiblePathError(ValueError):
    pass


def _require_deterministic(T: TaskModel) -> None:
    if not is_deterministic(T):
        raise UnsupportedTaskError("defined for deterministic tasks only")


def _next_state(T: TaskModel, s: int, a: int) -> int:
    return T.successors[s * T.n_actions + a][0]


def check_path(T: TaskModel, p: ActionPath) -> None:
    if not p:
        raise InfeasiblePathError("action paths are nonempty")
    for (s, a), (t, _) in zip(p, p[1:]):
        if t not in T.tr(s, a):
            raise InfeasiblePathError(f"state {t} is not a successor of ({s}, {a})")


def path_value(T: TaskModel, p: ActionPath, K: int) -> int:
    """max over positions i (1-based) of clamp(R(s_i, a_i) - i*K)."""
    check_path(T, p)
    return max(clamp(T.reward(s, a) - i * K) for i, (s, a) in enumerate(p, start=1))


def has_state_cycle(p: ActionPath) -> bool:
    states = [s for s, _ in p]
    return len(set(states)) != len(states)


def decycle(T: TaskModel, p: ActionPath, K: int = 1) -> List[Pair]:
    """Cycle-free action-path from the same state whose value is at least that of ``p``.

    Cut after the first position attaining the path value, then collapse every
    cycle (s, a) ... (s, a') into the single pair (s, a').
    """
    check_path(T, p)
    p = list(p)
    if not has_state_cycle(p):
        return p
    contrib = [clamp(T.reward(s, a) - i * K) for i, (s, a) in enumerate(p, start=1)]
    cut = contrib.index(max(contrib))
    out: List[Pair] = []
    where: Dict[int, int] = {}
    for s, a in p[: cut + 1]:
        if s in where:
            k = where[s]
            for dropped, _ in out[k:]:
                del where[dropped]
            del out[k:]
        where[s] = len(out)
        out.append((s, a))
    return out


# --- optimal values ------------------------------------------------------------


def optimal_values_enumerate(T: TaskModel, K: int) -> List[int]:
    """Exhaustive oracle: best path value over all state-simple action-paths.

    Exponential; intended for |S| <= 8 or so. Deliberately unmemoized.
    """
    _require_deterministic(T)
    A = T.n_actions
    result = []
    for start in range(T.n_states):
        best = 0
        # stack of (state, depth, visited states)
        stack = [(start, 1, frozenset([start]))]
        while stack:
            s, depth, visited = stack.pop()
            for a in range(A):
                v = T.reward(s, a) - depth * K
                if v > best:
                    best = v
                t = _next_state(T, s, a)
                if t not in visited:
                    stack.append((t, depth + 1, visited | {t}))
        result.append(best)
    return result


def optimal_values_iterate(T: TaskModel, K: int) -> List[int]:
    """|S| rounds of v(s) <- max_a max(clamp(R(s,a)-K), clamp(v(s')-K)) from v = 0."""
    _require_deterministic(T)
    v = [0] * T.n_states
    for _ in range(T.n_states):
        v = [
            max(
                max(clamp(T.reward(s, a) - K), clamp(v[_next_state(T, s, a)] - K))
                for a in range(T.n_actions)
            )
            for s in range(T.n_states)
        ]
    return v


def bfs_distances(adj: Sequence[Set[int]], source: int) -> Dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def optimal_values_bfs(T: TaskModel, K: int) -> List[int]:
    """Distance oracle: v*(s) = max over pairs (x, a) of clamp(R(x,a) - (d(s,x)+1)K).

    A shortest walk to x is state-simple, so appending (x, a) gives a cycle-free
    path; no path reaches (x, a) sooner.
    """
    _require_deterministic(T)
    adj = adjacency(T)
    out = []
    for s in range(T.n_states):
        dist = bfs_distances(adj, s)
        best = 0
        for x, d in dist.items():
            for a in range(T.n_actions):
                best = max(best, clamp(T.reward(x, a) - (d + 1) * K))
        out.append(best)
    return out


def optimal_values(T: TaskModel, K: int, method: str = "iterate") -> List[int]:
    methods = {
        "iterate": optimal_values_iterate,
        "enumerate": optimal_values_enumerate,
        "bfs": optimal_values_bfs,
    }
    if method not in methods:
        raise ValueError(f"unknown method {method!r}")
    return methods[method](T, K)


def optimal_value(T: TaskModel, s: int, K: int) -> int:
    return optimal_values_iterate(T, K)[s]


# --- validity, consistency, violations ------------------------------------------


def expectation(V: ValueFunction, T: TaskModel, s: int, a: int, K: int, sv: Sequence[int]) -> int:
    """clamp(max(V(s'), R(s,a)) - K) for the unique successor s'."""
    return clamp(max(sv[_next_state(T, s, a)], T.reward(s, a)) - K)


def violations(V: ValueFunction, T: TaskModel, K: int) -> Tuple[FrozenSet[Pair], int]:
    """Pairs valued above their one-step expectation, and the largest such value."""
    _require_deterministic(T)
    sv = V.state_values()
    bad = frozenset(
        (s, a) for s, a in T.pairs() if V[s, a] > expectation(V, T, s, a, K, sv)
    )
    return bad, max((V[p] for p in bad), default=0)


def first_invalid_pair(V: ValueFunction, T: TaskModel, K: int) -> Optional[Pair]:
    _require_deterministic(T)
    sv = V.state_values()
    for s, a in T.pairs():
        if V[s, a] > expectation(V, T, s, a, K, sv):
            return (s, a)
    return None


def is_valid(V: ValueFunction, T: TaskModel, K: int) -> bool:
    return first_invalid_pair(V, T, K) is None


def inconsistencies(V: ValueFunction, T: TaskModel, K: int) -> List[Pair]:
    """(state, preferred action) pairs whose state value misses the expectation."""
    _require_deterministic(T)
    sv = V.state_values()
    out = []
    for s in range(T.n_states):
        for a in range(T.n_actions):
            if V[s, a] == sv[s] and sv[s] != expectation(V, T, s, a, K, sv):
                out.append((s, a))
    return out


def is_consistent(V: ValueFunction, T: TaskModel, K: int) -> bool:
    return not inconsistencies(V, T, K)


def ceil_and_highest(V: ValueFunction, T: TaskModel) -> Tuple[int, int]:
    highest = max(V.values)
    return max(max(T.rewards), highest), highest


# --- value-sprints ------------------------------------------------------------


@dataclass(frozen=True)
class Sprint:
    start_index: int
    end_index: int  # inclusive
    path: Tuple[Pair, ...]

    def __len__(self) -> int:
        return self.end_index - self.start_index + 1


def sprints(trace, K: int) -> Tuple[List[Sprint], Optional[Sprint]]:
    """Split a trace into value-sprints plus at most one trailing incomplete one.

    A sprint ends at the first step i with V_i(s_i) > V_i(s_{i+1}) - K, where
    V_i is the value function before step i.
    """
    V = trace.initial_values.copy()
    n = V.n_actions
    vals = V.values
    done: List[Sprint] = []
    begin = 0
    path: List[Pair] = []
    for i, rec in enumerate(trace.records):
        path.append((rec.s, rec.a))
        here = max(vals[rec.s * n : rec.s * n + n])
        there = max(vals[rec.s_next * n : rec.s_next * n + n])
        if here > there - K:
            done.append(Sprint(begin, i, tuple(path)))
            begin = i + 1
            path = []
        vals[rec.s * n + rec.a] = rec.value_after
    tail = Sprint(begin, len(trace.records) - 1, tuple(path)) if path else None
    return done, tail


def rewarding_length(T: TaskModel, p: ActionPath) -> Optional[int]:
    """Smallest 1-based position whose pair carries the top reward M."""
    check_path(T, p)
    _, _, M = goals_and_rewards(T)
    if M is None:
        return None
    for i, (s, a) in enumerate(p, start=1):
        if T.reward(s, a) == M:
            return i
    return None


def shortest_reward_distance(T: TaskModel, s: int) -> Optional[int]:
    """Fewest pairs in a feasible path from ``s`` whose last pair is rewarding."""
    _, goals, _ = goals_and_rewards(T)
    if not goals:
        return None
    dist = bfs_distances(adjacency(T), s)
    reach = [d for x, d in dist.items() if x in goals]
    return min(reach) + 1 if reach else None


# --- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class StrategyReport:
    layers: Tuple[FrozenSet[int], ...]
    members: FrozenSet[int]
    fixp: int


def strategy(V: ValueFunction, T: TaskModel, K: int) -> StrategyReport:
    """Strategy layers: states whose values form an exact downhill ramp to reward.

    Layer 1 holds states valued M-K whose preferred actions all reward. Layer i
    adds states valued M-iK whose preferred actions are all non-rewarding, lead
    only into layer i-1, and can reach a state valued M-(i-1)K.
    """
    if not is_navigation_problem(T, K):
        raise UnsupportedTaskError("strategies are defined for navigation problems only")
    M = max(T.rewards)
    n = T.n_actions
    vals = V.values
    sv = V.state_values()
    by_value: Dict[int, List[int]] = {}
    for s, v in enumerate(sv):
        by_value.setdefault(v, []).append(s)

    def prefs(s: int) -> List[int]:
        return [a for a in range(n) if vals[s * n + a] == sv[s]]

    layer1 = frozenset(
        s
        for s in by_value.get(M - K, ())
        if all(T.reward(s, a) == M for a in prefs(s))
    )
    if not layer1:
        return StrategyReport((), frozenset(), 0)
    layers = [layer1]
    i = 2
    while M - i * K >= 0:
        prev = layers[-1]
        target = M - (i - 1) * K
        added = []
        for s in by_value.get(M - i * K, ()):
            ok = True
            for a in prefs(s):
                succ = T.tr(s, a)
                if (
                    T.reward(s, a) == M
                    or not set(succ) <= prev
                    or not any(sv[t] == target for t in succ)
                ):
                    ok = False
                    break
            if ok:
                added.append(s)
        if not added:
            break
        layers.append(prev | frozenset(added))
        i += 1
    return StrategyReport(tuple(layers), layers[-1], len(layers))


def is_good_configuration(config, T: TaskModel, K: int) -> bool:
    """All start states and the current state lie inside the strategy."""
    s, V = config
    members = strategy(V, T, K).members
    return s in members and set(T.start_states) <= members


def audit_cycles(trace, from_index: int = 0) -> List[Tuple[int, int]]:
    """Rewardless minimal state cycles at or after ``from_index``.

    Each returned span ``(i, j)`` has s_i == s_j with i the most recent prior
    visit, and no record in [i, j) observed reward.
    """
    records = trace.records
    if not 0 <= from_index <= len(records):
        raise ValueError("from_index outside the trace")
    states = trace.states()
    # prefix[k] = rewarding records among records[0:k]
    prefix = [0]
    for rec in records:
        prefix.append(prefix[-1] + (rec.reward_observed > 0))
    last: Dict[int, int] = {}
    found = []
    for j in range(from_index, len(states)):
        s = states[j]
        i = last.get(s)
        if i is not None and prefix[j] - prefix[i] == 0:
            found.append((i, j))
        last[s] = j
    return found


def optimal_action_values(T: TaskModel, K: int) -> ValueFunction:
    """V(s, a) = clamp(max(v*(s'), R(s, a)) - K): optimal, valid and consistent."""
    opt = optimal_values_iterate(T, K)
    return ValueFunction(
        T.n_states,
        T.n_actions,
        (clamp(max(opt[_next_state(T, s, a)], T.reward(s, a)) - K) for s, a in T.pairs()),
    )
