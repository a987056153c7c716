"""Finite task model (S, S_start, A, tr, R) and its structural predicates."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from valueramp.core import VALUE_CAP

Pair = Tuple[int, int]


class TaskError(ValueError):
    """Malformed task definition."""


class TaskParseError(TaskError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class TaskModel:
    """Immutable finite task with dense state/action indices.

    ``successors`` and ``rewards`` are flat, indexed by ``s * n_actions + a``.
    ``weights``, when present, holds positive integer sampling weights parallel
    to ``successors``; it only biases the runner and has no effect on any
    predicate or oracle.
    """

    n_states: int
    n_actions: int
    start_states: Tuple[int, ...]
    successors: Tuple[Tuple[int, ...], ...]
    rewards: Tuple[int, ...]
    state_names: Tuple[str, ...] = ()
    action_names: Tuple[str, ...] = ()
    weights: Optional[Tuple[Tuple[int, ...], ...]] = field(default=None, compare=False)

    def __post_init__(self):
        S, A = self.n_states, self.n_actions
        if S < 1 or A < 1:
            raise TaskError("a task needs at least one state and one action")
        if not self.start_states:
            raise TaskError("a task needs at least one start state")
        if any(not 0 <= s < S for s in self.start_states):
            raise TaskError("start state out of range")
        if len(self.successors) != S * A or len(self.rewards) != S * A:
            raise TaskError("transition and reward tables must cover every (state, action) pair")
        for i, succ in enumerate(self.successors):
            if not succ:
                raise TaskError(f"empty successor set for pair {divmod(i, A)}")
            if any(not 0 <= t < S for t in succ):
                raise TaskError(f"successor out of range for pair {divmod(i, A)}")
        for r in self.rewards:
            if not 0 <= r <= VALUE_CAP:
                raise TaskError(f"reward {r} outside 0..{VALUE_CAP}")
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(str(s) for s in range(S)))
        if not self.action_names:
            object.__setattr__(self, "action_names", tuple(f"a{a}" for a in range(A)))
        if len(self.state_names) != S or len(self.action_names) != A:
            raise TaskError("name tables do not match the task size")
        if self.weights is not None:
            if len(self.weights) != S * A or any(
                len(w) != len(t) or any(x <= 0 for x in w)
                for w, t in zip(self.weights, self.successors)
            ):
                raise TaskError("sampling weights must be positive and parallel to successors")

    @classmethod
    def build(
        cls,
        n_states: int,
        n_actions: int,
        start_states,
        tr: Dict[Pair, Sequence[int]],
        reward: Optional[Dict[Pair, int]] = None,
        state_names: Sequence[str] = (),
        action_names: Sequence[str] = (),
    ) -> "TaskModel":
        """Convenience constructor from dict-based tables; rewards default to 0."""
        reward = reward or {}
        succ = []
        rew = []
        for s in range(n_states):
            for a in range(n_actions):
                if (s, a) not in tr:
                    raise TaskError(f"missing successors for pair {(s, a)}")
                succ.append(tuple(sorted(set(tr[(s, a)]))))
                rew.append(int(reward.get((s, a), 0)))
        return cls(
            n_states,
            n_actions,
            tuple(sorted(set(start_states))),
            tuple(succ),
            tuple(rew),
            tuple(state_names),
            tuple(action_names),
        )

    def tr(self, s: int, a: int) -> Tuple[int, ...]:
        return self.successors[s * self.n_actions + a]

    def reward(self, s: int, a: int) -> int:
        return self.rewards[s * self.n_actions + a]

    def pairs(self):
        for s in range(self.n_states):
            for a in range(self.n_actions):
                yield s, a

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    def action_index(self, name: str) -> int:
        return self.action_names.index(name)


def load_graph_task(text: str) -> TaskModel:
    """Parse the line-oriented ``task v1`` format."""
    states: List[str] = []
    actions: List[str] = []
    starts: List[str] = []
    tr: Dict[Pair, Tuple[int, ...]] = {}
    reward: Dict[Pair, int] = {}
    seen_header = False
    s_idx: Dict[str, int] = {}
    a_idx: Dict[str, int] = {}

    def state(name: str, lineno: int) -> int:
        if name not in s_idx:
            raise TaskParseError(lineno, f"unknown state {name!r}")
        return s_idx[name]

    def action(name: str, lineno: int) -> int:
        if name not in a_idx:
            raise TaskParseError(lineno, f"unknown action {name!r}")
        return a_idx[name]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if not seen_header:
            if tok != ["task", "v1"]:
                raise TaskParseError(lineno, "expected header 'task v1'")
            seen_header = True
            continue
        kw, args = tok[0], tok[1:]
        if kw in ("states", "actions"):
            target, index = (states, s_idx) if kw == "states" else (actions, a_idx)
            if target:
                raise TaskParseError(lineno, f"duplicate '{kw}' line")
            if not args:
                raise TaskParseError(lineno, f"'{kw}' needs at least one name")
            if len(set(args)) != len(args):
                raise TaskParseError(lineno, f"duplicate name in '{kw}'")
            target.extend(args)
            index.update((n, i) for i, n in enumerate(args))
        elif kw == "start":
            if not args:
                raise TaskParseError(lineno, "'start' needs at least one state")
            for n in args:
                state(n, lineno)
            starts.extend(args)
        elif kw == "tr":
            if len(args) < 3:
                raise TaskParseError(lineno, "'tr' needs <state> <action> <state>+")
            key = (state(args[0], lineno), action(args[1], lineno))
            if key in tr:
                raise TaskParseError(lineno, f"duplicate 'tr' for ({args[0]}, {args[1]})")
            tr[key] = tuple(sorted({state(n, lineno) for n in args[2:]}))
        elif kw == "reward":
            if len(args) != 3:
                raise TaskParseError(lineno, "'reward' needs <state> <action> <nat>")
            key = (state(args[0], lineno), action(args[1], lineno))
            if key in reward:
                raise TaskParseError(lineno, f"duplicate 'reward' for ({args[0]}, {args[1]})")
            try:
                r = int(args[2])
            except ValueError:
                raise TaskParseError(lineno, f"reward {args[2]!r} is not a natural") from None
            if not 0 <= r <= VALUE_CAP:
                raise TaskParseError(lineno, f"reward {r} outside 0..{VALUE_CAP}")
            reward[key] = r
        else:
            raise TaskParseError(lineno, f"unknown keyword {kw!r}")

    if not seen_header:
        raise TaskParseError(1, "empty task file")
    if not states or not actions:
        raise TaskError("task file must declare states and actions")
    if not starts:
        raise TaskError("task file must declare start states")
    missing = [
        f"({s}, {a})" for s in states for a in actions if (s_idx[s], a_idx[a]) not in tr
    ]
    if missing:
        raise TaskError("transition function is not total; missing: " + ", ".join(missing))
    return TaskModel.build(
        len(states), len(actions), (s_idx[n] for n in starts), tr, reward, states, actions
    )


def dump_graph_task(T: TaskModel) -> str:
    """Serialize to ``task v1``; round-trips through :func:`load_graph_task`."""
    sn, an = T.state_names, T.action_names
    lines = [
        "task v1",
        "states " + " ".join(sn),
        "actions " + " ".join(an),
        "start " + " ".join(sn[s] for s in T.start_states),
    ]
    for s, a in T.pairs():
        lines.append(f"tr {sn[s]} {an[a]} " + " ".join(sn[t] for t in T.tr(s, a)))
    for s, a in T.pairs():
        if T.reward(s, a):
            lines.append(f"reward {sn[s]} {an[a]} {T.reward(s, a)}")
    return "\n".join(lines) + "\n"


# --- structural predicates -------------------------------------------------


def is_deterministic(T: TaskModel) -> bool:
    return all(len(succ) == 1 for succ in T.successors)


def adjacency(T: TaskModel) -> List[Set[int]]:
    """State graph: s -> s' whenever s' is in tr(s, a) for some a."""
    adj: List[Set[int]] = [set() for _ in range(T.n_states)]
    for (s, _a), succ in zip(T.pairs(), T.successors):
        adj[s].update(succ)
    return adj


def reachable_from(adj: Sequence[Set[int]], source: int) -> Set[int]:
    """States reachable from ``source`` by zero or more edges."""
    seen = {source}
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return seen


def is_connected(T: TaskModel) -> bool:
    """Every ordered pair of states is joined by a path (strong connectivity)."""
    adj = adjacency(T)
    everything = set(range(T.n_states))
    if reachable_from(adj, 0) != everything:
        return False
    reverse: List[Set[int]] = [set() for _ in range(T.n_states)]
    for s, targets in enumerate(adj):
        for t in targets:
            reverse[t].add(s)
    return reachable_from(reverse, 0) == everything


def goals_and_rewards(T: TaskModel) -> Tuple[FrozenSet[Pair], FrozenSet[int], Optional[int]]:
    """Pairs carrying the largest nonzero reward M, the states owning them, and M."""
    M = max(T.rewards)
    if M == 0:
        return frozenset(), frozenset(), None
    pairs = frozenset(p for p in T.pairs() if T.reward(*p) == M)
    return pairs, frozenset(s for s, _ in pairs), M


def is_navigation_problem(T: TaskModel, K: int) -> bool:
    """Exactly one nonzero reward quantity M, and M > |S| * K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    nonzero = {r for r in T.rewards if r}
    if len(nonzero) != 1:
        return False
    (M,) = nonzero
    return M > T.n_states * K


@dataclass(frozen=True)
class ReducibilityReport:
    layers: Tuple[FrozenSet[int], ...]
    reducible: FrozenSet[int]
    non_reducible: FrozenSet[int]
    layer_index: Dict[int, int]


def reducibility(T: TaskModel) -> ReducibilityReport:
    """Stack layers of states that can force progress toward goal states.

    Layer 1 is the goal set; layer i adds every state with some action whose
    entire successor set lies in layer i-1. Stops at the fixpoint. With no
    reward at all every layer is empty and a single empty layer is reported.
    """
    _, goals, _ = goals_and_rewards(T)
    current = frozenset(goals)
    layers = [current]
    while True:
        grown = set(current)
        for s in range(T.n_states):
            if s in current:
                continue
            if any(set(T.tr(s, a)) <= current for a in range(T.n_actions)):
                grown.add(s)
        if len(grown) == len(current):
            break
        current = frozenset(grown)
        layers.append(current)
    index: Dict[int, int] = {}
    for i, layer in enumerate(layers, start=1):
        for s in layer:
            index.setdefault(s, i)
    return ReducibilityReport(
        tuple(layers),
        current,
        frozenset(range(T.n_states)) - current,
        index,
    )


def escape_failures(T: TaskModel, report: Optional[ReducibilityReport] = None) -> List[Pair]:
    """(non-reducible state, start state) pairs lacking an escape path.

    An escape path may have any endpoints but all of its interior states must
    be non-reducible.
    """
    report = report or reducibility(T)
    nonred = report.non_reducible
    adj = adjacency(T)
    failures = []
    for target in T.start_states:
        for s in sorted(nonred):
            # BFS from s's successors through non-reducible states only
            seen: Set[int] = set()
            queue = deque(adj[s])
            ok = False
            while queue:
                x = queue.popleft()
                if x == target:
                    ok = True
                    break
                if x in seen or x not in nonred:
                    continue
                seen.add(x)
                queue.extend(adj[x])
            if not ok:
                failures.append((s, target))
    return failures


def is_reducible(T: TaskModel) -> bool:
    report = reducibility(T)
    if not set(T.start_states) <= report.reducible:
        return False
    return not escape_failures(T, report)


def is_restartable(T: TaskModel) -> bool:
    """Every maximally rewarding pair leads exactly to the start set."""
    pairs, _, _ = goals_and_rewards(T)
    starts = tuple(sorted(T.start_states))
    return all(T.tr(s, a) == starts for s, a in pairs)
