"""Run generation: epsilon-exploring and greedy action selection with seeded traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from valueramp.core import VALUE_CAP, ValueFunction
from valueramp.rng import SplitMix64, parse_probability, stream
from valueramp.task import TaskModel


class InitSpec(NamedTuple):
    """Initial value function: all zeros, or i.i.d. uniform integers in [lo, hi]."""

    kind: str = "zero"
    lo: int = 0
    hi: int = 0

    @classmethod
    def zero(cls) -> "InitSpec":
        return cls("zero")

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "InitSpec":
        if not 0 <= lo <= hi <= VALUE_CAP:
            raise ValueError(f"bad uniform interval [{lo}, {hi}]")
        return cls("uniform", lo, hi)

    @classmethod
    def parse(cls, text: str) -> "InitSpec":
        text = text.strip()
        if text == "zero":
            return cls.zero()
        if text.startswith("uniform:") and ".." in text:
            lo, hi = text[len("uniform:") :].split("..", 1)
            try:
                return cls.uniform(int(lo), int(hi))
            except ValueError:
                pass
        raise ValueError(f"init spec must be 'zero' or 'uniform:LO..HI', got {text!r}")

    def __str__(self) -> str:
        return "zero" if self.kind == "zero" else f"uniform:{self.lo}..{self.hi}"


class StopCondition(NamedTuple):
    """``steps(n)``, ``fixpoint(window)`` or ``good_configuration(check_every)``.

    A parameter of 0 means "use the task-dependent default".
    """

    kind: str
    param: int = 0

    def __str__(self) -> str:
        return f"{self.kind}:{self.param}"


def steps(n: int) -> StopCondition:
    return StopCondition("steps", n)


def fixpoint(window: int = 0) -> StopCondition:
    return StopCondition("fixpoint", window)


def good_configuration(check_every: int = 0) -> StopCondition:
    return StopCondition("good_configuration", check_every)


def default_fixpoint_window(T: TaskModel) -> int:
    return 50 * T.n_states * T.n_actions


@dataclass(frozen=True)
class RunnerParams:
    epsilon: Fraction = Fraction(1)
    seed: int = 0
    max_steps: int = 10_000
    init: InitSpec = InitSpec()
    stop: Tuple[StopCondition, ...] = ()

    def __post_init__(self):
        eps = self.epsilon
        if isinstance(eps, str):
            eps = parse_probability(eps)
        elif not isinstance(eps, Fraction):
            eps = Fraction(eps)
        if not 0 <= eps <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "stop", tuple(self.stop))
        for cond in self.stop:
            if cond.kind not in ("steps", "fixpoint", "good_configuration"):
                raise ValueError(f"unknown stop condition {cond.kind!r}")
            if cond.param < 0:
                raise ValueError("stop parameters are naturals")


class TransitionRecord(NamedTuple):
    step_index: int
    s: int
    a: int
    s_next: int
    reward_observed: int
    value_before: int
    value_after: int
    explored: bool


class Configuration(NamedTuple):
    state: int
    values: ValueFunction


@dataclass
class RunTrace:
    task: TaskModel
    K: int
    params: RunnerParams
    initial_state: int
    initial_values: ValueFunction
    records: List[TransitionRecord] = field(default_factory=list)
    final: Optional[Configuration] = None
    stop_reason: str = "steps"

    def value_functions(self) -> Iterable[ValueFunction]:
        """Yield V_1, V_2, ... reconstructed from the records (a shared, mutated object)."""
        V = self.initial_values.copy()
        n = V.n_actions
        yield V
        for rec in self.records:
            V.values[rec.s * n + rec.a] = rec.value_after
            yield V

    def replay(self) -> ValueFunction:
        """Final value function reconstructed from the initial one and the records."""
        V = self.initial_values.copy()
        n = V.n_actions
        for rec in self.records:
            V.values[rec.s * n + rec.a] = rec.value_after
        return V

    def states(self) -> List[int]:
        """Visited states s_1, ..., s_{n+1}."""
        if not self.records:
            return [self.initial_state]
        return [r.s for r in self.records] + [self.records[-1].s_next]


def init_values(T: TaskModel, spec: InitSpec, seed: int) -> ValueFunction:
    if spec.kind == "zero":
        return ValueFunction.zeros(T.n_states, T.n_actions)
    rng = stream(seed, "init")
    return ValueFunction(
        T.n_states,
        T.n_actions,
        (rng.integer(spec.lo, spec.hi) for _ in range(T.n_states * T.n_actions)),
    )


class Streams:
    """The per-purpose generators driving one run."""

    __slots__ = ("start", "action", "explore", "successor")

    def __init__(self, seed: int):
        self.start = stream(seed, "start")
        self.action = stream(seed, "action")
        self.explore = stream(seed, "explore")
        self.successor = stream(seed, "successor")


def _sample_successor(T: TaskModel, idx: int, rng: SplitMix64) -> int:
    succ = T.successors[idx]
    if len(succ) == 1:
        return succ[0]
    if T.weights is not None:
        return succ[rng.weighted_index(T.weights[idx])]
    return succ[rng.below(len(succ))]


def step(
    T: TaskModel,
    config: Configuration,
    K: int,
    epsilon: Fraction,
    rng: Streams,
    step_index: int = 0,
) -> Tuple[TransitionRecord, Configuration]:
    """One transition. ``config.values`` is updated in place and handed on."""
    s, V = config
    n = T.n_actions
    vals = V.values
    base = s * n
    row = vals[base : base + n]
    top = max(row)
    prefs = [a for a in range(n) if row[a] == top]
    a = prefs[0] if len(prefs) == 1 else prefs[rng.action.below(len(prefs))]
    explored = False
    if epsilon and rng.explore.bernoulli(epsilon):
        explored = True
        a = rng.action.below(n)
    idx = base + a
    s_next = _sample_successor(T, idx, rng.successor)
    r = T.rewards[idx]
    old = vals[idx]
    v_next = max(vals[s_next * n : s_next * n + n])
    new = old + (r if r > v_next else v_next) - K - top
    if new < 0:
        new = 0
    vals[idx] = new
    rec = TransitionRecord(step_index, s, a, s_next, r, old, new, explored)
    return rec, Configuration(s_next, V)


def detect_fixpoint(records: Sequence[TransitionRecord], window: int, n_states: int, n_actions: int) -> bool:
    """No value change in the last ``window`` records, and every pair executed among them."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(records) < window:
        return False
    tail = records[len(records) - window :]
    if any(r.value_before != r.value_after for r in tail):
        return False
    return len({(r.s, r.a) for r in tail}) == n_states * n_actions


class _FixpointTracker:
    """Incremental form of :func:`detect_fixpoint` over a running trace."""

    def __init__(self, n_pairs: int, window: int):
        self.window = window
        self.last_exec = [-1] * n_pairs
        self.last_change = -1
        self.blocker: Optional[int] = None

    def observe(self, t: int, pair: int, changed: bool) -> bool:
        self.last_exec[pair] = t
        if changed:
            self.last_change = t
        lo = t - self.window + 1
        if self.last_change >= lo or lo < 0:
            return False
        if self.blocker is not None and self.blocker != pair:
            if self.last_exec[self.blocker] < lo:
                return False
        oldest = min(range(len(self.last_exec)), key=self.last_exec.__getitem__)
        if self.last_exec[oldest] < lo:
            self.blocker = oldest
            return False
        return True


class Simulator:
    """A resumable run of the Value-Ramp algorithm on one task."""

    def __init__(
        self,
        T: TaskModel,
        K: int,
        epsilon: Fraction,
        seed: int,
        config: Configuration,
    ):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.task = T
        self.K = K
        self.epsilon = Fraction(epsilon)
        self.rng = Streams(seed)
        self.config = config
        self.t = 0

    @classmethod
    def from_params(cls, T: TaskModel, params: RunnerParams, K: int) -> "Simulator":
        V = init_values(T, params.init, params.seed)
        sim = cls(T, K, params.epsilon, params.seed, Configuration(0, V))
        s0 = sim.rng.start.choice(T.start_states)
        sim.config = Configuration(s0, V)
        return sim

    def step(self) -> TransitionRecord:
        rec, self.config = step(self.task, self.config, self.K, self.epsilon, self.rng, self.t)
        self.t += 1
        return rec

    def advance(
        self,
        max_steps: int,
        stop: Sequence[StopCondition] = (),
        record: bool = True,
        on_record: Optional[Callable[[TransitionRecord], None]] = None,
    ) -> Tuple[List[TransitionRecord], str]:
        """Take up to ``max_steps`` steps; return the records and the stop reason."""
        from valueramp.analysis import is_good_configuration  # noqa: cyclic at import time

        T = self.task
        n_pairs = T.n_states * T.n_actions
        limit = max_steps
        tracker = None
        good_every = 0
        for cond in stop:
            if cond.kind == "steps":
                limit = min(limit, cond.param)
            elif cond.kind == "fixpoint":
                tracker = _FixpointTracker(n_pairs, cond.param or default_fixpoint_window(T))
            else:
                good_every = cond.param or T.n_states

        if good_every and is_good_configuration(self.config, T, self.K):
            return [], "good-configuration"

        # Inlined copy of step() for throughput; test_runner checks both agree.
        records: List[TransitionRecord] = []
        keep = record or on_record is not None
        n = T.n_actions
        K = self.K
        eps = self.epsilon
        succ_table = T.successors
        weights = T.weights
        rewards = T.rewards
        rng = self.rng
        act_below = rng.action.below
        explore_next = rng.explore.next_u64
        eps_num, eps_den = eps.numerator, eps.denominator
        always = eps_num >= eps_den
        never = eps_num == 0
        eps_scaled = eps_num << 53
        succ_rng = rng.successor
        s, V = self.config
        vals = V.values
        t0 = self.t
        reason = "steps"
        i = 0
        while i < limit:
            base = s * n
            row = vals[base : base + n]
            top = max(row)
            if row.count(top) == 1:
                a = row.index(top)
            else:
                prefs = [b for b in range(n) if row[b] == top]
                a = prefs[act_below(len(prefs))]
            explored = False
            if not never and (always or (explore_next() >> 11) * eps_den < eps_scaled):
                explored = True
                a = act_below(n)
            idx = base + a
            succ = succ_table[idx]
            if len(succ) == 1:
                s_next = succ[0]
            elif weights is not None:
                s_next = succ[succ_rng.weighted_index(weights[idx])]
            else:
                s_next = succ[succ_rng.below(len(succ))]
            r = rewards[idx]
            old = vals[idx]
            nb = s_next * n
            v_next = max(vals[nb : nb + n])
            new = old + (r if r > v_next else v_next) - K - top
            if new < 0:
                new = 0
            vals[idx] = new
            if keep:
                rec = TransitionRecord(t0 + i, s, a, s_next, r, old, new, explored)
                if record:
                    records.append(rec)
                if on_record is not None:
                    on_record(rec)
            s = s_next
            i += 1
            if tracker is not None and tracker.observe(i - 1, idx, old != new):
                reason = "fixpoint"
                break
            if good_every and i % good_every == 0:
                if is_good_configuration((s, V), T, K):
                    reason = "good-configuration"
                    break
        self.t = t0 + i
        self.config = Configuration(s, V)
        return records, reason


def run(T: TaskModel, params: RunnerParams, K: int, record: bool = True) -> RunTrace:
    """Generate one run; ``record=False`` keeps only the final configuration."""
    sim = Simulator.from_params(T, params, K)
    trace = RunTrace(T, K, params, sim.config.state, sim.config.values.copy())
    trace.records, trace.stop_reason = sim.advance(params.max_steps, params.stop, record=record)
    trace.final = sim.config
    return trace


# --- trace v1 ----------------------------------------------------------------


def trace_header(trace: RunTrace) -> List[str]:
    """Header lines of ``trace v1`` up to and including the initial value rows."""
    p = trace.params
    V0 = trace.initial_values
    lines = [
        "trace v1",
        f"k {trace.K}",
        f"epsilon {p.epsilon.numerator}/{p.epsilon.denominator}",
        f"seed {p.seed}",
        f"init {p.init}",
        f"max_steps {p.max_steps}",
        "stop " + (" ".join(str(c) for c in p.stop) if p.stop else "none"),
        f"size {V0.n_states} {V0.n_actions}",
        f"start {trace.initial_state}",
    ]
    for s in range(V0.n_states):
        lines.append("values " + " ".join(str(v) for v in V0.row(s)))
    return lines


def format_record(r: TransitionRecord) -> str:
    return (
        f"{r.step_index} {r.s} {r.a} {r.s_next} {r.reward_observed} "
        f"{r.value_before} {r.value_after} {int(r.explored)}"
    )


def dump_trace(trace: RunTrace) -> str:
    lines = trace_header(trace)
    lines.append(f"records {len(trace.records)}")
    lines.extend(format_record(r) for r in trace.records)
    lines.append(f"end {trace.stop_reason}")
    return "\n".join(lines) + "\n"


def load_trace(text: str, T: TaskModel) -> RunTrace:
    """Parse ``trace v1`` produced by :func:`dump_trace` for task ``T``."""
    lines = text.splitlines()
    if not lines or lines[0] != "trace v1":
        raise ValueError("expected header 'trace v1'")
    head = {}
    value_rows = []
    i = 1
    while not lines[i].startswith("records"):
        key, _, rest = lines[i].partition(" ")
        if key == "values":
            value_rows.append([int(x) for x in rest.split()])
        else:
            head[key] = rest
        i += 1
    count = int(lines[i].split()[1])
    records = []
    for line in lines[i + 1 : i + 1 + count]:
        f = [int(x) for x in line.split()]
        records.append(TransitionRecord(f[0], f[1], f[2], f[3], f[4], f[5], f[6], bool(f[7])))
    reason = lines[i + 1 + count].split(" ", 1)[1]
    stop = ()
    if head["stop"] != "none":
        stop = tuple(
            StopCondition(kind, int(param))
            for kind, param in (c.split(":") for c in head["stop"].split())
        )
    params = RunnerParams(
        epsilon=Fraction(head["epsilon"]),
        seed=int(head["seed"]),
        max_steps=int(head["max_steps"]),
        init=InitSpec.parse(head["init"]),
        stop=stop,
    )
    V0 = ValueFunction.from_rows(value_rows)
    trace = RunTrace(T, int(head["k"]), params, int(head["start"]), V0, records, None, reason)
    final_state = records[-1].s_next if records else trace.initial_state
    trace.final = Configuration(final_state, trace.replay())
    return trace
