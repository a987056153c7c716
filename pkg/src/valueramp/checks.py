"""Property check suites shared by the ``check`` subcommand and the acceptance tests.

Every check yields ``CheckResult`` lines rendered as ``CHECK <name> PASS|FAIL <details>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence

from valueramp import analysis as an
from valueramp.core import ValueFunction, update_in_place
from valueramp.data import read_text
from valueramp.gridworld import compile_map, parse_map
from valueramp.rng import SplitMix64
from valueramp.runner import (
    Configuration,
    InitSpec,
    RunnerParams,
    RunTrace,
    Simulator,
    fixpoint,
    good_configuration,
    run,
)
from valueramp.task import (
    TaskModel,
    is_deterministic,
    is_navigation_problem,
    is_reducible,
    is_restartable,
    load_graph_task,
    reducibility,
)

DC_MAPS = ("room", "spiral", "multigoal")


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: str = ""

    def line(self) -> str:
        return f"CHECK {self.name} {'PASS' if self.passed else 'FAIL'} {self.details}".rstrip()


def bundled_task(name: str) -> TaskModel:
    if name.endswith(".task"):
        return load_graph_task(read_text(name))
    return compile_map(parse_map(read_text(name + ".map")))


# --- random tasks -----------------------------------------------------------------


def random_task(
    rng: SplitMix64,
    max_states: int = 8,
    max_actions: int = 3,
    deterministic: bool = True,
    navigation_K: Optional[int] = None,
    max_reward: int = 12,
) -> TaskModel:
    """Random small task; with ``navigation_K`` the single reward M exceeds |S|*K."""
    S = rng.integer(1, max_states)
    A = rng.integer(1, max_actions)
    tr = {}
    for s in range(S):
        for a in range(A):
            if deterministic:
                tr[(s, a)] = [rng.below(S)]
            else:
                tr[(s, a)] = sorted({rng.below(S) for _ in range(rng.integer(1, 3))})
    reward = {}
    if navigation_K is not None:
        M = S * navigation_K + rng.integer(1, 6)
        pairs = [(s, a) for s in range(S) for a in range(A)]
        for _ in range(rng.integer(1, 3)):
            reward[rng.choice(pairs)] = M
    else:
        for s in range(S):
            for a in range(A):
                if rng.below(3) == 0:
                    reward[(s, a)] = rng.integer(0, max_reward)
    starts = {rng.below(S) for _ in range(rng.integer(1, 2))}
    return TaskModel.build(S, A, starts, tr, reward)


def random_values(rng: SplitMix64, T: TaskModel, hi: int) -> ValueFunction:
    return ValueFunction(T.n_states, T.n_actions, (rng.integer(0, hi) for _ in range(T.n_states * T.n_actions)))


# --- criterion suites -----------------------------------------------------------------


def suite_explore(
    T: TaskModel,
    name: str,
    Ks: Sequence[int] = (1, 2, 3),
    inits: Sequence[InitSpec] = (InitSpec.zero(), InitSpec.uniform(0, 200)),
    seeds: Sequence[int] = (0, 1, 2),
    max_steps: int = 50_000_000,
) -> List[CheckResult]:
    """Exploring runs reach a fixpoint holding the optimal, consistent value function.

    After detection, 10*|S|*|A| further exploring steps and one forced update of
    every pair must change nothing.
    """
    out = []
    for K in Ks:
        opt = an.optimal_values_iterate(T, K)
        opt_bfs = an.optimal_values_bfs(T, K)
        out.append(CheckResult(f"explore.oracle[{name},K={K}]", opt == opt_bfs, "iterate == bfs"))
        for init in inits:
            for seed in seeds:
                tag = f"{name},K={K},init={init},seed={seed}"
                params = RunnerParams(epsilon=1, seed=seed, max_steps=max_steps, init=init, stop=(fixpoint(),))
                sim = Simulator.from_params(T, params, K)
                _, reason = sim.advance(max_steps, params.stop, record=False)
                V = sim.config.values
                steps_to_fix = sim.t
                sv = V.state_values()
                bad = [s for s in range(T.n_states) if sv[s] != opt[s]]
                consistent = an.is_consistent(V, T, K)
                out.append(
                    CheckResult(
                        f"explore.optimal[{tag}]",
                        reason == "fixpoint" and not bad and consistent,
                        f"stop={reason} steps={steps_to_fix} mismatched={len(bad)} consistent={consistent}",
                    )
                )
                extra = 10 * T.n_states * T.n_actions
                recs, _ = sim.advance(extra)
                changed = sum(r.value_before != r.value_after for r in recs)
                forced = 0
                for s, a in T.pairs():
                    probe = V.copy()
                    for t in T.tr(s, a):
                        old, new = update_in_place(probe, s, a, t, T.reward(s, a), K)
                        forced += old != new
                out.append(
                    CheckResult(
                        f"fixed.stable[{tag}]",
                        changed == 0 and forced == 0,
                        f"extra_steps={extra} changes={changed} forced_pair_changes={forced}",
                    )
                )
    return out


def suite_sprint(
    T: TaskModel, name: str, K: int = 1, seeds: Sequence[int] = (0, 1, 2), min_sprints: int = 50
) -> List[CheckResult]:
    """Greedy runs from the optimal consistent value function follow shortest optimal paths."""
    if not is_navigation_problem(T, K) or not is_deterministic(T):
        return [CheckResult(f"sprint.setup[{name},K={K}]", False, "needs a DC navigation problem")]
    V_opt = an.optimal_action_values(T, K)
    opt = an.optimal_values_iterate(T, K)
    setup = an.is_valid(V_opt, T, K) and an.is_consistent(V_opt, T, K) and V_opt.state_values() == opt
    out = [CheckResult(f"sprint.setup[{name},K={K}]", setup, "seed V is optimal, valid, consistent")]
    dist = {s: an.shortest_reward_distance(T, s) for s in range(T.n_states)}
    for seed in seeds:
        params = RunnerParams(epsilon=0, seed=seed, max_steps=200 * T.n_states)
        sim = Simulator.from_params(T, params, K)
        sim.config = Configuration(sim.config.state, V_opt.copy())
        trace = RunTrace(T, K, params, sim.config.state, V_opt.copy())
        trace.records, _ = sim.advance(params.max_steps)
        done, _ = an.sprints(trace, K)
        wrong_value = wrong_length = 0
        for sp in done:
            first = sp.path[0][0]
            if an.path_value(T, sp.path, K) != opt[first]:
                wrong_value += 1
            if len(sp) != dist[first] or an.rewarding_length(T, sp.path) != dist[first]:
                wrong_length += 1
        out.append(
            CheckResult(
                f"sprint.optimal_shortest[{name},K={K},seed={seed}]",
                len(done) >= min_sprints and wrong_value == 0 and wrong_length == 0,
                f"sprints={len(done)} non_optimal={wrong_value} non_shortest={wrong_length}",
            )
        )
    return out


def suite_greedy(
    T: TaskModel,
    name: str,
    K: int = 1,
    seeds: Sequence[int] = tuple(range(10)),
    budget: int = 2_000_000,
    audit_steps: int = 100_000,
) -> List[CheckResult]:
    """Greedy runs on a reducible restartable navigation problem stop cycling without reward."""
    setup = is_navigation_problem(T, K) and is_reducible(T) and is_restartable(T)
    out = [CheckResult(f"greedy.setup[{name},K={K}]", setup, "navigation, reducible, restartable")]
    if not setup:
        return out
    for seed in seeds:
        params = RunnerParams(epsilon=0, seed=seed, max_steps=budget, stop=(good_configuration(),))
        sim = Simulator.from_params(T, params, K)
        _, reason = sim.advance(budget, params.stop, record=False)
        reached = sim.t
        good = reason == "good-configuration" and an.is_good_configuration(sim.config, T, K)
        trace = RunTrace(T, K, params, sim.config.state, sim.config.values.copy())
        trace.records, _ = sim.advance(audit_steps)
        cycles = an.audit_cycles(trace, 0)
        out.append(
            CheckResult(
                f"greedy.no_rewardless_cycles[{name},K={K},seed={seed}]",
                good and not cycles,
                f"good_configuration_at={reached if good else 'never'} audited={audit_steps} rewardless_cycles={len(cycles)}",
            )
        )
    return out


def suite_fluctuate(seed: int = 0, steps: int = 10_000) -> List[CheckResult]:
    """Golden run on the three-state nondeterministic task.

    ``fluctuate.pair_values`` tests the literal claim that both actions of states 3
    and 2 carry the value and that V(1,b) settles at 1. The update rule cannot
    produce it from zero values: once one action lifts V(3) to 3, the sibling's
    update is v + 4 - 1 - 3 = v, so it stays at 0. The check is reported, not
    hidden. ``fluctuate.state_values`` is what the rule does produce.
    """
    T = bundled_task("fluct.task")
    K = 1
    trace = run(T, RunnerParams(epsilon=1, seed=seed, max_steps=steps), K)
    V = trace.replay()
    idx = {n: i for i, n in enumerate(T.state_names)}
    a, b = T.action_index("a"), T.action_index("b")
    s1, s2, s3 = idx["1"], idx["2"], idx["3"]
    shown = f"V(3,a)={V[s3, a]} V(3,b)={V[s3, b]} V(2,a)={V[s2, a]} V(2,b)={V[s2, b]} V(1,a)={V[s1, a]} V(1,b)={V[s1, b]}"
    literal = (V[s3, a], V[s3, b], V[s2, a], V[s2, b], V[s1, b]) == (3, 3, 2, 2, 1)
    sv = V.state_values()
    one_carrier = sorted(V.row(s3)) == [0, 3] and sorted(V.row(s2)) == [0, 2]
    settled = sv[s3] == 3 and sv[s2] == 2 and one_carrier and V[s1, b] == 0
    history = [r.value_after for r in trace.records if (r.s, r.a) == (s1, a)]
    flips = sum(1 for x, y in zip(history, history[1:]) if {x, y} == {1, 2})
    return [
        CheckResult("fluctuate.pair_values", literal, shown),
        CheckResult("fluctuate.state_values", settled, f"V(3)={sv[s3]} V(2)={sv[s2]} {shown}"),
        CheckResult(
            "fluctuate.oscillation",
            flips >= 10 and V[s1, a] in (1, 2),
            f"V(1,a) alternations={flips} last={V[s1, a]}",
        ),
    ]


def suite_invariants(seed: int = 0, transitions: int = 10_000) -> List[CheckResult]:
    """Randomized transition-level invariants on small random tasks."""
    rng = SplitMix64(seed)
    counts: Dict[str, int] = {}
    fails: Dict[str, int] = {}

    def note(key: str, ok: bool) -> None:
        counts[key] = counts.get(key, 0) + 1
        if not ok:
            fails[key] = fails.get(key, 0) + 1

    done = 0
    # arbitrary value functions on arbitrary (possibly nondeterministic) tasks
    while done < transitions:
        det = rng.below(2) == 0
        T = random_task(rng, deterministic=det)
        K = rng.integer(1, 3)
        V = random_values(rng, T, 15) if rng.below(2) else ValueFunction.zeros(T.n_states, T.n_actions)
        opt = an.optimal_values_iterate(T, K) if det else None
        for _ in range(50):
            s = rng.below(T.n_states)
            a = rng.below(T.n_actions)
            s_next = rng.choice(T.tr(s, a))
            ceil_before, _ = an.ceil_and_highest(V, T)
            if det:
                _, vmax_before = an.violations(V, T, K)
                valid_before = vmax_before == 0
                sv_before = V.state_values()
                if valid_before:
                    note("valid_leq_optimal", all(x <= y for x, y in zip(sv_before, opt)))
            update_in_place(V, s, a, s_next, T.reward(s, a), K)
            ceil_after, _ = an.ceil_and_highest(V, T)
            note("ceil_non_increasing", ceil_after <= ceil_before)
            if det:
                viol_after, vmax_after = an.violations(V, T, K)
                note("violmax_non_increasing", vmax_after <= vmax_before)
                note("viol_empty_iff_violmax_zero", (not viol_after) == (vmax_after == 0))
                if valid_before:
                    note("valid_preserved", vmax_after == 0)
                    note("state_values_non_decreasing", all(x <= y for x, y in zip(sv_before, V.state_values())))
            done += 1

    # greedy runs on navigation problems with initial values below M
    nav_steps = 0
    while nav_steps < transitions:
        K = rng.integer(1, 2)
        T = random_task(rng, deterministic=rng.below(2) == 0, navigation_K=K)
        M = max(T.rewards)
        params = RunnerParams(epsilon=0, seed=rng.next_u64(), max_steps=200, init=InitSpec.uniform(0, M - 1))
        red = reducibility(T).reducible

        sim = Simulator.from_params(T, params, K)
        for _ in range(params.max_steps):
            sim.step()
            V = sim.config.values
            _, highest = an.ceil_and_highest(V, T)
            note("highest_below_M", highest < M)
            rep = an.strategy(V, T, K)
            sv = V.state_values()
            note("strategy_bounds", all(0 < sv[s] <= M - K for s in rep.members))
            note("strategy_fixp", rep.fixp <= len(rep.members))
            note("strategy_within_reducible", rep.members <= red)
            nav_steps += 1

    return [
        CheckResult(f"invariant.{key}", key not in fails, f"checked={counts[key]} violations={fails.get(key, 0)}")
        for key in sorted(counts)
    ]


def suite_oracle(seed: int = 0, tasks: int = 200) -> List[CheckResult]:
    """Enumeration vs iteration optimal values, decycling, and sprint coverage."""
    rng = SplitMix64(seed)
    mismatch = decycle_bad = sprint_bad = 0
    paths = 0
    for _ in range(tasks):
        T = random_task(rng, deterministic=True)
        K = rng.integer(1, 3)
        enum = an.optimal_values_enumerate(T, K)
        if enum != an.optimal_values_iterate(T, K) or enum != an.optimal_values_bfs(T, K):
            mismatch += 1
        for _ in range(5):
            s = rng.below(T.n_states)
            p = []
            for _ in range(rng.integer(1, 12)):
                a = rng.below(T.n_actions)
                p.append((s, a))
                s = T.tr(s, a)[0]
            q = an.decycle(T, p, K)
            paths += 1
            ok = (
                not an.has_state_cycle(q)
                and q[0][0] == p[0][0]
                and an.path_value(T, q, K) >= an.path_value(T, p, K)
            )
            decycle_bad += not ok
        trace = run(
            T,
            RunnerParams(epsilon=rng.below(2), seed=rng.next_u64(), max_steps=rng.integer(0, 60),
                         init=InitSpec.uniform(0, 10)),
            K,
        )
        sprint_bad += not sprints_cover(trace, K)
    return [
        CheckResult("oracle.enumerate_eq_iterate", mismatch == 0, f"tasks={tasks} mismatches={mismatch}"),
        CheckResult("oracle.decycle", decycle_bad == 0, f"paths={paths} failures={decycle_bad}"),
        CheckResult("oracle.sprint_cover", sprint_bad == 0, f"traces={tasks} failures={sprint_bad}"),
    ]


def sprints_cover(trace: RunTrace, K: int) -> bool:
    """Sprints tile the trace and satisfy both sprint conditions."""
    done, tail = an.sprints(trace, K)
    pieces = done + ([tail] if tail else [])
    pos = 0
    for sp in pieces:
        if sp.start_index != pos or len(sp.path) != len(sp):
            return False
        pos = sp.end_index + 1
    if pos != len(trace.records):
        return False
    svs = [V.state_values() for V in _snapshots(trace)]
    for sp in pieces:
        for i in range(sp.start_index, sp.end_index + 1):
            rec = trace.records[i]
            climbing = svs[i][rec.s] <= svs[i][rec.s_next] - K
            last = i == sp.end_index and sp is not tail
            if climbing == last:
                return False
    return True


def _snapshots(trace: RunTrace) -> Iterable[ValueFunction]:
    return [V.copy() for V in trace.value_functions()]


SUITES: Dict[str, Callable[..., List[CheckResult]]] = {
    "explore": suite_explore,
    "sprint": suite_sprint,
    "greedy": suite_greedy,
    "fluctuate": suite_fluctuate,
    "invariants": suite_invariants,
    "oracle": suite_oracle,
}
