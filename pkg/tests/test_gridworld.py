from fractions import Fraction

import pytest

from valueramp import analysis as an
from valueramp.core import ValueFunction
from valueramp.data import read_text
from valueramp.gridworld import (
    ACTIONS,
    GridSemantics,
    MapError,
    compile_map,
    csv_to_matrix,
    matrix_to_csv,
    matrix_to_pgm,
    parse_map,
    render_state_values,
    render_values,
)
from valueramp.runner import RunnerParams, fixpoint, run
from valueramp.task import (
    is_connected,
    is_deterministic,
    is_navigation_problem,
    is_reducible,
    is_restartable,
    reducibility,
)

A = {name: i for i, name in enumerate(ACTIONS)}


def grid(*rows, goals=(), variant="dc"):
    lines = ["map v1", "grid", *rows, "end"]
    lines += [f"goal {x} {y} {r}" for x, y, r in goals]
    lines.append(f"variant {variant}")
    return "\n".join(lines) + "\n"


def bundled(name):
    gm = parse_map(read_text(name + ".map"))
    return gm, compile_map(gm)


JUMP_MAP = grid("########", "#SJ.#.G#", "########", goals=[(6, 1, 10)], variant="rr")


class TestParse:
    def test_single_cell(self):
        gm = parse_map(grid("###", "#S#", "###"))
        T = compile_map(gm)
        assert T.n_states == 1 and T.n_actions == 5
        assert all(T.tr(0, a) == (0,) for a in range(5))

    def test_room(self):
        gm, T = bundled("room")
        assert gm.goals == {(9, 8): 100} and gm.variant == "dc"
        assert (gm.width, gm.height) == (12, 12)
        assert T.state_names[T.start_states[0]] == "1_1"

    @pytest.mark.parametrize(
        "text,message",
        [
            (grid("####", "#S.#", "####", goals=[(0, 0, 5)]), "wall"),
            (grid("####", "#SG#", "####", goals=[(2, 1, 0)]), "positive"),
            (grid("####", "#S.#", "###", goals=[]), "ragged"),
            (grid("####", "#..#", "####"), "no start"),
            (grid("####", "#SG#", "####"), "annotation"),
            (grid("####", "#S.#", "####", goals=[(2, 1, 5)]), "not a 'G'"),
            (grid("####", "#Sq#", "####"), "unknown cell"),
            (grid("####", "#S..", "####"), "boundary"),
            (grid("####", "#SG#", "####", goals=[(2, 1, 5), (2, 1, 6)]), "duplicate"),
            ("map v1\ngrid\n###\n#S#\n###\n", "end"),
            ("map v2\n", "header"),
            (grid("###", "#S#", "###") + "colour red\n", "unknown annotation"),
        ],
    )
    def test_errors(self, text, message):
        with pytest.raises(MapError, match=message):
            parse_map(text)


class TestCompileDC:
    def test_moves_and_finish(self):
        gm = parse_map(grid("#####", "#S.G#", "#.#.#", "#####", goals=[(3, 1, 9)]))
        T = compile_map(gm)
        idx = {n: i for i, n in enumerate(T.state_names)}
        s, g = idx["1_1"], idx["3_1"]
        assert T.tr(s, A["right"]) == (idx["2_1"],)
        assert T.tr(s, A["left"]) == (s,)  # wall: stay
        assert T.tr(s, A["down"]) == (idx["1_2"],)
        assert T.tr(s, A["finish"]) == (s,) and T.reward(s, A["finish"]) == 0
        assert T.tr(g, A["finish"]) == (s,) and T.reward(g, A["finish"]) == 9
        assert is_deterministic(T) and is_connected(T)

    @pytest.mark.parametrize("name", ["room", "spiral", "multigoal"])
    def test_bundled_dc_maps(self, name):
        gm, T = bundled(name)
        assert is_deterministic(T) and is_connected(T)
        assert all(100 <= r <= 400 for r in gm.goals.values())
        assert gm.width <= 12 and gm.height <= 12
        assert an.optimal_values_iterate(T, 2) == an.optimal_values_bfs(T, 2)

    def test_multiple_starts_rejected(self):
        with pytest.raises(MapError, match="exactly one start"):
            compile_map(parse_map(grid("#####", "#SSG#", "#####", goals=[(3, 1, 9)])))

    def test_special_cells_rejected(self):
        with pytest.raises(MapError, match="swamp or jump"):
            compile_map(parse_map(grid("#####", "#SXG#", "#####", goals=[(3, 1, 9)])))

    def test_disconnected_rejected(self):
        with pytest.raises(MapError, match="connected"):
            compile_map(parse_map(grid("#####", "#S#G#", "#####", goals=[(3, 1, 9)])))

    def test_pure(self):
        text = read_text("spiral.map")
        assert compile_map(parse_map(text)) == compile_map(parse_map(text))

    def test_exploring_run_matches_oracle(self):
        gm, T = bundled("room")
        trace = run(T, RunnerParams(epsilon=1, seed=7, max_steps=10**7, stop=(fixpoint(),)), 2, record=False)
        assert trace.stop_reason == "fixpoint"
        assert trace.final.values.state_values() == an.optimal_values_iterate(T, 2)


class TestCompileRR:
    def test_jump_destination_filter(self):
        gm = parse_map(JUMP_MAP)
        T = compile_map(gm)
        idx = {n: i for i, n in enumerate(T.state_names)}
        j = idx["2_1"]
        assert T.tr(j, A["right"]) == (idx["6_1"],)  # +2 is a wall, +4 is free
        assert T.tr(j, A["left"]) == (j,)  # both landings blocked: stay
        assert T.tr(j, A["finish"]) == (j,) and T.reward(j, A["finish"]) == 0

    def test_jump_passes_over_walls(self):
        gm = parse_map(grid("########", "#SJ#..G#", "########", goals=[(6, 1, 10)], variant="rr"))
        T = compile_map(gm)
        idx = {n: i for i, n in enumerate(T.state_names)}
        assert T.tr(idx["2_1"], A["right"]) == (idx["4_1"], idx["6_1"])

    def test_swamp_successors(self):
        _, T = bundled("swamp")
        idx = {n: i for i, n in enumerate(T.state_names)}
        x = idx["4_1"]
        expected = set(T.start_states) | {x, idx["3_1"], idx["5_1"]}  # up and down are walls
        for a in range(5):
            assert set(T.tr(x, a)) == expected
            assert T.reward(x, a) == 0

    def test_swamp_map_properties(self):
        gm, T = bundled("swamp")
        assert gm.variant == "rr"
        assert is_reducible(T) and is_restartable(T) and is_navigation_problem(T, 1)
        swamps = {T.state_index(f"{x}_{y}") for x, y in gm.cells_of("X")}
        rep = reducibility(T)
        assert swamps <= rep.non_reducible
        assert rep.non_reducible == swamps
        assert len(gm.cells_of("J")) >= 1 and len(T.start_states) == 2

    def test_goal_restarts_at_every_start(self):
        _, T = bundled("swamp")
        g = T.state_index("7_4")
        assert T.tr(g, A["finish"]) == T.start_states and T.reward(g, A["finish"]) == 100

    def test_swamp_pocket_escapes_through_restart(self):
        # a dead-end swamp is non-reducible but its restart branch is an escape path
        text = grid("#######", "#S..G.#", "###.###", "###X###", "#######", goals=[(4, 1, 10)], variant="rr")
        T = compile_map(parse_map(text))
        assert reducibility(T).non_reducible == {T.state_index("3_3")}
        assert is_reducible(T)

    def test_unreducible_start_rejected(self):
        text = grid("#######", "#S#.G.#", "#######", goals=[(4, 1, 10)], variant="rr")
        with pytest.raises(MapError, match="start cells not reducible: 1_1"):
            compile_map(parse_map(text))

    def test_restart_probability_weights(self):
        gm = parse_map(read_text("swamp.map"))
        T = compile_map(gm, GridSemantics("rr", Fraction(1, 2)))
        x = T.state_index("4_1")
        idx = x * T.n_actions
        w = dict(zip(T.successors[idx], T.weights[idx]))
        restart = sum(w[s] for s in T.start_states)
        assert Fraction(restart, sum(w.values())) == Fraction(1, 2)
        assert T == compile_map(gm)  # weights only bias sampling

    @pytest.mark.parametrize("kwargs", [{"variant": "xx"}, {"swamp_restart_probability": Fraction(1)}, {"jump_multipliers": (1,)}])
    def test_semantics_validation(self, kwargs):
        with pytest.raises(MapError):
            GridSemantics(**kwargs)


class TestRender:
    def test_zero_values(self):
        gm, T = bundled("room")
        m = render_values(ValueFunction.zeros(T.n_states, T.n_actions), gm)
        assert m[0][0] is None and m[1][1] == 0
        assert {v for row in m for v in row} == {None, 0}
        pgm = matrix_to_pgm(m)
        assert pgm.startswith(b"P5\n12 12\n255\n") and set(pgm[len(b"P5\n12 12\n255\n"):]) == {0}

    def test_mismatched_task(self):
        gm, _ = bundled("room")
        with pytest.raises(MapError):
            render_values(ValueFunction.zeros(3, 5), gm)

    @pytest.mark.parametrize("K", [1, 2])
    def test_optimal_values_ramp_from_goal(self, K):
        gm, T = bundled("room")
        opt = an.optimal_values_iterate(T, K)
        for s in range(T.n_states):
            assert opt[s] == max(0, 100 - an.shortest_reward_distance(T, s) * K)
        m = render_state_values(opt, gm)
        assert m[8][9] == 100 - K
        assert max(v for row in m for v in row if v is not None) == 100 - K
        pgm = matrix_to_pgm(m)
        pixels = pgm[len(b"P5\n12 12\n255\n"):]
        assert pixels[8 * 12 + 9] == 255 and pixels.count(255) == 1

    def test_csv_round_trip(self):
        gm, T = bundled("spiral")
        m = render_state_values(an.optimal_values_iterate(T, 3), gm)
        text = matrix_to_csv(m)
        assert csv_to_matrix(text) == m
        assert "\r" not in text

    def test_pgm_scaling(self):
        assert matrix_to_pgm([[None, 0], [1, 2]]) == b"P5\n2 2\n255\n" + bytes([0, 0, 128, 255])
