"""Tests for prediction-order layouts and complexity closed forms."""

import pytest

from uniseq.layouts import (
    LAYOUT_NAMES,
    attention_cost,
    attention_cost_multiscale,
    brute_force_visibility,
    get_layout,
    layout_coarse_first,
    layout_delay,
    layout_flatten,
    layout_multiscale,
    layout_parallel,
    render_layout,
    visible_set,
)


class TestFlatten:
    def test_step_order(self):
        spec = layout_flatten(2, 3)
        assert [next(iter(s)) for s in spec.steps] == [
            (1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]

    def test_visibility_is_prefix(self):
        spec = layout_flatten(3, 2)
        assert visible_set(spec, (2, 2)) == frozenset(
            {(1, 1), (1, 2), (2, 1)})

    def test_first_cell_sees_nothing(self):
        assert visible_set(layout_flatten(4, 4), (1, 1)) == frozenset()


class TestCoarseFirst:
    def test_nine_steps_level_major(self):
        spec = layout_coarse_first(3, 3)
        assert len(spec.steps) == 9
        assert [next(iter(s)) for s in spec.steps[:4]] == [
            (1, 1), (2, 1), (3, 1), (1, 2)]

    def test_level_two_sees_all_of_level_one(self):
        spec = layout_coarse_first(3, 3)
        assert (3, 1) in visible_set(spec, (1, 2))

    def test_nq1_equals_flatten(self):
        a, b = layout_coarse_first(4, 1), layout_flatten(4, 1)
        assert a.steps == b.steps


class TestParallel:
    def test_three_steps_width_three(self):
        spec = layout_parallel(3, 3)
        assert len(spec.steps) == 3
        assert all(len(s) == 3 for s in spec.steps)

    def test_no_within_frame_visibility(self):
        spec = layout_parallel(3, 3)
        for k in range(1, 4):
            assert not any(t == 2 for t, _ in visible_set(spec, (2, k)))

    def test_sees_all_previous_frames(self):
        spec = layout_parallel(3, 2)
        assert visible_set(spec, (3, 1)) == frozenset(
            {(t, k) for t in (1, 2) for k in (1, 2)})


class TestDelay:
    def test_five_step_structure(self):
        spec = layout_delay(3, 3)
        assert [set(s) for s in spec.steps] == [
            {(1, 1)},
            {(2, 1), (1, 2)},
            {(3, 1), (2, 2), (1, 3)},
            {(3, 2), (2, 3)},
            {(3, 3)},
        ]

    def test_visibility_step_arithmetic(self):
        spec = layout_delay(3, 3)
        vis = visible_set(spec, (2, 2))
        assert (2, 1) in vis and (1, 2) in vis
        assert (1, 3) not in vis  # co-emitted at the same step

    def test_padding_cells(self):
        spec = layout_delay(3, 3)
        # rows 2 and 3 are padded before their first emission
        assert (1, 2) in spec.padding
        assert (1, 3) in spec.padding and (2, 3) in spec.padding

    def test_nq1_is_flatten_no_padding(self):
        spec = layout_delay(5, 1)
        assert spec.steps == layout_flatten(5, 1).steps
        assert spec.padding == set()

    def test_render_matches_diagonal_grid(self):
        text = render_layout(layout_delay(3, 3))
        lines = text.splitlines()
        assert "steps=5" in lines[0]
        assert lines[1].endswith("1  2  3")
        assert lines[2].endswith("2  3  4")
        assert lines[3].endswith("3  4  5")


class TestOracleEquivalence:
    @pytest.mark.parametrize("name", LAYOUT_NAMES)
    def test_brute_force_matches_visible_set(self, name):
        for t in range(1, 5):
            for n_q in range(1, 5):
                spec = get_layout(name, t, n_q)
                for cell in spec.cells():
                    assert visible_set(spec, cell) == \
                        brute_force_visibility(spec, cell), (name, t, n_q, cell)

    def test_multiscale_equals_flatten_cell_for_cell(self):
        for t in range(1, 5):
            for n_q in range(1, 5):
                ms = layout_multiscale(t, n_q)
                fl = layout_flatten(t, n_q)
                for cell in ms.cells():
                    assert visible_set(ms, cell) == visible_set(fl, cell)

    def test_cell_outside_grid_error(self):
        with pytest.raises(ValueError):
            visible_set(layout_flatten(2, 2), (3, 1))

    def test_unknown_layout_error(self):
        with pytest.raises(ValueError, match="unknown layout"):
            get_layout("zigzag", 2, 2)


class TestAttentionCost:
    def test_reference_counts(self):
        assert attention_cost("flatten", 3, 3, 1) == (81, 9)
        assert attention_cost_multiscale(3, 3, 1, 1) == (9 + 27, 3)

    def test_doubling_t_quadruples_flatten(self):
        e1, _ = attention_cost("flatten", 8, 2, 3)
        e2, _ = attention_cost("flatten", 16, 2, 3)
        assert e2 == 4 * e1

    def test_lengths(self):
        assert attention_cost("parallel", 10, 4, 2)[1] == 10
        assert attention_cost("delay", 10, 4, 2)[1] == 13
        assert attention_cost("coarse_first", 10, 4, 2)[1] == 40

    def test_multiscale_global_term_independent_of_nq(self):
        costs = [attention_cost("multiscale", 16, n_q, (4, 2))[0]
                 - 16 * n_q * n_q * 2 for n_q in (1, 2, 4, 8)]
        assert len(set(costs)) == 1

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            attention_cost("flatten", 0, 3, 1)
