"""
Tests for grid planning over an agent's observed map
"""

import math

import numpy as np
import pytest

from models.world import CellKind, KnownMap
from services.navigation import grid_path, nearest_open_cell, plan_local, segment_clear, shortcut


def fully_known(world):
    known = KnownMap(world.rows, world.cols, world.cell_size)
    walls = world.cells == CellKind.WALL
    known.update(np.argwhere(~walls), np.argwhere(walls), world)
    return known


class TestGridPath:
    """Exact 8-connected shortest paths"""

    def test_diagonal_across_open_grid(self):
        mask = np.ones((5, 5), dtype=bool)

        cells, cost = grid_path(mask, np.ones((5, 5)), (0, 0), (4, 4))

        assert cells == [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]
        assert cost == pytest.approx(4 * math.sqrt(2))

    def test_no_corner_cutting(self):
        mask = np.ones((2, 2), dtype=bool)
        mask[0, 1] = False

        cells, cost = grid_path(mask, np.ones((2, 2)), (0, 0), (1, 1))

        assert cells == [(0, 0), (1, 0), (1, 1)]
        assert cost == pytest.approx(2.0)

    def test_cost_is_mean_of_cells(self):
        cells, cost = grid_path(np.ones((1, 3), dtype=bool), np.array([[1.0, 2.0, 1.0]]), (0, 0), (0, 2))

        assert len(cells) == 3
        assert cost == pytest.approx(3.0)

    def test_walled_off_goal(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[:, 1] = False

        assert grid_path(mask, np.ones((3, 3)), (0, 0), (0, 2)) == (None, math.inf)

    def test_closed_start(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[0, 0] = False

        cells, cost = grid_path(mask, np.ones((3, 3)), (0, 0), (2, 2))

        assert cells is None
        assert cost == math.inf


class TestGridHelpers:
    def test_nearest_open_cell(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 3] = True

        assert nearest_open_cell(mask, 1.0, (3.4, 2.4), radius=1.0) == (2, 3)
        assert nearest_open_cell(mask, 1.0, (0.5, 0.5), radius=1.0) is None
        assert nearest_open_cell(np.zeros((2, 2), dtype=bool), 1.0, (0.5, 0.5), radius=5.0) is None

    def test_nearest_open_cell_with_window_offset(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = True

        assert nearest_open_cell(mask, 1.0, (10.5, 20.5), radius=0.5, offset=(20, 10)) == (0, 0)

    def test_segment_clear(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False

        assert segment_clear(mask, 1.0, (0.5, 0.5), (2.5, 0.5))
        assert not segment_clear(mask, 1.0, (0.5, 0.5), (2.5, 2.5))
        assert not segment_clear(mask, 1.0, (0.5, 0.5), (5.0, 0.5))

    def test_shortcut_collapses_straight_runs(self):
        points = [(0.5 + i, 0.5) for i in range(6)]
        assert shortcut(points, np.ones((1, 6), dtype=bool), 1.0, (0, 0), horizon=40) == [points[0], points[-1]]


class TestPlanLocal:
    def test_straight_corridor(self, corridor_world):
        known = fully_known(corridor_world)

        path = plan_local(known, (1.0, 1.125), (10.0, 1.125), passage_width=0.75, ignores_rough=False)

        assert path == [(10.0, 1.125)]

    def test_goal_in_wall_snaps_to_open_cell(self, corridor_world):
        known = fully_known(corridor_world)

        path = plan_local(known, (1.0, 1.125), (10.1, 0.1), passage_width=0.75, ignores_rough=False)

        assert path[-1] == pytest.approx((10.125, 0.375))

    def test_unknown_map_has_no_path(self, corridor_world):
        known = KnownMap(corridor_world.rows, corridor_world.cols, corridor_world.cell_size)

        assert plan_local(known, (1.0, 1.125), (10.0, 1.125), passage_width=0.75, ignores_rough=False) is None
