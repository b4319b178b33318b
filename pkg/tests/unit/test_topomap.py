"""
Tests for costmap submaps, supercell segmentation and topometric planning
"""

import numpy as np
import pytest

from models.frame import FrameId
from models.geometry import Pose2
from models.topomap import FATAL, SUBMAP_ORIGIN, CostmapBundle, Submap
from models.world import AgentKind
from services.topomap import (
    TopoMap,
    cost_code,
    merge_cells,
    merge_costmap,
    segment,
    submap_anchor,
)

FRAME_A = FrameId(1, 1)
FRAME_B = FrameId(1, 2)


class StubAtlas:
    """Just the pose lookups the topometric map needs"""

    def __init__(self, poses):
        self.poses = dict(poses)
        self.odom = dict(poses)

    def pose_of(self, frame_id):
        return self.poses.get(frame_id)


def corridor_bundle(frame_ref, length=30, code=10, walled=False):
    """Two free rows starting at the anchor origin, optionally between fatal rows"""
    cells = np.full((2, length), code, dtype=np.uint8)
    origin = (0, 0)
    if walled:
        wall = np.full((1, length), FATAL, dtype=np.uint8)
        cells = np.vstack([wall, cells, wall])
        origin = (0, -1)
    return CostmapBundle(frame_ref=frame_ref, origin=origin, cells=cells)


class TestCostCodes:
    def test_cost_code_scales_and_clips(self):
        assert cost_code(np.array([0.5, 1.0, 2.0, 30.0])).tolist() == [10, 10, 20, 254]

    def test_merge_rules(self):
        grid = np.array([0, 20, 30, FATAL, 0], dtype=np.uint8)
        cells = np.array([15, 0, 20, 10, FATAL], dtype=np.uint8)

        assert merge_cells(grid, cells).tolist() == [15, 20, 20, FATAL, FATAL]

    def test_submap_anchor_snaps_to_resolution(self):
        anchor = submap_anchor(Pose2(1.3, 2.6))

        assert anchor.x == pytest.approx(-0.05)
        assert anchor.y == pytest.approx(-0.1)
        assert anchor.theta == 0.0

    def test_merge_costmap_reports_change(self):
        submap = Submap(root_frame=FRAME_A, anchor=Pose2())
        bundle = CostmapBundle(FRAME_A, (SUBMAP_ORIGIN, SUBMAP_ORIGIN), np.full((2, 2), 20, dtype=np.uint8))

        assert merge_costmap(submap, bundle) is True
        assert submap.grid[:2, :2].tolist() == [[20, 20], [20, 20]]
        assert merge_costmap(submap, bundle) is False

    def test_bundle_outside_submap_ignored(self):
        submap = Submap(root_frame=FRAME_A, anchor=Pose2())
        bundle = CostmapBundle(FRAME_A, (500, 500), np.full((2, 2), 20, dtype=np.uint8))

        assert merge_costmap(submap, bundle) is False


class TestSegment:
    """Deterministic region growing"""

    def test_uniform_patch_is_one_supercell(self):
        submap = Submap(root_frame=FRAME_A, anchor=Pose2())
        merge_costmap(submap, CostmapBundle(FRAME_A, (0, 0), np.full((4, 4), 10, dtype=np.uint8)))

        cells, labels = segment(submap)

        assert len(cells) == 1
        assert len(cells[0].cells) == 16
        assert cells[0].centroid == pytest.approx((0.5, 0.5))
        assert cells[0].mean_cost == pytest.approx(1.0)
        assert not submap.dirty
        assert (labels >= 0).sum() == 16

    def test_cost_step_splits_regions(self):
        patch = np.full((4, 4), 10, dtype=np.uint8)
        patch[:, 2:] = 30
        submap = Submap(root_frame=FRAME_A, anchor=Pose2())
        merge_costmap(submap, CostmapBundle(FRAME_A, (0, 0), patch))

        cells, _ = segment(submap)

        assert sorted(c.mean_cost for c in cells) == pytest.approx([1.0, 3.0])

    def test_same_input_same_segmentation(self):
        patch = np.random.default_rng(5).integers(10, 40, size=(12, 12)).astype(np.uint8)
        first = Submap(root_frame=FRAME_A, anchor=Pose2())
        second = Submap(root_frame=FRAME_A, anchor=Pose2())
        merge_costmap(first, CostmapBundle(FRAME_A, (0, 0), patch))
        merge_costmap(second, CostmapBundle(FRAME_A, (0, 0), patch))

        assert np.array_equal(segment(first)[1], segment(second)[1])


class TestTopoMapPlanning:
    """Shortest-time routes across supercells"""

    def topomap(self, bundles, poses):
        atlas = StubAtlas(poses)
        topo = TopoMap()
        for bundle in bundles:
            topo.add_bundle(bundle, atlas)
        topo.refresh(atlas)
        return topo, atlas

    def test_route_ends_at_goal(self):
        topo, atlas = self.topomap([corridor_bundle(FRAME_A)], {FRAME_A: Pose2()})

        plan = topo.plan((0.1, 0.25), (7.4, 0.25), AgentKind.SMALL_UGV, 1.0, 0.5, atlas)

        assert plan is not None
        assert plan.waypoints[-1] == (7.4, 0.25)
        assert plan.cost == pytest.approx(7.3, rel=0.05)

    def test_rough_cost_ignored_by_uav(self):
        topo, atlas = self.topomap([corridor_bundle(FRAME_A, code=30)], {FRAME_A: Pose2()})

        ugv = topo.plan((0.1, 0.25), (7.4, 0.25), AgentKind.SMALL_UGV, 1.0, 0.5, atlas)
        uav = topo.plan((0.1, 0.25), (7.4, 0.25), AgentKind.UAV, 1.0, 0.5, atlas)

        assert ugv.cost == pytest.approx(3.0 * uav.cost, rel=0.01)

    def test_narrow_corridor_excludes_wide_platform(self):
        topo, atlas = self.topomap([corridor_bundle(FRAME_A, walled=True)], {FRAME_A: Pose2()})

        assert topo.plan((0.1, 0.25), (7.4, 0.25), AgentKind.SMALL_UGV, 1.0, 0.5, atlas) is not None
        assert topo.plan((0.1, 0.25), (7.4, 0.25), AgentKind.LARGE_UGV, 1.0, 1.0, atlas) is None

    def test_route_crosses_submaps(self):
        """Test that overlapping submaps of two root frames are linked"""
        poses = {FRAME_A: Pose2(), FRAME_B: Pose2(5.0, 0.0)}
        topo, atlas = self.topomap([corridor_bundle(FRAME_A), corridor_bundle(FRAME_B)], poses)

        plan = topo.plan((0.5, 0.25), (12.0, 0.25), AgentKind.SMALL_UGV, 1.0, 0.5, atlas)

        assert plan is not None
        assert {s.frame for s in plan.supercells} == {FRAME_A, FRAME_B}

    def test_travel_times_to_many_goals(self):
        topo, atlas = self.topomap([corridor_bundle(FRAME_A)], {FRAME_A: Pose2()})

        times = topo.travel_times((0.1, 0.25), [(3.0, 0.25), (7.4, 0.25), (40.0, 40.0)], AgentKind.SMALL_UGV, 1.0, 0.5, atlas)

        assert times[0] < times[1]
        assert times[2] is None

    def test_bundle_for_unknown_frame_waits(self):
        atlas = StubAtlas({})
        topo = TopoMap()

        assert topo.add_bundle(corridor_bundle(FRAME_A), atlas) is False
        assert len(topo.pending) == 1

        atlas.odom[FRAME_A] = Pose2()
        assert topo.flush_pending(atlas) == 1
        assert FRAME_A in topo.submaps


class TestIncrementalEdges:
    """Inter-submap edges follow relative pose changes"""

    FRAME_C = FrameId(1, 3)

    def build(self, atlas):
        topo = TopoMap()
        for frame_id in (FRAME_A, FRAME_B, self.FRAME_C):
            topo.add_bundle(corridor_bundle(frame_id), atlas)
        topo.refresh(atlas)
        return topo

    def edges(self, topo):
        return {frozenset((a, b)): data for a, b, data in topo.graph.edges(data=True)}

    @pytest.fixture
    def atlas(self):
        return StubAtlas({FRAME_A: Pose2(), FRAME_B: Pose2(5.0, 0.0), self.FRAME_C: Pose2(10.0, 0.0)})

    def test_nothing_moved_recomputes_nothing(self, atlas):
        topo = self.build(atlas)

        assert topo.rebuild_edges(atlas) == 0

    def test_shift_matches_full_rebuild(self, atlas):
        topo = self.build(atlas)
        atlas.poses[self.FRAME_C] = Pose2(12.0, 0.0)

        assert topo.rebuild_edges(atlas) == 2

        assert self.edges(topo) == self.edges(self.build(atlas))
