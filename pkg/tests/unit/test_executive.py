"""
Tests for command list parsing and the behaviour FSAs
"""

from unittest.mock import MagicMock

import pytest

from models.frame import FrameId
from models.task import Task, TaskId, TaskKind
from services.executive import (
    CommandListParseError,
    ExploreBehaviour,
    Executive,
    GotoBehaviour,
    LaunchUavBehaviour,
    SequenceFsa,
    Status,
    SyncBehaviour,
    WaitBehaviour,
    drop_comms_node,
    parse,
)
from services.navigation import NavStatus
from services.netsim import DropNodeUnavailable


@pytest.fixture
def ctx():
    """Agent context whose navigator is already at its goal"""
    context = MagicMock()
    context.agent_id = 1
    context.navigator.status = NavStatus.ACTIVE
    context.navigator.distance_to_goal.return_value = 0.0
    context.believed_position.return_value = (2.0, 3.0)
    return context


def explore_task(seq=1):
    return Task(TaskId(1, seq), TaskKind.EXPLORE, FrameId(1, 1), (3.0, 0.0), 20.0, 2)


class TestParse:
    """Command list grammar"""

    def test_statements_by_semicolon_and_newline(self):
        fsa = parse("goto 1 2; wait 3\nexplore")

        assert [type(c) for c in fsa.children] == [GotoBehaviour, WaitBehaviour, ExploreBehaviour]
        assert fsa.children[0].goal == (1.0, 2.0)
        assert fsa.children[1].seconds == 3.0

    def test_optional_drop_point(self):
        assert parse("drop-comms-node").children[0].children[0].goal is None
        assert parse("drop-comms-node 4 5").children[0].children[0].goal == (4.0, 5.0)

    def test_sync_policy_variant(self):
        assert parse("explore-with-sync-policy").children[0].sync_policy is True

    def test_empty_list_has_already_succeeded(self):
        assert parse("").status == Status.SUCCEEDED
        assert parse("  ;\n ; ").status == Status.SUCCEEDED

    def test_unknown_behaviour_position(self):
        with pytest.raises(CommandListParseError) as error:
            parse("goto 1 2; fly")

        assert (error.value.line, error.value.column) == (1, 11)
        assert "unknown behaviour 'fly'" in str(error.value)

    def test_bad_number_position(self):
        with pytest.raises(CommandListParseError) as error:
            parse("wait 1\ngoto 1 x")

        assert (error.value.line, error.value.column) == (2, 8)

    @pytest.mark.parametrize("text", ["wait", "goto 1", "drop-comms-node 1", "explore now"])
    def test_wrong_arity(self, text):
        with pytest.raises(CommandListParseError, match="argument"):
            parse(text)

    @pytest.mark.parametrize("text", ["wait -1", "goto 1 nan", "goto inf 2"])
    def test_invalid_values(self, text):
        with pytest.raises(CommandListParseError):
            parse(text)


class TestSequenceFsa:
    """Advancement on ticks only"""

    def test_children_advance_one_per_tick(self, ctx):
        fsa = SequenceFsa([WaitBehaviour(2.0), WaitBehaviour(0.0)])

        statuses = [fsa.tick(ctx, float(t)) for t in range(5)]

        assert statuses == [Status.RUNNING] * 3 + [Status.SUCCEEDED] * 2
        assert fsa.entries == 2
        assert fsa.exits == 2

    def test_failed_child_fails_sequence(self, ctx):
        ctx.launch_uav.return_value = None
        after = WaitBehaviour(0.0)
        fsa = SequenceFsa([LaunchUavBehaviour(), after])

        assert fsa.tick(ctx, 0.0) == Status.FAILED
        assert fsa.tick(ctx, 1.0) == Status.FAILED
        assert fsa.entries == 1

    def test_no_command_between_ticks_once_stopped(self, ctx):
        executive = Executive(1)
        executive.load(ctx, "wait 0", 0.0)
        executive.tick(ctx, 0.0)

        assert executive.status == Status.SUCCEEDED
        assert executive.update(ctx, 0.5).speed == 0.0


class TestBehaviours:
    def test_goto_reports_navigation_failure(self, ctx):
        ctx.navigator.distance_to_goal.return_value = 5.0
        ctx.navigator.status = NavStatus.FAILED
        ctx.navigator.reason = "no path"
        goto = GotoBehaviour((9.0, 9.0))

        goto.enter(ctx, 0.0)

        assert goto.tick(ctx, 0.0) == Status.FAILED
        ctx.report_navigation_failure.assert_called_once_with((9.0, 9.0), "no path")

    def test_goto_without_goal_holds_position(self, ctx):
        goto = GotoBehaviour()
        goto.enter(ctx, 0.0)
        ctx.navigator.set_goal.assert_called_once_with((2.0, 3.0), 0.5)

    def test_sync_heads_for_target_until_base_reachable(self, ctx):
        ctx.synced_since.return_value = False
        ctx.base_reachable.return_value = False
        ctx.sync_target.return_value = (0.0, 0.0)
        sync = SyncBehaviour()
        sync.enter(ctx, 10.0)

        assert sync.tick(ctx, 10.0) == Status.RUNNING
        assert sync.tick(ctx, 11.0) == Status.RUNNING
        ctx.navigator.set_goal.assert_called_once_with((0.0, 0.0), 1.0)

        ctx.base_reachable.return_value = True
        assert sync.tick(ctx, 12.0) == Status.RUNNING
        ctx.navigator.clear.assert_called_once()

        ctx.synced_since.return_value = True
        assert sync.tick(ctx, 13.0) == Status.SUCCEEDED
        ctx.synced_since.assert_called_with(10.0)

    def test_drop_comms_node_then_retreat(self, ctx):
        """Test goto, deploy and retreat on three consecutive ticks"""
        ctx.drop_node.return_value = (5.0, 5.0)
        ctx.retreat_point.return_value = (6.5, 5.0)
        ctx.believed_position.return_value = (6.5, 5.0)
        fsa = drop_comms_node((5.0, 5.0))

        assert fsa.tick(ctx, 0.0) == Status.RUNNING
        assert fsa.tick(ctx, 1.0) == Status.RUNNING
        assert fsa.tick(ctx, 2.0) == Status.SUCCEEDED
        ctx.retreat_point.assert_called_once_with((5.0, 5.0), 1.5)

    def test_retreat_waits_for_clearance(self, ctx):
        ctx.drop_node.return_value = (5.0, 5.0)
        ctx.believed_position.return_value = (5.2, 5.0)
        fsa = drop_comms_node((5.0, 5.0))

        statuses = [fsa.tick(ctx, float(t)) for t in range(4)]

        assert statuses[-1] == Status.RUNNING

    def test_deploy_without_node_fails(self, ctx):
        ctx.drop_node.side_effect = DropNodeUnavailable("none left")
        fsa = drop_comms_node()

        fsa.tick(ctx, 0.0)

        assert fsa.tick(ctx, 1.0) == Status.FAILED


class TestExplore:
    """Executing whatever the allocator selects"""

    def test_finishes_when_nothing_left(self, ctx):
        ctx.allocator.select_next.return_value = None
        ctx.exploration_finished.return_value = True
        explore = ExploreBehaviour()

        explore.enter(ctx, 0.0)

        assert explore.tick(ctx, 0.0) == Status.SUCCEEDED
        ctx.start_mrta.assert_called_once_with(False)

    def test_culled_frontier_completes_task(self, ctx):
        task = explore_task()
        ctx.allocator.select_next.return_value = task
        ctx.locate_task.return_value = (3.0, 0.0)
        ctx.task_satisfied.return_value = False
        ctx.navigator.distance_to_goal.return_value = 3.0
        explore = ExploreBehaviour()
        explore.enter(ctx, 0.0)

        assert explore.tick(ctx, 0.0) == Status.RUNNING
        ctx.begin_task.assert_called_once_with(task)

        ctx.task_satisfied.return_value = True
        explore.tick(ctx, 1.0)

        ctx.complete_task.assert_called_once_with(task.id)
        assert explore.task is None

    def test_new_selection_preempts_current(self, ctx):
        ctx.locate_task.return_value = (3.0, 0.0)
        ctx.task_satisfied.return_value = False
        ctx.navigator.distance_to_goal.return_value = 3.0
        first, second = explore_task(1), explore_task(2)
        explore = ExploreBehaviour()
        ctx.allocator.select_next.return_value = first
        explore.tick(ctx, 0.0)

        ctx.allocator.select_next.return_value = second
        explore.tick(ctx, 1.0)

        assert explore.task == second
        ctx.navigator.clear.assert_called_once()
        ctx.complete_task.assert_not_called()

    def test_exit_stops_allocation(self, ctx):
        explore = ExploreBehaviour(sync_policy=True)
        explore.enter(ctx, 0.0)
        explore.exit(ctx, 1.0)

        ctx.start_mrta.assert_called_once_with(True)
        ctx.stop_mrta.assert_called_once()


class TestExecutive:
    def test_bad_list_keeps_current_running(self, ctx):
        executive = Executive(1)
        current = executive.load(ctx, "wait 100", 0.0)
        executive.tick(ctx, 0.0)

        with pytest.raises(CommandListParseError):
            executive.load(ctx, "wait x", 1.0)

        assert executive.fsa is current
        assert executive.status == Status.RUNNING

    def test_replacing_list_exits_running_behaviour(self, ctx):
        executive = Executive(1)
        executive.load(ctx, "goto 5 5", 0.0)
        ctx.navigator.distance_to_goal.return_value = 3.0
        executive.tick(ctx, 0.0)

        executive.load(ctx, "wait 1", 1.0)

        ctx.navigator.clear.assert_called_once()
        assert executive.text == "wait 1"

    def test_tick_schedule(self, ctx):
        executive = Executive(1)

        assert executive.due(0.0)
        executive.tick(ctx, 0.0)

        assert not executive.due(0.5)
        assert executive.due(1.0)
        assert executive.ticks == 0
