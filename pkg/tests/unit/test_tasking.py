"""
Tests for the replicated task table and market-based allocation
"""

import itertools
import math
import random

import pytest

from models.frame import FrameId
from models.task import NO_OWNER, PriorityRegion, Task, TaskId, TaskKind, TaskState
from services.codecs import as_f32, encode_task
from services.tasking import (
    TaskAllocator,
    TaskingConfig,
    TaskTable,
    compare_claims,
    discounted_value,
    frontier_tier,
    merge_rows,
    region_effect,
)

FRAME = FrameId(1, 1)


def euclid(start, goals):
    return [math.dist(start, goal) for goal in goals]


def locate(task):
    return task.point


def row(version=0, state=TaskState.AVAILABLE, owner=NO_OWNER, bid=0.0, **changes):
    task = Task(TaskId(1, 1), TaskKind.EXPLORE, FRAME, (10.0, 0.0), 100.0, 2)
    return task.evolve(version=version, state=state, owner=owner, bid=bid, **changes)


@pytest.fixture
def outbox():
    return []


@pytest.fixture
def table(outbox):
    return TaskTable(1, publish=outbox.append)


class TestValuation:
    def test_discounted_value(self):
        assert discounted_value(100.0, 0.0) == pytest.approx(100.0)
        assert discounted_value(100.0, 120.0) == pytest.approx(100.0 / math.e)
        assert discounted_value(100.0, 0.0, multiplier=2.0) == pytest.approx(200.0)

    def test_negative_arrival_rejected(self):
        with pytest.raises(ValueError, match="cannot be negative"):
            discounted_value(100.0, -1.0)

    @pytest.mark.parametrize("size,tier", [(6.0, 3), (10.0, 3), (2.0, 2), (1.9, 1)])
    def test_frontier_tier(self, size, tier):
        assert frontier_tier(size) == tier

    def test_overlapping_regions_combine(self):
        """Test that multipliers multiply and the highest override wins"""
        regions = [
            PriorityRegion(1, (0, 0, 10, 10), priority_override=2, reward_multiplier=2.0),
            PriorityRegion(2, (5, 5, 20, 20), priority_override=3, reward_multiplier=1.5),
        ]

        assert region_effect((6, 6), TaskKind.EXPLORE, 1, regions) == (3, 3.0)
        assert region_effect((1, 1), TaskKind.EXPLORE, 1, regions) == (2, 2.0)
        assert region_effect((30, 30), TaskKind.EXPLORE, 1, regions) == (None, 1.0)
        assert region_effect(None, TaskKind.EXPLORE, 1, regions) == (None, 1.0)

    def test_region_filters_kind_and_agent(self):
        region = PriorityRegion(1, (0, 0, 10, 10), kinds=(TaskKind.EXPLORE,), agents=(2,), priority_override=3)

        assert region_effect((1, 1), TaskKind.EXPLORE, 2, [region]) == (3, 1.0)
        assert region_effect((1, 1), TaskKind.EXPLORE, 1, [region]) == (None, 1.0)
        assert region_effect((1, 1), TaskKind.DROP_NODE, 2, [region]) == (None, 1.0)


class TestClaimOrder:
    """Row and claim comparison"""

    def test_higher_bid_wins_within_version(self):
        low = row(1, TaskState.CLAIMED, owner=1, bid=50.0)
        high = row(1, TaskState.CLAIMED, owner=2, bid=60.0)

        assert compare_claims(low, high) is high
        assert compare_claims(high, low) is high

    def test_tie_goes_to_lower_agent(self):
        a = row(1, TaskState.CLAIMED, owner=1, bid=50.0)
        b = row(1, TaskState.CLAIMED, owner=2, bid=50.0)

        assert compare_claims(b, a) is a

    def test_newer_version_supersedes_any_bid(self):
        old = row(1, TaskState.CLAIMED, owner=1, bid=90.0)
        new = row(2, TaskState.CLAIMED, owner=2, bid=10.0)

        assert compare_claims(old, new) is new

    def test_claims_on_different_tasks_rejected(self):
        with pytest.raises(ValueError, match="different tasks"):
            compare_claims(row(), row().evolve(id=TaskId(2, 1)))

    def test_complete_beats_later_versions(self):
        done = row(1, TaskState.COMPLETE, owner=1)
        claimed = row(5, TaskState.CLAIMED, owner=2, bid=10.0)

        assert merge_rows(claimed, done) is done

    def test_merge_is_order_independent(self):
        """Test that folding the same rows in any order gives the same row"""
        rows = [
            row(1, TaskState.CLAIMED, owner=1, bid=40.0),
            row(1, TaskState.CLAIMED, owner=3, bid=55.0),
            row(2, TaskState.AVAILABLE, failures=1),
            row(2, TaskState.CLAIMED, owner=2, bid=20.0),
        ]
        results = set()
        for order in itertools.permutations(rows):
            merged = order[0]
            for other in order[1:]:
                merged = merge_rows(merged, other)
            results.add(merged)

        assert results == {row(2, TaskState.CLAIMED, owner=2, bid=20.0)}


class TestTaskTable:
    """Local mutations and merges"""

    def test_create_publishes_quantized_row(self, table, outbox):
        task = table.create(TaskKind.EXPLORE, FRAME, (0.1, 0.2), 100.0, tier=2)

        assert task.id == TaskId(1, 1)
        assert task.point == (as_f32(0.1), as_f32(0.2))
        assert outbox == [task]

    def test_claim_release_complete(self, table):
        task = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)

        claimed = table.claim(task.id, 42.0)
        assert (claimed.version, claimed.state, claimed.owner) == (1, TaskState.CLAIMED, 1)

        released = table.release(task.id)
        assert (released.version, released.state, released.owner) == (2, TaskState.AVAILABLE, NO_OWNER)

        done = table.complete(task.id)
        assert done.state == TaskState.COMPLETE
        assert table.complete(task.id) is done

    def test_outbidding_keeps_version(self, table):
        task = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        table.claim(task.id, 42.0)
        other = TaskTable(2)
        other.merge_row(table.get(task.id))

        outbid = other.claim(task.id, 50.0)

        assert outbid.version == 1
        assert outbid.owner == 2

    def test_repeated_failures_blacklist(self, table):
        task = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        for _ in range(2):
            table.claim(task.id, 10.0)
            assert table.report_failure(task.id, now=50.0).state == TaskState.AVAILABLE

        table.claim(task.id, 10.0)
        blacklisted = table.report_failure(task.id, now=50.0)

        assert blacklisted.state == TaskState.BLACKLISTED
        assert blacklisted.failures == 3
        assert blacklisted.blacklist_until == pytest.approx(170.0)
        assert not table.is_open(blacklisted, 169.0)
        assert table.is_open(blacklisted, 170.0)

        reclaimed = table.claim(task.id, 10.0, time=200.0)
        assert reclaimed.state == TaskState.CLAIMED
        assert reclaimed.blacklist_until == 0.0

    def test_claim_after_blacklist_expires_resets_failures(self, table):
        """Test that a reclaimed task gets a full set of attempts again"""
        task = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        for _ in range(3):
            table.claim(task.id, 10.0)
            table.report_failure(task.id, now=50.0)

        reclaimed = table.claim(task.id, 10.0, time=200.0)

        assert reclaimed.failures == 0
        assert table.report_failure(task.id, now=210.0).state == TaskState.AVAILABLE

    def test_release_keeps_failures(self, table):
        task = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        table.claim(task.id, 10.0)
        table.report_failure(task.id, now=50.0)

        assert table.claim(task.id, 10.0).failures == 1

    def test_own_rows_advance_sequence(self, table):
        table.merge_row(row().evolve(id=TaskId(1, 7)))
        assert table.next_id() == TaskId(1, 8)

    def test_stale_row_does_not_change_table(self, table):
        table.merge_row(row(3, TaskState.CLAIMED, owner=2, bid=5.0))
        assert table.merge_row(row(2, TaskState.CLAIMED, owner=1, bid=99.0)) is False

    def test_wire_rows_merge(self, table):
        sent = TaskTable(2).create(TaskKind.MANUAL, FRAME, (3.0, 4.0), 80.0, tier=2)

        merged = table.merge_payload(encode_task(sent))

        assert merged == sent
        assert table.merge_payload(encode_task(sent)) is None

    def test_malformed_row_counted(self, table):
        assert table.merge_payload(b"\x01") is None
        assert table.malformed == 1
        assert len(table) == 0


class TestAllocation:
    """Bidding, bundles and execution order"""

    def test_best_tier_claimed_first(self, table):
        near = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0, tier=1)
        far = table.create(TaskKind.EXPLORE, FRAME, (20.0, 0.0), 100.0, tier=3)
        allocator = TaskAllocator(1, table)

        assert allocator.bid_round((0.0, 0.0), 0.0, locate, euclid).id == far.id

        claimed = allocator.bid_round((0.0, 0.0), 2.0, locate, euclid)

        assert claimed.id == near.id
        assert claimed.bid == pytest.approx(100.0 * math.exp(-1.0 / 120.0), rel=1e-6)
        assert allocator.bundle.task_ids == [near.id, far.id]
        assert allocator.select_next(locate).id == far.id

    def test_priority_region_lifts_tier(self, table):
        near = table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0, tier=1)
        table.create(TaskKind.EXPLORE, FRAME, (20.0, 0.0), 100.0, tier=3)
        allocator = TaskAllocator(1, table, regions=[PriorityRegion(1, (0, -1, 2, 1), priority_override=3)])

        assert allocator.bid_round((0.0, 0.0), 0.0, locate, euclid).id == near.id

    def test_capacity_limits_bundle(self, outbox):
        table = TaskTable(1, TaskingConfig(bundle_capacity=1), publish=outbox.append)
        table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        table.create(TaskKind.EXPLORE, FRAME, (2.0, 0.0), 100.0)
        allocator = TaskAllocator(1, table)

        assert allocator.bid_round((0.0, 0.0), 0.0, locate, euclid) is not None
        assert allocator.bid_round((0.0, 0.0), 2.0, locate, euclid) is None
        assert len(allocator.bundle) == 1

    def test_ineligible_and_unreachable_skipped(self, table):
        table.create(TaskKind.DROP_NODE, FRAME, (1.0, 0.0), 50.0)
        table.create(TaskKind.EXPLORE, FRAME, (2.0, 0.0), 100.0)
        allocator = TaskAllocator(1, table)

        def nowhere(start, goals):
            return [None] * len(goals)

        assert allocator.bid_round((0.0, 0.0), 0.0, locate, nowhere) is None
        assert allocator.bid_round(
            (0.0, 0.0), 0.0, locate, euclid, eligible=lambda t: t.kind == TaskKind.DROP_NODE
        ).kind == TaskKind.DROP_NODE

    def test_release_all_empties_bundle(self, table):
        table.create(TaskKind.EXPLORE, FRAME, (1.0, 0.0), 100.0)
        allocator = TaskAllocator(1, table)
        allocator.bid_round((0.0, 0.0), 0.0, locate, euclid)

        released = allocator.release_all(5.0)

        assert [r.state for r in released] == [TaskState.AVAILABLE]
        assert len(allocator.bundle) == 0


class TestPartitionHeal:
    """Two agents claiming the same task while disconnected"""

    def test_single_owner_after_exchange(self):
        outbox_1, outbox_2 = [], []
        table_1 = TaskTable(1, publish=outbox_1.append)
        table_2 = TaskTable(2, publish=outbox_2.append)
        task = table_1.create(TaskKind.EXPLORE, FRAME, (10.0, 0.0), 100.0, tier=2)
        table_2.merge_row(task)
        agent_1 = TaskAllocator(1, table_1)
        agent_2 = TaskAllocator(2, table_2)

        agent_1.bid_round((0.0, 0.0), 0.0, locate, euclid)
        agent_2.bid_round((5.0, 0.0), 0.0, locate, euclid)
        table_1.consensus_merge(outbox_2)
        table_2.consensus_merge(outbox_1)

        assert table_1.get(task.id) == table_2.get(task.id)
        assert table_1.get(task.id).owner == 2
        assert agent_1.prune() == [task.id]
        assert agent_2.prune() == []

    def test_loser_cannot_outbid_winner(self):
        table = TaskTable(1)
        winner = row(1, TaskState.CLAIMED, owner=2, bid=as_f32(100.0 * math.exp(-5.0 / 120.0)))
        table.merge_row(winner)

        assert TaskAllocator(1, table).bid_round((0.0, 0.0), 1.0, locate, euclid) is None


class TestGreedyAuctionEquivalence:
    """Single-task bundles over full connectivity settle on the centralized greedy assignment"""

    def greedy(self, agents, tasks, tau):
        bids = {
            (agent, task_id): as_f32(discounted_value(reward, math.dist(start, point), tau))
            for agent, start in agents.items()
            for task_id, (point, reward) in tasks.items()
        }
        assignment = {}
        while bids:
            # Highest bid, then lower agent id, then lower task id
            (agent, task_id), _ = min(bids.items(), key=lambda item: (-item[1], item[0][0], item[0][1]))
            assignment[task_id] = agent
            bids = {k: v for k, v in bids.items() if k[0] != agent and k[1] != task_id}
        return assignment

    def consensus(self, agents, tasks, config):
        outboxes = {agent: [] for agent in agents}
        tables = {agent: TaskTable(agent, config, publish=outboxes[agent].append) for agent in agents}
        allocators = {agent: TaskAllocator(agent, tables[agent]) for agent in agents}
        creator = min(agents)
        points = {}
        for task_id, (point, reward) in tasks.items():
            created = tables[creator].create(TaskKind.EXPLORE, FRAME, point, reward, tier=2, task_id=task_id)
            points[task_id] = created.point
            for agent in agents:
                if agent != creator:
                    tables[agent].merge_row(created)
        outboxes[creator].clear()

        for round_index in range(100):
            for agent in sorted(agents):
                allocators[agent].bid_round(agents[agent], float(round_index), locate, euclid)
            sent = [(agent, r) for agent in sorted(agents) for r in outboxes[agent]]
            if not sent:
                break
            for box in outboxes.values():
                box.clear()
            for agent in agents:
                tables[agent].consensus_merge(r for sender, r in sent if sender != agent)
        return tables

    @pytest.mark.parametrize("instance", range(200))
    def test_matches_brute_force_greedy(self, instance):
        rng = random.Random(instance)
        config = TaskingConfig(bundle_capacity=1)
        agents = {a: (rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)) for a in range(1, rng.randint(1, 4) + 1)}
        tasks = {
            TaskId(1, k): ((rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)), rng.uniform(10.0, 100.0))
            for k in range(1, rng.randint(1, 6) + 1)
        }

        tables = self.consensus(agents, tasks, config)

        first = tables[min(agents)].rows
        assert all(t.rows == first for t in tables.values())
        quantized = {
            task_id: ((as_f32(point[0]), as_f32(point[1])), as_f32(reward))
            for task_id, (point, reward) in tasks.items()
        }
        expected = self.greedy(agents, quantized, config.tau)
        owners = {task_id: row.owner for task_id, row in first.items() if row.is_claimed}
        assert owners == expected
