import pytest

from gazefetch.assembly import builtin_plan
from gazefetch.gaze import MeanGaze
from gazefetch.orchestrator import (
    LOG_DELIVERY,
    LOG_FAULT,
    SELECTED_TEMPLATE,
    AnnouncementKind,
    IntentEvent,
    IntentSource,
    Orchestrator,
    OrchestratorConfig,
    RobotEvent,
    RobotPhase,
)
from gazefetch.perception import BBox, DetectionFrame, Viewpoint


def mg(x, y):
    return MeanGaze(x, y, 15, 700_000)


def frames_for_plan(t_us=0):
    """One box per part; user view and robot view share labels."""
    user_boxes = [
        BBox("peg_grey", 1500, 400, 1580, 480),
        BBox("gear_large", 100, 100, 180, 180),
        BBox("gear_medium", 300, 100, 380, 180),
        BBox("gear_small", 500, 100, 580, 180),
        BBox("cap_grey", 700, 100, 780, 180),
    ]
    robot_boxes = [
        BBox("gear_large", 100, 100, 180, 180),
        BBox("gear_medium", 300, 100, 380, 180),
        BBox("gear_small", 500, 100, 580, 180),
        BBox("cap_grey", 700, 100, 780, 180),
    ]
    return (
        DetectionFrame(Viewpoint.USER, t_us, tuple(user_boxes), 1920, 1080),
        DetectionFrame(Viewpoint.ROBOT, t_us, tuple(robot_boxes), 1920, 1080),
    )


def make_orchestrator(**kwargs):
    orch = Orchestrator(builtin_plan("gear_assembly"), OrchestratorConfig(**kwargs))
    user, robot = frames_for_plan()
    orch.observe_frame(user)
    orch.observe_frame(robot)
    orch.state.mark_assembled(orch.plan, "peg")
    return orch


class TestDwell:
    def test_first_matching_emission_fires_with_threshold_one(self):
        orch = make_orchestrator()
        intent = orch.on_mean_gaze(mg(140, 140), 1000)
        assert intent is not None
        assert intent.label == "gear_large"
        assert intent.source is IntentSource.GAZE
        assert intent.dwell_emissions == 1

    def test_counter_automaton_with_threshold_three(self):
        # Emissions resolving A,A,B,A,A,A fire on the sixth, label A.
        orch = make_orchestrator(dwell_threshold=3)
        a = (140, 140)  # gear_large
        b = (340, 140)  # gear_medium
        sequence = [a, a, b, a, a, a]
        fired = []
        for i, (x, y) in enumerate(sequence):
            intent = orch.on_mean_gaze(mg(x, y), 1000 + i)
            if intent is not None:
                fired.append((i, intent.label))
        assert fired == [(5, "gear_large")]

    def test_no_resolution_resets_counter(self):
        orch = make_orchestrator(dwell_threshold=2)
        assert orch.on_mean_gaze(mg(140, 140), 1) is None
        assert orch.on_mean_gaze(mg(1000, 1000), 2) is None  # empty table
        assert orch.on_mean_gaze(mg(140, 140), 3) is None  # counter restarted
        assert orch.on_mean_gaze(mg(140, 140), 4) is not None

    def test_refractory_suppresses_same_label(self):
        orch = make_orchestrator()

        def emit_at(t):
            user, robot = frames_for_plan(t)  # keep the detector frames fresh
            orch.observe_frame(user)
            orch.observe_frame(robot)
            return orch.on_mean_gaze(mg(140, 140), t)

        t0 = 1_000_000
        assert emit_at(t0) is not None
        assert emit_at(t0 + 1_000_000) is None
        assert emit_at(t0 + 2_000_000) is not None

    def test_refractory_does_not_block_other_labels(self):
        orch = make_orchestrator()
        assert orch.on_mean_gaze(mg(140, 140), 1000) is not None
        other = orch.on_mean_gaze(mg(340, 140), 2000)
        assert other is not None and other.label == "gear_medium"

    def test_stale_user_frame_resolves_nothing(self):
        orch = make_orchestrator()
        t = 5_000_000  # 5 s after the frame at t=0, staleness bound is 200 ms
        assert orch.on_mean_gaze(mg(140, 140), t) is None


class TestHandleIntent:
    def test_allowed_intent_announces_verbatim_and_dispatches(self):
        commands = []
        orch = make_orchestrator()
        orch.command_sink = commands.append
        intent = orch.on_touch("gear_large", 1000)
        announcement, command = orch.handle_intent(intent)
        assert announcement.kind is AnnouncementKind.SELECTED
        assert announcement.text == "Object gear_large selected; Bringing now"
        assert announcement.text == SELECTED_TEMPLATE.format(label="gear_large")
        assert command is not None and command.label == "gear_large"
        assert commands == [command]
        assert orch.phase is RobotPhase.RETRIEVING

    def test_busy_intent_dropped(self):
        orch = make_orchestrator()
        orch.handle_intent(orch.on_touch("gear_large", 1000))
        announcement, command = orch.handle_intent(orch.on_touch("gear_large", 1100))
        assert announcement.kind is AnnouncementKind.BUSY
        assert command is None

    def test_prerequisite_announcement_names_pending_labels(self):
        orch = Orchestrator(builtin_plan("gear_assembly"))
        user, robot = frames_for_plan()
        orch.observe_frame(user)
        orch.observe_frame(robot)
        announcement, command = orch.handle_intent(orch.on_touch("gear_large", 1))
        assert announcement.kind is AnnouncementKind.PREREQUISITE
        assert "peg_grey" in announcement.text
        assert command is None

    def test_unknown_part_unavailable(self):
        orch = make_orchestrator()
        announcement, command = orch.handle_intent(orch.on_touch("spanner", 1))
        assert announcement.kind is AnnouncementKind.UNAVAILABLE
        assert command is None

    def test_already_handled_unavailable(self):
        orch = make_orchestrator()
        orch.state.mark_delivered(orch.plan, "gear1")
        announcement, _ = orch.handle_intent(orch.on_touch("gear_large", 1))
        assert announcement.kind is AnnouncementKind.UNAVAILABLE
        assert "already" in announcement.text

    def test_part_not_in_robot_view_unavailable(self):
        orch = make_orchestrator()
        # Robot frame without the requested part.
        orch.observe_frame(
            DetectionFrame(Viewpoint.ROBOT, 0, (BBox("cap_grey", 0, 0, 10, 10),), 1920, 1080)
        )
        announcement, command = orch.handle_intent(orch.on_touch("gear_large", 1))
        assert announcement.kind is AnnouncementKind.UNAVAILABLE
        assert "not visible" in announcement.text
        assert command is None
        assert orch.phase is RobotPhase.IDLE

    def test_gaze_and_touch_share_the_same_path(self):
        gaze_orch = make_orchestrator()
        touch_orch = make_orchestrator()
        gaze_intent = gaze_orch.on_mean_gaze(mg(140, 140), 1000)
        touch_intent = touch_orch.on_touch("gear_large", 1000)
        a1, c1 = gaze_orch.handle_intent(gaze_intent)
        a2, c2 = touch_orch.handle_intent(touch_intent)
        assert a1.text == a2.text
        assert c1.label == c2.label


class TestRobotLifecycle:
    def run_full_cycle(self, orch):
        orch.handle_intent(orch.on_touch("gear_large", 1000))
        orch.on_robot_event(RobotEvent.PICKED_UP, "gear_large", 2000)
        assert orch.phase is RobotPhase.DELIVERING
        orch.on_robot_event(RobotEvent.DELIVERED, "gear_large", 3000)
        assert orch.phase is RobotPhase.RETURNING
        orch.on_robot_event(RobotEvent.RETURNED, "gear_large", 4000)
        assert orch.phase is RobotPhase.IDLE

    def test_full_cycle_marks_delivery_once(self):
        orch = make_orchestrator()
        self.run_full_cycle(orch)
        deliveries = [r for r in orch.log if r.kind == LOG_DELIVERY]
        assert len(deliveries) == 1
        assert "gear1" in orch.state.delivered

    def test_out_of_order_event_faults_to_idle(self):
        orch = make_orchestrator()
        orch.on_robot_event(RobotEvent.PICKED_UP, "gear_large", 1000)
        assert orch.phase is RobotPhase.IDLE
        faults = [r for r in orch.log if r.kind == LOG_FAULT]
        assert len(faults) == 1

    def test_fault_event_aborts_fetch(self):
        orch = make_orchestrator()
        orch.handle_intent(orch.on_touch("gear_large", 1000))
        assert orch.phase is RobotPhase.RETRIEVING
        orch.on_robot_event(RobotEvent.FAULT, "gear_large", 2000)
        assert orch.phase is RobotPhase.IDLE
        assert orch.active_command is None

    def test_wrong_label_event_is_protocol_error(self):
        orch = make_orchestrator()
        orch.handle_intent(orch.on_touch("gear_large", 1000))
        orch.on_robot_event(RobotEvent.PICKED_UP, "cap_grey", 2000)
        assert orch.phase is RobotPhase.IDLE

    def test_assembled_event_marks_state(self):
        orch = make_orchestrator()
        self.run_full_cycle(orch)
        orch.on_robot_event(RobotEvent.ASSEMBLED, "gear_large", 5000)
        assert "gear1" in orch.state.assembled

    def test_assembled_before_delivery_logs_fault(self):
        orch = make_orchestrator()
        orch.on_robot_event(RobotEvent.ASSEMBLED, "gear_large", 5000)
        assert "gear1" not in orch.state.assembled
        assert any(r.kind == LOG_FAULT for r in orch.log)

    def test_at_most_one_outstanding_command(self):
        orch = make_orchestrator()
        _, c1 = orch.handle_intent(orch.on_touch("gear_large", 1000))
        _, c2 = orch.handle_intent(orch.on_touch("gear_medium", 1100))
        assert c1 is not None and c2 is None
        assert orch.active_command is c1


def test_event_log_serialization_is_stable():
    orch = make_orchestrator()
    orch.handle_intent(orch.on_touch("gear_large", 1000))
    first = orch.log.to_jsonl()
    assert first == orch.log.to_jsonl()
    assert first.count("\n") == len(orch.log)
