"""Gaze-driven part fetching for collaborative assembly.

Core pipeline: smooth a raw gaze stream into windowed means, match them
against labeled detection boxes, validate the requested part against an
assembly-prerequisite plan, and orchestrate a (simulated) fetch robot. The
same engine runs scripted offline sessions, trace replays, and a live
gateway serving the operator console.
"""

from .assembly import (
    AssemblyPlan,
    AssemblyStep,
    PlanError,
    PlanState,
    RequestOutcome,
    StepSource,
    ValidationResult,
    builtin_plan,
    load_plan,
    load_plan_file,
    resolve_plan,
    validate_request,
)
from .gaze import GazeSample, GazeWindow, MeanGaze, StreamConfig, StreamOrderError
from .orchestrator import (
    Announcement,
    AnnouncementKind,
    IntentEvent,
    IntentSource,
    Orchestrator,
    RobotCommand,
    RobotEvent,
    RobotPhase,
    SELECTED_TEMPLATE,
)
from .perception import (
    BBox,
    DetectionFrame,
    Viewpoint,
    align_object,
    bbox_center,
    gaze_match,
    resolve_target,
)

__version__ = "0.1.0"
