"""Assembly plans and request validation.

A plan is a prerequisite DAG over assembly steps; the progress state tracks
which steps were delivered and which are assembled. Requests for a part are
validated against that state so the robot only fetches parts whose
prerequisites are already in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional


class PlanError(ValueError):
    """Plan document violates the schema (cycle, dangling ref, duplicate)."""


class OrderingError(ValueError):
    """A progress mark would violate the delivered-before-assembled order."""


class StepSource(str, Enum):
    USER_STATION = "USER_STATION"
    ROBOT_WORKSPACE = "ROBOT_WORKSPACE"


@dataclass(frozen=True)
class AssemblyStep:
    step_id: str
    part_label: str
    prerequisites: frozenset[str]
    source: StepSource

    def to_dict(self) -> dict:
        return {
            "step_id": self.step_id,
            "part_label": self.part_label,
            "prerequisites": sorted(self.prerequisites),
            "source": self.source.value,
        }


class AssemblyPlan:
    """A validated, immutable prerequisite DAG of assembly steps."""

    def __init__(self, plan_id: str, steps: list[AssemblyStep]):
        self.plan_id = plan_id
        self.steps: tuple[AssemblyStep, ...] = tuple(steps)
        self._by_id = {s.step_id: s for s in self.steps}
        self._by_label = {s.part_label: s for s in self.steps}
        self._validate()
        self.topological_order: tuple[str, ...] = tuple(self._topo_sort())

    def _validate(self) -> None:
        seen_ids: set[str] = set()
        seen_labels: set[str] = set()
        for step in self.steps:
            if step.step_id in seen_ids:
                raise PlanError(f"duplicate step_id {step.step_id!r}")
            if step.part_label in seen_labels:
                raise PlanError(
                    f"duplicate part_label {step.part_label!r} (step {step.step_id!r})"
                )
            seen_ids.add(step.step_id)
            seen_labels.add(step.part_label)
        for step in self.steps:
            if step.step_id in step.prerequisites:
                raise PlanError(f"step {step.step_id!r} is its own prerequisite")
            for pre in step.prerequisites:
                if pre not in self._by_id:
                    raise PlanError(
                        f"step {step.step_id!r} references unknown prerequisite {pre!r}"
                    )

    def _topo_sort(self) -> list[str]:
        # Kahn's algorithm, stable w.r.t. declaration order so the result is
        # deterministic across runs.
        emitted: list[str] = []
        done: set[str] = set()
        remaining = list(self.steps)
        while remaining:
            ready = [s for s in remaining if s.prerequisites <= done]
            if not ready:
                stuck = ", ".join(repr(s.step_id) for s in remaining)
                raise PlanError(f"prerequisite cycle involving steps {stuck}")
            for step in ready:
                emitted.append(step.step_id)
                done.add(step.step_id)
            remaining = [s for s in remaining if s.step_id not in done]
        return emitted

    def step(self, step_id: str) -> AssemblyStep:
        return self._by_id[step_id]

    def step_for_label(self, label: str) -> Optional[AssemblyStep]:
        return self._by_label.get(label)

    @property
    def part_labels(self) -> tuple[str, ...]:
        return tuple(s.part_label for s in self.steps)

    def robot_step_ids(self) -> tuple[str, ...]:
        return tuple(
            s.step_id for s in self.steps if s.source is StepSource.ROBOT_WORKSPACE
        )

    def to_dict(self) -> dict:
        return {"plan_id": self.plan_id, "steps": [s.to_dict() for s in self.steps]}

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class PlanState:
    """Monotone progress over one plan."""

    delivered: set[str] = field(default_factory=set)
    assembled: set[str] = field(default_factory=set)

    def mark_delivered(self, plan: AssemblyPlan, step_id: str) -> None:
        if step_id not in plan._by_id:
            raise PlanError(f"unknown step {step_id!r}")
        self.delivered.add(step_id)

    def mark_assembled(self, plan: AssemblyPlan, step_id: str) -> None:
        step = plan._by_id.get(step_id)
        if step is None:
            raise PlanError(f"unknown step {step_id!r}")
        if step.source is StepSource.ROBOT_WORKSPACE and step_id not in self.delivered:
            raise OrderingError(
                f"step {step_id!r} is robot-fetched and must be delivered before assembly"
            )
        self.assembled.add(step_id)

    def to_dict(self) -> dict:
        return {
            "delivered": sorted(self.delivered),
            "assembled": sorted(self.assembled),
        }


class RequestOutcome(str, Enum):
    ALLOWED = "ALLOWED"
    PREREQUISITE_NEEDED = "PREREQUISITE_NEEDED"
    UNKNOWN_PART = "UNKNOWN_PART"
    ALREADY_HANDLED = "ALREADY_HANDLED"


@dataclass(frozen=True)
class ValidationResult:
    outcome: RequestOutcome
    label: str
    step_id: Optional[str] = None
    # Unmet prerequisite step ids in topological order (transitively, stopping
    # at steps that are already assembled).
    pending: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "label": self.label,
            "step_id": self.step_id,
            "pending": list(self.pending),
        }


def validate_request(
    plan: AssemblyPlan, state: PlanState, label: str
) -> ValidationResult:
    """Decide whether a part request may be serviced right now.

    ALLOWED requires the step to exist, to be unhandled, and every direct
    prerequisite to be assembled. The pending list on PREREQUISITE_NEEDED
    names the steps still to assemble, in an order the user can follow.
    """
    step = plan.step_for_label(label)
    if step is None:
        return ValidationResult(RequestOutcome.UNKNOWN_PART, label)
    if step.step_id in state.delivered or step.step_id in state.assembled:
        return ValidationResult(RequestOutcome.ALREADY_HANDLED, label, step.step_id)
    unmet = _unmet_prerequisites(plan, state, step)
    if unmet:
        pending = tuple(sid for sid in plan.topological_order if sid in unmet)
        return ValidationResult(
            RequestOutcome.PREREQUISITE_NEEDED, label, step.step_id, pending
        )
    return ValidationResult(RequestOutcome.ALLOWED, label, step.step_id)


def _unmet_prerequisites(
    plan: AssemblyPlan, state: PlanState, step: AssemblyStep
) -> set[str]:
    # Walk prerequisites recursively but stop at assembled steps: once a step
    # is done, whatever led to it no longer matters.
    unmet: set[str] = set()
    stack = [step]
    while stack:
        current = stack.pop()
        for pre_id in current.prerequisites:
            if pre_id in state.assembled or pre_id in unmet:
                continue
            unmet.add(pre_id)
            stack.append(plan.step(pre_id))
    return unmet


def load_plan(document: dict) -> AssemblyPlan:
    """Build a validated plan from its JSON document form."""
    if not isinstance(document, dict):
        raise PlanError("plan document must be a JSON object")
    try:
        plan_id = str(document["plan_id"])
        raw_steps = document["steps"]
    except KeyError as exc:
        raise PlanError(f"plan document missing field {exc.args[0]!r}") from exc
    if not isinstance(raw_steps, list) or not raw_steps:
        raise PlanError("plan 'steps' must be a non-empty array")
    steps = []
    for raw in raw_steps:
        try:
            steps.append(
                AssemblyStep(
                    step_id=str(raw["step_id"]),
                    part_label=str(raw["part_label"]),
                    prerequisites=frozenset(str(p) for p in raw.get("prerequisites", [])),
                    source=StepSource(raw["source"]),
                )
            )
        except KeyError as exc:
            raise PlanError(f"step {raw!r} missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise PlanError(f"step {raw.get('step_id', '?')!r}: {exc}") from exc
    return AssemblyPlan(plan_id, steps)


def load_plan_file(path: str | Path) -> AssemblyPlan:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PlanError(f"plan file {path} is not valid JSON: {exc}") from exc
    return load_plan(document)


BUILTIN_PLANS = ("gear_assembly", "gear_nutbolt")


def builtin_plan(name: str) -> AssemblyPlan:
    """Load one of the plans shipped with the package."""
    if name not in BUILTIN_PLANS:
        raise PlanError(f"unknown built-in plan {name!r}; have {BUILTIN_PLANS}")
    data = resources.files("gazefetch.plans").joinpath(f"{name}.json").read_text("utf-8")
    return load_plan(json.loads(data))


def resolve_plan(name_or_path: str | Path) -> AssemblyPlan:
    """Accept either a built-in plan name or a path to a plan file."""
    name = str(name_or_path)
    if name in BUILTIN_PLANS:
        return builtin_plan(name)
    return load_plan_file(name_or_path)
