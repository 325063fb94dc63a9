"""Progressive plan generation: one step at a time, conditioned on history.

Each episode iterates generate -> detect mentioned objects -> modulate the
scene graph, so the serialized graph context sent with the next step
reflects what the plan has already touched.  The loop stops when the
generator emits the "[END]" stop token or the step cap is hit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

from .graph import (
    DEFAULT_MODULATION_WEIGHT,
    ModulationRecord,
    SceneGraph,
    modulate,
    serialize_for_prompt,
)
from .scene import PlanStep, SceneModel
from .textmatch import mentioned_categories

END_TOKEN = "[END]"
DEFAULT_MAX_STEPS = 8

SYSTEM_PREAMBLE = (
    "You are a robot assistant planning household tasks step by step. "
    "The scene contains these objects and spatial relations; weights mark "
    "recent focus:"
)

HISTORY_TEMPLATE = "Q: {instruction}. You should answer based on these historical steps: {history}"

_STEP_LABEL = re.compile(r"^\s*step\s+\d+\s*:\s*", re.IGNORECASE)
_STEP1_MARKER = "Step 1:"


class EpisodeError(Exception):
    """Generator failure mid-episode; carries the steps completed so far."""

    def __init__(self, message: str, partial: "PlanEpisode"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class GeneratorRequest:
    system_context: str
    user_prompt: str
    step_index: int


@dataclass(frozen=True)
class GeneratorReply:
    text: str
    saw_end: bool


Generator = Callable[[GeneratorRequest], GeneratorReply]


def reply_from_raw(raw: str) -> GeneratorReply:
    """Wrap raw generator output, detecting and stripping the stop token."""
    saw_end = END_TOKEN in raw
    return GeneratorReply(text=raw.replace(END_TOKEN, "").strip(), saw_end=saw_end)


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = DEFAULT_MAX_STEPS
    w_l: float = DEFAULT_MODULATION_WEIGHT
    prompt_budget: int | None = None

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.w_l <= 0:
            raise ValueError("w_l must be positive")


@dataclass(frozen=True)
class PlanEpisode:
    instruction: str
    activity: str
    steps: tuple[PlanStep, ...]
    modulations: tuple[ModulationRecord, ...]
    max_steps: int
    terminated_by: str  # "end-token" or "step-cap"


def render_history_prompt(instruction: str, history: list[PlanStep] | tuple[PlanStep, ...]) -> str:
    """The step-s prompt (s >= 2): instruction plus all prior steps inline.

    Steps render as "Step <i>: <text>" joined by single spaces, so every
    prior step text appears verbatim in every later prompt.
    """
    if not history:
        raise ValueError("history must be nonempty; step 1 uses the instruction alone")
    rendered = " ".join(f"Step {s.index}: {s.text}" for s in history)
    return HISTORY_TEMPLATE.format(instruction=instruction, history=rendered)


def detect_mentions(step_text: str, scene: SceneModel) -> list[int]:
    """Ids of all instances whose category is named in the text, ascending.

    Matching is case-insensitive, whole-word, and tolerant of plural forms
    ("mugs" matches category "mug"); every instance of a mentioned category
    counts.
    """
    categories = mentioned_categories(step_text, scene.categories())
    return sorted(o.id for o in scene.objects if o.category in categories)


def parse_activity_header(first_reply: str) -> tuple[str, str]:
    """Split the first reply into the activity sentence and the step stream.

    Everything before the first "Step 1:" marker is the reasoned activity;
    with no marker the whole reply is activity and the stream is empty.
    """
    position = first_reply.find(_STEP1_MARKER)
    if position < 0:
        return first_reply.strip(), ""
    return first_reply[:position].strip(), first_reply[position:]


def strip_step_label(text: str) -> str:
    """Drop one leading "Step <i>:" label; generators echo it, storage does not."""
    return _STEP_LABEL.sub("", text, count=1).strip()


def run_episode(
    scene: SceneModel,
    graph: SceneGraph,
    instruction: str,
    generator: Generator,
    config: EpisodeConfig = EpisodeConfig(),
) -> PlanEpisode:
    """Run one progressive generation episode over the scene graph.

    The graph is modulated in place once per generated step (empty mention
    sets still produce a record), so callers who reuse a graph across
    episodes should reset its weights first.
    """
    budget = config.prompt_budget if config.prompt_budget is not None else len(graph.nodes)
    steps: list[PlanStep] = []
    modulations: list[ModulationRecord] = []
    activity = ""
    terminated_by = "step-cap"

    def partial() -> PlanEpisode:
        return PlanEpisode(
            instruction=instruction,
            activity=activity,
            steps=tuple(steps),
            modulations=tuple(modulations),
            max_steps=config.max_steps,
            terminated_by=terminated_by,
        )

    for step_index in range(1, config.max_steps + 1):
        system_context = SYSTEM_PREAMBLE + "\n" + serialize_for_prompt(graph, budget)
        if step_index == 1:
            user_prompt = instruction
        else:
            user_prompt = render_history_prompt(instruction, steps)
        request = GeneratorRequest(
            system_context=system_context,
            user_prompt=user_prompt,
            step_index=step_index,
        )
        try:
            reply = generator(request)
        except Exception as exc:
            raise EpisodeError(
                f"generator failed at step {step_index}: {exc}", partial()
            ) from exc
        if step_index == 1:
            activity, remainder = parse_activity_header(reply.text)
            text = strip_step_label(remainder)
        else:
            text = strip_step_label(reply.text)
        mentioned = detect_mentions(text, scene)
        steps.append(
            PlanStep(
                index=step_index,
                text=text,
                object_ids=tuple(mentioned),
                is_final=reply.saw_end,
            )
        )
        modulations.append(
            modulate(graph, mentioned, w_l=config.w_l, step_index=step_index)
        )
        if reply.saw_end:
            terminated_by = "end-token"
            break
    return partial()


def episode_to_dict(episode: PlanEpisode) -> dict:
    return {
        "instruction": episode.instruction,
        "activity": episode.activity,
        "steps": [
            {"index": s.index, "text": s.text, "object_ids": list(s.object_ids)}
            for s in episode.steps
        ],
        "terminated_by": episode.terminated_by,
        "modulations": [
            {
                "step_index": m.step_index,
                "mentioned_ids": sorted(m.mentioned_ids),
                "touched_nodes": sorted(m.touched_nodes),
                "touched_edges_count": len(m.touched_edges),
            }
            for m in episode.modulations
        ],
    }
