"""Dataset toolkit: directory loading, validation findings, statistics, prompts.

A dataset directory holds ``scenes/<scene_id>.json`` plus
``triplets/<split>.jsonl`` with split in {train, val}.  Validation re-runs
every structural, object, and route check over every sample and reports
structured findings keyed by (scene_id, sample_id); statistics summarize
corpus composition the same way regardless of sample order.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .route import default_start_pose, parse_fragments, verify_route
from .scene import (
    InstructionPlanTriplet,
    SceneFormatError,
    SceneModel,
    load_scene,
    parse_triplet_record,
    triplet_warnings,
)
from .textmatch import find_category_spans, words_of

SPLITS = ("train", "val")

FINDING_KINDS = (
    "unknown-object",
    "direction-inconsistent",
    "unreachable-target",
    "implicitness-violation",
    "step-structure",
    "unparsed-route",
)

# Composition of the complete benchmark corpus, used as a cross-check by
# the stats self-test when that corpus is present locally.
FULL_CORPUS_EXPECTED = {
    "train_scenes": 1201,
    "val_scenes": 312,
    "instructions_per_scene": 18.25,
    "mean_steps": 3.98,
    "mean_words": 76.67,
    "step_fraction_3": 0.2807,
    "step_fraction_4": 0.4397,
    "step_fraction_5": 0.2446,
}

_ROUTE_VERDICT_TO_KIND = {
    "unparsed": "unparsed-route",
    "unknown-object": "unknown-object",
    "direction-inconsistent": "direction-inconsistent",
    "unreachable-target": "unreachable-target",
}


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class ValidationFinding:
    sample_key: tuple[str, int]
    kind: str
    detail: str

    def __post_init__(self) -> None:
        if self.kind not in FINDING_KINDS:
            raise ValueError(f"unknown finding kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "scene_id": self.sample_key[0],
            "sample_id": self.sample_key[1],
            "kind": self.kind,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class DatasetSample:
    key: tuple[str, int]
    split: str
    line: int
    triplet: InstructionPlanTriplet


@dataclass(frozen=True)
class DatasetStats:
    scene_count: int
    sample_count: int
    instructions_per_scene: float
    mean_steps: float
    mean_words: float
    step_histogram: dict[int, float]
    verb_histogram: dict[str, int]
    action_object_histogram: dict[tuple[str, str], int]

    def to_dict(self) -> dict:
        return {
            "scene_count": self.scene_count,
            "sample_count": self.sample_count,
            "instructions_per_scene": self.instructions_per_scene,
            "mean_steps": self.mean_steps,
            "mean_words": self.mean_words,
            "step_histogram": {str(k): v for k, v in sorted(self.step_histogram.items())},
            "verb_histogram": dict(sorted(self.verb_histogram.items())),
            "action_object_histogram": [
                {"action": action, "object": obj, "count": count}
                for (action, obj), count in sorted(self.action_object_histogram.items())
            ],
        }


def load_dataset(
    dataset_dir: str | Path,
) -> tuple[list[DatasetSample], dict[str, SceneModel]]:
    """Read every split file and the scenes they reference.

    Sample ids come from the optional ``sample_id`` record field, defaulting
    to the record's line number within its split file.  Malformed records or
    missing scene files are fatal with a path locus; semantic problems are
    left for :func:`validate_dataset`.
    """
    root = Path(dataset_dir)
    triplet_dir = root / "triplets"
    split_files = [(split, triplet_dir / f"{split}.jsonl") for split in SPLITS]
    split_files = [(split, path) for split, path in split_files if path.exists()]
    if not split_files:
        raise DatasetError(f"{triplet_dir}: no train.jsonl or val.jsonl found")
    scenes: dict[str, SceneModel] = {}
    samples: list[DatasetSample] = []
    for split, path in split_files:
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DatasetError(f"{path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise SceneFormatError("record must be a JSON object")
                triplet = parse_triplet_record(data, where)
            except (json.JSONDecodeError, SceneFormatError) as exc:
                raise DatasetError(f"{where}: {exc}") from exc
            sample_id = data.get("sample_id", lineno)
            if not isinstance(sample_id, int):
                raise DatasetError(f"{where}: sample_id must be an integer")
            if triplet.scene_id not in scenes:
                scene_path = root / "scenes" / f"{triplet.scene_id}.json"
                if not scene_path.exists():
                    raise DatasetError(f"{where}: scene file not found: {scene_path}")
                scenes[triplet.scene_id] = load_scene(scene_path)
            samples.append(
                DatasetSample(
                    key=(triplet.scene_id, sample_id),
                    split=split,
                    line=lineno,
                    triplet=triplet,
                )
            )
    return samples, scenes


def validate_sample(
    sample: DatasetSample, scene: SceneModel
) -> list[ValidationFinding]:
    """All findings for one sample: structure, object ids, implicitness, routes."""
    findings = [
        ValidationFinding(sample.key, warning.kind, warning.detail)
        for warning in triplet_warnings(sample.triplet, scene, sample.line)
    ]
    reports = verify_route(sample.triplet.steps, scene, default_start_pose(scene))
    for report in reports:
        if report.verdict == "ok":
            continue
        findings.append(
            ValidationFinding(
                sample.key,
                _ROUTE_VERDICT_TO_KIND[report.verdict],
                f"step {report.step_index}: {report.detail}",
            )
        )
    return findings


def validate_dataset(dataset_dir: str | Path) -> list[ValidationFinding]:
    """Validate every sample; findings come back ordered by sample key."""
    samples, scenes = load_dataset(dataset_dir)
    findings: list[ValidationFinding] = []
    for sample in sorted(samples, key=lambda s: s.key):
        findings.extend(validate_sample(sample, scenes[sample.triplet.scene_id]))
    return findings


def _sample_word_count(triplet: InstructionPlanTriplet) -> int:
    return len(triplet.activity.split()) + sum(len(s.text.split()) for s in triplet.steps)


def compute_stats(
    samples: list[DatasetSample], scenes: dict[str, SceneModel]
) -> DatasetStats:
    """Corpus composition over loaded samples.

    Verbs count route-clause heads; actions pair the first token of each
    non-route fragment with the first scene category it names.
    """
    if not samples:
        raise DatasetError("dataset has no samples")
    scene_ids = {s.triplet.scene_id for s in samples}
    step_counts = Counter(len(s.triplet.steps) for s in samples)
    verb_histogram: Counter = Counter()
    action_object: Counter = Counter()
    total_steps = 0
    total_words = 0
    for sample in samples:
        total_steps += len(sample.triplet.steps)
        total_words += _sample_word_count(sample.triplet)
        categories = scenes[sample.triplet.scene_id].categories()
        for step in sample.triplet.steps:
            for fragment in parse_fragments(step.text):
                if fragment.clause is not None:
                    verb_histogram[fragment.clause.verb] += 1
                    continue
                if fragment.is_movement:
                    continue
                tokens = words_of(fragment.text)
                spans = find_category_spans(fragment.text, categories)
                if tokens and spans:
                    action_object[(tokens[0], spans[0][1])] += 1
    n = len(samples)
    return DatasetStats(
        scene_count=len(scene_ids),
        sample_count=n,
        instructions_per_scene=n / len(scene_ids),
        mean_steps=total_steps / n,
        mean_words=total_words / n,
        step_histogram={count: c / n for count, c in step_counts.items()},
        verb_histogram=dict(verb_histogram),
        action_object_histogram=dict(action_object),
    )


def dataset_stats(dataset_dir: str | Path) -> DatasetStats:
    samples, scenes = load_dataset(dataset_dir)
    return compute_stats(samples, scenes)


_NEED_HINTS = (
    "I want to feel refreshed",
    "I am thirsty after the walk",
    "something smells bad in here",
    "I can never find anything in this room",
    "my guests arrive in ten minutes",
    "I have been on my feet all day",
    "it is freezing in this apartment",
    "the little ones are hungry again",
)

_RECORD_SCHEMA = (
    '{"scene_id": "<scene id>", "instruction": "<implicit instruction>", '
    '"activity": "<activity phrase>", "steps": [{"index": 1, "text": "<step sentence>", '
    '"object_ids": [<ids of mentioned objects>], "is_final": false}, ...]}'
)


def generation_prompts(scene: SceneModel, n: int, seed: int = 0) -> list[str]:
    """Prompts asking a language model to write instruction-plan records.

    Each prompt lists the scene's full object inventory and the record
    schema; the need hint varies per prompt, deterministically from the
    seed.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = random.Random(seed)
    inventory = "\n".join(
        f"  - {o.category} (id {o.id})" for o in sorted(scene.objects, key=lambda o: o.id)
    )
    prompts = []
    for i in range(1, n + 1):
        hint = rng.choice(_NEED_HINTS)
        prompts.append(
            f"You write training data for a household robot assistant.\n"
            f"Scene {scene.scene_id} contains exactly these objects:\n{inventory}\n"
            f"Write one implicit instruction: a need a person might state without "
            f'naming the activity (for example: "{hint}"). Then write the activity '
            f"it implies and a step-by-step plan of 3 to 5 steps using only the "
            f"objects above, with movement described as route clauses such as "
            f'"walk straight ahead to the <object>" or "turn 90 degrees left".\n'
            f"Answer with one JSON object on a single line, following exactly this "
            f"schema:\n{_RECORD_SCHEMA}\n"
            f"Set is_final to true on the last step only. This is request {i} of {n}; "
            f"make it distinct from the others.\n"
        )
    return prompts


def findings_to_jsonl(findings: list[ValidationFinding]) -> str:
    return "".join(json.dumps(f.to_dict(), sort_keys=True) + "\n" for f in findings)
