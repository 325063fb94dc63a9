"""Route clause parsing, agent pose simulation, feasibility checks, and planning.

The route language covers the movement directives that connect plan steps:
"Walk straight ahead to the kitchen counter", "Turn 90 degrees left".
Headings are quantized to 90-degree multiples with 0 = +y and left =
counterclockwise, which makes verification exact.  Planning runs A* over
the scene's occupancy grid and renders the cell path back into clauses.

All operations here are pure functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from heapq import heappop, heappush

from .scene import Aabb, ObjectInstance, OccupancyGrid, PlanStep, SceneModel
from .textmatch import resolve_noun_phrase, words_of

MOVE_VERBS = ("walk", "move", "go", "head", "proceed")
TURN_VERB = "turn"
# Adverb lexicon is extensible; matching is token-based, longest first.
DEFAULT_ADVERBS = ("straight ahead", "forward", "back", "around")

HEADINGS = (0, 90, 180, 270)
# Heading 0 faces +y; left turns rotate counterclockwise.
HEADING_TO_DIR = {0: (0.0, 1.0), 90: (-1.0, 0.0), 180: (0.0, -1.0), 270: (1.0, 0.0)}

ADJACENCY_CLEARANCE = 0.2  # meters kept between the agent and an AABB face
STRAIGHT_AHEAD_CONE = 30.0  # degrees; half-angle for "straight ahead" claims

VERDICTS = (
    "ok",
    "unreachable-target",
    "direction-inconsistent",
    "unknown-object",
    "unparsed",
)


class RouteError(Exception):
    pass


class UnknownObjectError(RouteError):
    pass


class UnreachableTargetError(RouteError):
    pass


class MissingGridError(RouteError):
    pass


@dataclass(frozen=True)
class AgentPose:
    position: tuple[float, float]
    heading: int = 0

    def __post_init__(self) -> None:
        if self.heading not in HEADINGS:
            raise ValueError(f"heading must be one of {HEADINGS}, got {self.heading}")


@dataclass(frozen=True)
class RouteClause:
    """A parsed movement primitive.

    Turn clauses carry degrees and direction and never a target; movement
    clauses carry a target noun phrase and/or an adverb.
    """

    verb: str
    turn_degrees: int | None = None
    turn_direction: str | None = None
    target_category: str | None = None
    adverb: str | None = None


@dataclass(frozen=True)
class ParsedFragment:
    """One clause-sized piece of step text and what the grammar made of it."""

    text: str
    clause: RouteClause | None
    is_movement: bool


@dataclass(frozen=True)
class RouteCheckReport:
    step_index: int
    clauses: tuple[RouteClause, ...]
    final_pose: AgentPose
    verdict: str
    detail: str = ""


_SENTENCE_BREAKS = ".?!;,"


def split_fragments(text: str) -> list[str]:
    """Split step text on sentence punctuation and "and" conjunctions."""
    for ch in _SENTENCE_BREAKS:
        text = text.replace(ch, "\n")
    pieces: list[str] = []
    for sentence in text.split("\n"):
        words = sentence.split()
        start = 0
        for i, word in enumerate(words):
            if word.lower() == "and":
                if start < i:
                    pieces.append(" ".join(words[start:i]))
                start = i + 1
        if start < len(words):
            pieces.append(" ".join(words[start:]))
    return pieces


_ARTICLES = {"the", "a", "an"}


def _match_fragment(
    tokens: list[str], adverbs: tuple[str, ...]
) -> RouteClause | None:
    verb = tokens[0]
    if verb == TURN_VERB:
        if (
            len(tokens) == 4
            and tokens[1] in ("90", "180")
            and tokens[2] in ("degrees", "degree")
            and tokens[3] in ("left", "right")
        ):
            return RouteClause(
                verb=TURN_VERB,
                turn_degrees=int(tokens[1]),
                turn_direction=tokens[3],
            )
        return None
    rest = tokens[1:]
    adverb = None
    for candidate in sorted(adverbs, key=lambda a: -len(a.split())):
        cand_tokens = candidate.split()
        if rest[: len(cand_tokens)] == cand_tokens:
            adverb = candidate
            rest = rest[len(cand_tokens):]
            break
    target = None
    if rest:
        if rest[0] != "to":
            return None
        rest = rest[1:]
        if rest and rest[0] in _ARTICLES:
            rest = rest[1:]
        if not rest:
            return None
        target = " ".join(rest)
    if target is None and adverb is None:
        return None
    return RouteClause(verb=verb, target_category=target, adverb=adverb)


def parse_fragments(
    step_text: str, adverbs: tuple[str, ...] = DEFAULT_ADVERBS
) -> list[ParsedFragment]:
    """Classify every fragment of a step: route clause, failed movement, or other.

    Fragments that do not begin with a movement verb (e.g. "pick up the
    water kettle") are not route material and parse to nothing; fragments
    that begin with one but do not fit the grammar are flagged so a
    downstream check can report them.
    """
    fragments: list[ParsedFragment] = []
    for piece in split_fragments(step_text):
        tokens = words_of(piece)
        if not tokens:
            continue
        if tokens[0] not in MOVE_VERBS and tokens[0] != TURN_VERB:
            fragments.append(ParsedFragment(piece, None, is_movement=False))
            continue
        clause = _match_fragment(tokens, adverbs)
        fragments.append(ParsedFragment(piece, clause, is_movement=True))
    return fragments


def parse_route(
    step_text: str, adverbs: tuple[str, ...] = DEFAULT_ADVERBS
) -> list[RouteClause]:
    """All route clauses in a step, in text order.  Total: never raises."""
    return [f.clause for f in parse_fragments(step_text, adverbs) if f.clause]


def turn_heading(heading: int, degrees: int, direction: str) -> int:
    if degrees == 180:
        return (heading + 180) % 360
    delta = 90 if direction == "left" else -90
    return (heading + delta) % 360


def _footprint_rect(box: Aabb) -> tuple[float, float, float, float]:
    return box.min_corner[0], box.min_corner[1], box.max_corner[0], box.max_corner[1]


def nearest_instance(
    scene: SceneModel, category: str, position: tuple[float, float]
) -> ObjectInstance:
    """Closest instance of a category by ground-plane centroid distance, ties by id."""
    return min(
        scene.instances_of(category),
        key=lambda o: (math.dist(position, (o.centroid[0], o.centroid[1])), o.id),
    )


def _ray_rect_entry(
    pos: tuple[float, float],
    direction: tuple[float, float],
    rect: tuple[float, float, float, float],
) -> float | None:
    """Distance along an axis-aligned ray to the rect's near face, if ahead."""
    xmin, ymin, xmax, ymax = rect
    x, y = pos
    if direction[1] != 0:
        if not xmin <= x <= xmax:
            return None
        t = (ymin - y) / direction[1] if direction[1] > 0 else (ymax - y) / direction[1]
    else:
        if not ymin <= y <= ymax:
            return None
        t = (xmin - x) / direction[0] if direction[0] > 0 else (xmax - x) / direction[0]
    return t if t > 0 else None


def _nearest_clearance_point(
    pos: tuple[float, float], rect: tuple[float, float, float, float]
) -> tuple[float, float]:
    """Closest point at ADJACENCY_CLEARANCE outside the rect boundary."""
    xmin, ymin, xmax, ymax = rect
    exmin, eymin = xmin - ADJACENCY_CLEARANCE, ymin - ADJACENCY_CLEARANCE
    exmax, eymax = xmax + ADJACENCY_CLEARANCE, ymax + ADJACENCY_CLEARANCE
    x, y = pos
    if x < exmin or x > exmax or y < eymin or y > eymax:
        return (min(max(x, exmin), exmax), min(max(y, eymin), eymax))
    # Inside the expanded rect: push out through the nearest side.
    sides = [
        (x - exmin, (exmin, y)),
        (exmax - x, (exmax, y)),
        (y - eymin, (x, eymin)),
        (eymax - y, (x, eymax)),
    ]
    return min(sides, key=lambda s: s[0])[1]


def footprint_cells(grid: OccupancyGrid, box: Aabb) -> set[tuple[int, int]]:
    """Grid cells overlapping the box's ground-plane rectangle."""
    xmin, ymin, xmax, ymax = _footprint_rect(box)
    cells: set[tuple[int, int]] = set()
    r0 = max(0, math.floor((ymin - grid.origin[1]) / grid.cell_size))
    c0 = max(0, math.floor((xmin - grid.origin[0]) / grid.cell_size))
    r1 = min(grid.rows - 1, math.ceil((ymax - grid.origin[1]) / grid.cell_size))
    c1 = min(grid.cols - 1, math.ceil((xmax - grid.origin[0]) / grid.cell_size))
    for row in range(r0, r1 + 1):
        for col in range(c0, c1 + 1):
            cell_xmin = grid.origin[0] + col * grid.cell_size
            cell_ymin = grid.origin[1] + row * grid.cell_size
            if (
                cell_xmin < xmax
                and cell_xmin + grid.cell_size > xmin
                and cell_ymin < ymax
                and cell_ymin + grid.cell_size > ymin
            ):
                cells.add((row, col))
    return cells


def adjacent_free_cells(grid: OccupancyGrid, box: Aabb) -> set[tuple[int, int]]:
    """Free cells in the 8-neighborhood of the box's footprint cells."""
    footprint = footprint_cells(grid, box)
    adjacent: set[tuple[int, int]] = set()
    for row, col in footprint:
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                cell = (row + dr, col + dc)
                if cell not in footprint and grid.is_free(*cell):
                    adjacent.add(cell)
    return adjacent


def _landing_point(
    pose: AgentPose, clause: RouteClause, target: ObjectInstance, scene: SceneModel
) -> tuple[float, float]:
    rect = _footprint_rect(target.aabb)
    point: tuple[float, float] | None = None
    if clause.adverb == "straight ahead":
        direction = HEADING_TO_DIR[pose.heading]
        t = _ray_rect_entry(pose.position, direction, rect)
        if t is not None and t > ADJACENCY_CLEARANCE:
            reach = t - ADJACENCY_CLEARANCE
            point = (
                pose.position[0] + direction[0] * reach,
                pose.position[1] + direction[1] * reach,
            )
    if point is None:
        point = _nearest_clearance_point(pose.position, rect)
    grid = scene.occupancy
    if grid is not None and not grid.is_free(*grid.cell_of(*point)):
        candidates = adjacent_free_cells(grid, target.aabb)
        if candidates:
            best = min(
                candidates,
                key=lambda c: (math.dist(pose.position, grid.cell_center(*c)), c),
            )
            point = grid.cell_center(*best)
    return point


def apply_clause(pose: AgentPose, clause: RouteClause, scene: SceneModel) -> AgentPose:
    """Advance the agent pose by one clause.

    Turns rotate the quantized heading.  A targeted move lands adjacent to
    the object's footprint: on the heading ray when the clause says
    "straight ahead" and the ray actually hits, else at the nearest
    adjacent point (snapped to a free cell when a grid is present).  An
    untargeted move advances 1 m along the heading.
    """
    if clause.verb == TURN_VERB:
        return replace(
            pose,
            heading=turn_heading(pose.heading, clause.turn_degrees, clause.turn_direction),
        )
    if clause.target_category is None:
        dx, dy = HEADING_TO_DIR[pose.heading]
        return replace(pose, position=(pose.position[0] + dx, pose.position[1] + dy))
    category = resolve_noun_phrase(clause.target_category, scene.categories())
    if category is None:
        raise UnknownObjectError(clause.target_category)
    target = nearest_instance(scene, category, pose.position)
    return replace(pose, position=_landing_point(pose, clause, target, scene))


def _within_cone(
    pose: AgentPose, target: ObjectInstance, half_angle_deg: float = STRAIGHT_AHEAD_CONE
) -> bool:
    vx = target.centroid[0] - pose.position[0]
    vy = target.centroid[1] - pose.position[1]
    norm = math.hypot(vx, vy)
    if norm == 0:
        return True
    dx, dy = HEADING_TO_DIR[pose.heading]
    return (vx * dx + vy * dy) / norm >= math.cos(math.radians(half_angle_deg))


def shortest_cell_path(
    grid: OccupancyGrid,
    start: tuple[int, int],
    goals: set[tuple[int, int]],
) -> list[tuple[int, int]] | None:
    """A* over free cells, 4-connected, Manhattan heuristic, ties by (row, col).

    Returns the cell path from ``start`` to the first goal reached, start
    included, or None when no goal is reachable.
    """
    if not goals:
        return None
    if start in goals:
        return [start]

    def heuristic(cell: tuple[int, int]) -> int:
        return min(abs(cell[0] - g[0]) + abs(cell[1] - g[1]) for g in goals)

    frontier: list[tuple[int, int, int, tuple[int, int]]] = []
    heappush(frontier, (heuristic(start), start[0], start[1], start))
    best_g = {start: 0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    closed: set[tuple[int, int]] = set()
    while frontier:
        _, _, _, cell = heappop(frontier)
        if cell in closed:
            continue
        closed.add(cell)
        if cell in goals:
            path = [cell]
            while cell in parent:
                cell = parent[cell]
                path.append(cell)
            return path[::-1]
        row, col = cell
        g = best_g[cell]
        for neighbor in ((row - 1, col), (row + 1, col), (row, col - 1), (row, col + 1)):
            if not grid.is_free(*neighbor):
                continue
            ng = g + 1
            if ng < best_g.get(neighbor, math.inf):
                best_g[neighbor] = ng
                parent[neighbor] = cell
                heappush(
                    frontier, (ng + heuristic(neighbor), neighbor[0], neighbor[1], neighbor)
                )
    return None


def nearest_free_cell(
    grid: OccupancyGrid, position: tuple[float, float]
) -> tuple[int, int] | None:
    """Free cell whose center is closest to a world point, ties by (row, col)."""
    best: tuple[int, int] | None = None
    best_key: tuple[float, int, int] | None = None
    for row in range(grid.rows):
        for col in range(grid.cols):
            if grid.is_blocked(row, col):
                continue
            key = (math.dist(position, grid.cell_center(row, col)), row, col)
            if best_key is None or key < best_key:
                best, best_key = (row, col), key
    return best


def _heading_of_step(delta: tuple[int, int]) -> int:
    # Row axis is +y, column axis is +x.
    return {(1, 0): 0, (-1, 0): 180, (0, 1): 270, (0, -1): 90}[delta]


def _turn_clauses(current: int, wanted: int) -> list[RouteClause]:
    diff = (wanted - current) % 360
    if diff == 0:
        return []
    if diff == 90:
        return [RouteClause(TURN_VERB, 90, "left")]
    if diff == 270:
        return [RouteClause(TURN_VERB, 90, "right")]
    return [RouteClause(TURN_VERB, 180, "left")]


def path_to_clauses(
    path: list[tuple[int, int]],
    start_heading: int,
    target_category: str,
    final_straight: bool = True,
) -> list[RouteClause]:
    """Compress a cell path into TURN/MOVE clauses; final move names the target.

    ``final_straight`` controls whether the targeted move claims "straight
    ahead"; the planner clears it when the target sits outside the heading
    cone, so rendered routes never fail their own direction check.
    """
    if len(path) < 2:
        return []
    steps = [
        (path[i + 1][0] - path[i][0], path[i + 1][1] - path[i][1])
        for i in range(len(path) - 1)
    ]
    runs: list[int] = []  # heading per maximal straight run
    for delta in steps:
        heading = _heading_of_step(delta)
        if not runs or runs[-1] != heading:
            runs.append(heading)
    clauses: list[RouteClause] = []
    heading = start_heading
    for i, run_heading in enumerate(runs):
        clauses.extend(_turn_clauses(heading, run_heading))
        heading = run_heading
        final = i == len(runs) - 1
        clauses.append(
            RouteClause(
                verb="walk",
                adverb="straight ahead" if not final or final_straight else None,
                target_category=target_category if final else None,
            )
        )
    return clauses


def plan_route(
    start: AgentPose, target_object_id: int, scene: SceneModel
) -> list[RouteClause]:
    """Plan clauses from ``start`` to any free cell adjacent to the target.

    Requires an occupancy grid and a free start cell.  Returns [] when the
    start cell is already adjacent to the target footprint; raises
    :class:`UnreachableTargetError` when no adjacent cell can be reached.
    """
    grid = scene.occupancy
    if grid is None:
        raise MissingGridError(f"scene {scene.scene_id} has no occupancy grid")
    target = scene.by_id().get(target_object_id)
    if target is None:
        raise UnknownObjectError(f"object id {target_object_id}")
    start_cell = grid.cell_of(*start.position)
    if not grid.is_free(*start_cell):
        raise RouteError(f"start cell {start_cell} is blocked")
    goals = adjacent_free_cells(grid, target.aabb)
    if start_cell in goals:
        return []
    path = shortest_cell_path(grid, start_cell, goals)
    if path is None:
        raise UnreachableTargetError(
            f"no path from {start_cell} to any cell adjacent to object {target_object_id}"
        )
    clauses = path_to_clauses(path, start.heading, target.category)
    # The verifier simulates clauses (untargeted moves advance 1 m), not the
    # cell path, so test the "straight ahead" claim under that simulation
    # and drop the adverb when the cone check would reject it.
    pose = start
    for clause in clauses[:-1]:
        pose = apply_clause(pose, clause, scene)
    if not _within_cone(pose, target):
        clauses[-1] = replace(clauses[-1], adverb=None)
    return clauses


def verify_route(
    steps: list[PlanStep] | tuple[PlanStep, ...],
    scene: SceneModel,
    start: AgentPose,
) -> list[RouteCheckReport]:
    """Thread the agent pose through all steps and check route feasibility.

    Per step, the first failing clause determines the verdict: "unparsed"
    for a movement fragment outside the grammar, "unknown-object" when a
    target matches no scene category, "direction-inconsistent" when
    "straight ahead" points more than 30 degrees away from the target, and
    "unreachable-target" when the occupancy grid admits no path.  Later
    steps are still checked from wherever the pose ended up.
    """
    reports: list[RouteCheckReport] = []
    pose = start
    for step in steps:
        fragments = parse_fragments(step.text)
        clauses = tuple(f.clause for f in fragments if f.clause)
        verdict, detail = "ok", ""
        for fragment in fragments:
            if fragment.clause is None:
                if fragment.is_movement:
                    verdict, detail = "unparsed", fragment.text
                    break
                continue
            clause = fragment.clause
            if clause.verb == TURN_VERB or clause.target_category is None:
                pose = apply_clause(pose, clause, scene)
                continue
            category = resolve_noun_phrase(clause.target_category, scene.categories())
            if category is None:
                verdict, detail = "unknown-object", clause.target_category
                break
            target = nearest_instance(scene, category, pose.position)
            if clause.adverb == "straight ahead" and not _within_cone(pose, target):
                verdict = "direction-inconsistent"
                detail = f"{clause.target_category} is not straight ahead"
                break
            if scene.occupancy is not None:
                grid = scene.occupancy
                start_cell: tuple[int, int] | None = grid.cell_of(*pose.position)
                if not grid.is_free(*start_cell):
                    # Untargeted moves advance a fixed 1 m without collision
                    # checks, so the simulated pose can sit inside furniture;
                    # route reachability is judged from the nearest free cell.
                    start_cell = nearest_free_cell(grid, pose.position)
                goals = adjacent_free_cells(grid, target.aabb)
                if start_cell is None or (
                    start_cell not in goals
                    and shortest_cell_path(grid, start_cell, goals) is None
                ):
                    verdict = "unreachable-target"
                    detail = f"no path to {clause.target_category}"
                    break
            pose = apply_clause(pose, clause, scene)
        reports.append(
            RouteCheckReport(
                step_index=step.index,
                clauses=clauses,
                final_pose=pose,
                verdict=verdict,
                detail=detail,
            )
        )
    return reports


def default_start_pose(scene: SceneModel) -> AgentPose:
    """Free occupancy cell nearest the grid origin, heading 0 (+y).

    Without a grid the agent starts at the world origin.
    """
    grid = scene.occupancy
    if grid is None:
        return AgentPose(position=(0.0, 0.0), heading=0)
    free = [
        (row, col)
        for row in range(grid.rows)
        for col in range(grid.cols)
        if not grid.is_blocked(row, col)
    ]
    if not free:
        raise RouteError(f"scene {scene.scene_id} occupancy grid is fully blocked")
    best = min(
        free, key=lambda c: (math.dist(grid.cell_center(*c), grid.origin), c)
    )
    return AgentPose(position=grid.cell_center(*best), heading=0)


def clause_to_text(clause: RouteClause) -> str:
    """Render a clause back to route language that re-parses to itself."""
    if clause.verb == TURN_VERB:
        return f"turn {clause.turn_degrees} degrees {clause.turn_direction}"
    parts = [clause.verb]
    if clause.adverb:
        parts.append(clause.adverb)
    if clause.target_category:
        parts.append(f"to the {clause.target_category}")
    return " ".join(parts)


def clauses_to_text(clauses: list[RouteClause]) -> str:
    return " and ".join(clause_to_text(c) for c in clauses)


def report_to_dict(report: RouteCheckReport) -> dict:
    return {
        "step_index": report.step_index,
        "verdict": report.verdict,
        "detail": report.detail,
        "clauses": [clause_to_text(c) for c in report.clauses],
        "final_pose": {
            "position": list(report.final_pose.position),
            "heading": report.final_pose.heading,
        },
    }
