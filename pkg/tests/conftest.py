"""Shared fixtures: golden planner examples and satisfiable spec synthesis."""

import random
import re
from importlib import resources

import pytest

from scotkit.constraints import (
    AlignedRow,
    Contains,
    LeftOf,
    NonOverlap,
    RightOf,
    Above,
    Below,
)
from scotkit.geometry import BBox
from scotkit.planner import EntitySpec, SceneSpec

_OUTPUT_BLOCK_RE = re.compile(r"Output:\s*```json\s*(.*?)```", re.DOTALL)


def load_system_prompt() -> str:
    return (
        resources.files("scotkit.resources")
        .joinpath("planner_system_prompt.txt")
        .read_text(encoding="utf-8")
    )


@pytest.fixture(scope="session")
def system_prompt() -> str:
    return load_system_prompt()


@pytest.fixture(scope="session")
def golden_examples(system_prompt) -> list[str]:
    """The seven worked planner outputs, as raw fenced JSON blocks."""
    blocks = [f"```json\n{m}\n```" for m in _OUTPUT_BLOCK_RE.findall(system_prompt)]
    assert len(blocks) == 7
    return blocks


NOUNS = [
    "apple", "bench", "tree", "lamp", "mug", "sofa", "vase", "book",
    "chair", "ball", "hat", "drum", "kite", "shoe", "clock", "plant",
]


def synth_satisfiable_spec(seed: int) -> SceneSpec:
    """Build a spec whose constraints are all witnessed by a hidden
    layout, so a perfect planner could always reach zero violations."""
    rng = random.Random(seed)
    n = rng.randint(2, 12)
    ncols = 1
    while ncols * ncols < n:
        ncols += 1
    nrows = -(-n // ncols)
    cell_w, cell_h = 1000 / ncols, 1000 / nrows

    ids = [f"e{i}" for i in range(n)]
    hidden: dict[str, BBox] = {}
    for i, eid in enumerate(ids):
        row, col = divmod(i, ncols)
        cx = (col + 0.5) * cell_w + rng.uniform(-0.1, 0.1) * cell_w
        cy = (row + 0.5) * cell_h + rng.uniform(-0.1, 0.1) * cell_h
        w = rng.uniform(0.3, 0.5) * cell_w
        h = rng.uniform(0.3, 0.5) * cell_h
        hidden[eid] = BBox(
            int(cx - w / 2), int(cy - h / 2), int(cx + w / 2), int(cy + h / 2)
        )

    def cx(eid):
        return (hidden[eid].xmin + hidden[eid].xmax) / 2

    def cy(eid):
        return (hidden[eid].ymin + hidden[eid].ymax) / 2

    cons = []
    n_directional = rng.randint(1, max(1, n - 1))
    attempts = 0
    while len(cons) < n_directional and attempts < 40:
        attempts += 1
        a, b = rng.sample(ids, 2)
        if abs(cx(a) - cx(b)) >= 60 and rng.random() < 0.5:
            cons.append(LeftOf(a, b) if cx(a) < cx(b) else RightOf(a, b))
        elif abs(cy(a) - cy(b)) >= 60:
            cons.append(Above(a, b) if cy(a) < cy(b) else Below(a, b))
    for _ in range(rng.randint(1, 3)):
        a, b = rng.sample(ids, 2)
        cons.append(NonOverlap(a, b))
    if rng.random() < 0.3 and nrows > 1:
        row = rng.randrange(nrows)
        members = [ids[row * ncols + c] for c in range(ncols) if row * ncols + c < n]
        if len(members) >= 2:
            dev = max(abs(cy(m) - sum(cy(x) for x in members) / len(members)) for m in members)
            cons.append(AlignedRow(tuple(members), tol=dev + 15))
    if rng.random() < 0.25:
        scene_id = "scene"
        ids.append(scene_id)
        hidden[scene_id] = BBox(0, 0, 1000, 1000)
        inner = rng.choice(ids[:-1])
        cons.append(Contains(scene_id, inner, margin=0))

    entities = tuple(
        EntitySpec(
            id=eid,
            phrase=NOUNS[i % len(NOUNS)],
            category=NOUNS[i % len(NOUNS)],
            size="background" if eid == "scene" else ("small" if n > 6 else "medium"),
        )
        for i, eid in enumerate(ids)
    )
    return SceneSpec(entities=entities, constraints=tuple(cons))
