"""Episode replay records and their text / SVG renderings."""
from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .. import categories as cat
from ..errors import BadRecord, SemnavError
from ..scene import Scene, TaskSpec, scene_from_dict, scene_to_dict

RECORD_FORMAT = "semnav-replay"
RECORD_VERSION = 1
_AGENT_COLOURS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
_ARROWS = {0: ">", 90: "v", 180: "<", 270: "^"}


def make_record(scene: Scene, task: TaskSpec, result) -> dict:
    if result.trace is None:
        raise BadRecord("episode was run without trace logging")
    return {
        "format": RECORD_FORMAT,
        "version": RECORD_VERSION,
        "scene": scene_to_dict(scene),
        "task": task.to_dict(),
        "result": result.to_dict(with_trace=True),
    }


def save_record(record: dict, path) -> Path:
    from .episode import _jsonable

    path = Path(path)
    path.write_text(json.dumps(record, sort_keys=True, default=_jsonable))
    return path


def load_record(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise BadRecord(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise BadRecord(f"{path}: not JSON ({exc})") from None
    check_record(data)
    return data


def check_record(rec) -> tuple[Scene, TaskSpec, list]:
    """Validate a record; returns the parsed scene, task and frame list."""
    if not isinstance(rec, dict) or rec.get("format") != RECORD_FORMAT:
        raise BadRecord(f"not a {RECORD_FORMAT} record")
    if rec.get("version") != RECORD_VERSION:
        raise BadRecord(f"unsupported record version {rec.get('version')!r}")
    try:
        scene = scene_from_dict(rec["scene"])
        task = TaskSpec.from_dict(rec["task"])
        frames = rec["result"]["trace"]
    except (KeyError, TypeError, SemnavError) as exc:
        raise BadRecord(f"malformed record: {exc}") from None
    if not isinstance(frames, list) or not frames:
        raise BadRecord("record has no frames")
    L, W = scene.dims
    for i, fr in enumerate(frames):
        agents = fr.get("agents") if isinstance(fr, dict) else None
        if not isinstance(agents, list) or len(agents) != task.N:
            raise BadRecord(f"frame {i}: expected {task.N} agents")
        for a in agents:
            x, y = a.get("cell", (-1, -1))
            if not (0 <= x < L and 0 <= y < W):
                raise BadRecord(f"frame {i}: agent cell {(x, y)} out of bounds")
    return scene, task, frames


def _base_chars(scene: Scene, task: TaskSpec) -> np.ndarray:
    grid = np.full(scene.dims, ".", dtype="<U1")
    grid[scene.occupancy] = "#"
    targets = set(task.targets)
    for o in scene.objects:
        ch = "T" if o.category in targets else "o"
        for x, y in o.footprint:
            grid[x, y] = ch
    return grid


def text_frames(rec: dict) -> list[str]:
    """One ASCII grid per frame (rows are y, columns x).

    ``#`` wall, ``o`` object, ``T`` target object, ``:`` visited cell,
    ``*`` current sub-goal, ``0``-``4`` agents.
    """
    scene, task, frames = check_record(rec)
    base = _base_chars(scene, task)
    visited = np.zeros(scene.dims, dtype=bool)
    out = []
    for fr in frames:
        g = base.copy()
        for a in fr["agents"]:
            visited[tuple(a["cell"])] = True
        g[visited & (base == ".")] = ":"
        for a in fr["agents"]:
            if a.get("subgoal") is not None:
                g[tuple(a["subgoal"])] = "*"
        for i, a in enumerate(fr["agents"]):
            g[tuple(a["cell"])] = str(i)
        head = [f"round {fr['round']}"]
        for i, a in enumerate(fr["agents"]):
            state = "done" if a.get("done") else (a.get("action") or "-")
            head.append(f"a{i}{_ARROWS.get(a['heading'], '?')}p{a['pitch']:+d}:{state}")
        if fr.get("found"):
            head.append("found=" + ",".join(f"{c}@a{ag}" for c, ag, _ in fr["found"]))
        rows = ["".join(g[:, y]) for y in range(scene.dims[1])]
        out.append(" ".join(head) + "\n" + "\n".join(rows) + "\n")
    return out


def render_svg(rec: dict, scale: int = 6) -> str:
    """Top-down SVG: walls, objects (targets outlined), agent paths with
    per-step markers, sub-goal crosses and found-event rings."""
    scene, task, frames = check_record(rec)
    L, W = scene.dims
    s = scale
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{L * s}" height="{W * s}" viewBox="0 0 {L * s} {W * s}">',
        f'<rect x="0" y="0" width="{L * s}" height="{W * s}" fill="#ffffff"/>',
        '<g id="walls" fill="#404040">',
    ]
    occ = scene.occupancy
    for x in range(L):
        y = 0
        while y < W:
            if occ[x, y]:
                y0 = y
                while y < W and occ[x, y]:
                    y += 1
                parts.append(f'<rect x="{x * s}" y="{y0 * s}" width="{s}" height="{(y - y0) * s}"/>')
            else:
                y += 1
    parts.append("</g>")
    targets = set(task.targets)
    parts.append('<g id="objects">')
    for o in scene.objects:
        is_t = o.category in targets
        fill = "#f2c14e" if is_t else "#b8c4d0"
        stroke = ' stroke="#000000" stroke-width="1"' if is_t else ""
        name = escape(cat.NAMES[o.category])
        for x, y in o.footprint:
            parts.append(f'<rect x="{x * s}" y="{y * s}" width="{s}" height="{s}" fill="{fill}"{stroke}>'
                         f"<title>{name}</title></rect>")
    parts.append("</g>")
    c = s / 2
    for i in range(task.N):
        colour = _AGENT_COLOURS[i % len(_AGENT_COLOURS)]
        pts = [fr["agents"][i]["cell"] for fr in frames]
        path = " ".join(f"{x * s + c:g},{y * s + c:g}" for x, y in pts)
        parts.append(f'<g id="agent{i}" stroke="{colour}" fill="{colour}">')
        parts.append(f'<polyline points="{path}" fill="none" stroke-width="{max(1, s // 3)}" stroke-opacity="0.7"/>')
        for k, (x, y) in enumerate(pts):
            parts.append(f'<circle cx="{x * s + c:g}" cy="{y * s + c:g}" r="{max(1, s // 4)}">'
                         f"<title>agent {i} round {frames[k]['round']}</title></circle>")
        seen = set()
        for fr in frames:
            sg = fr["agents"][i].get("subgoal")
            if sg is not None and tuple(sg) not in seen:
                seen.add(tuple(sg))
                x, y = sg
                parts.append(f'<path d="M{x * s} {y * s} L{(x + 1) * s} {(y + 1) * s} M{(x + 1) * s} {y * s} '
                             f'L{x * s} {(y + 1) * s}" stroke-width="1" fill="none"/>')
        x, y = pts[0]
        parts.append(f'<rect x="{x * s}" y="{y * s}" width="{s}" height="{s}" fill-opacity="0.4"/>')
        parts.append("</g>")
    parts.append('<g id="found" fill="none" stroke="#000000" stroke-width="2">')
    last = frames[-1].get("found", [])
    for name, ag, step in last:
        idx = min(int(step), len(frames) - 1)
        x, y = frames[idx]["agents"][ag]["cell"]
        parts.append(f'<circle cx="{x * s + c:g}" cy="{y * s + c:g}" r="{2 * s}">'
                     f"<title>{escape(str(name))} found by agent {ag} at step {step}</title></circle>")
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
