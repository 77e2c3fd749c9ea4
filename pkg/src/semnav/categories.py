"""Global object-category vocabulary.

The semantic map needs a fixed channel count across scenes, so every scene
draws its categories from this table.  Ids are the list positions.
"""
from __future__ import annotations

from dataclasses import dataclass

CELL_SIZE = 0.05
BANDS = ("low", "eye", "high")


@dataclass(frozen=True)
class CategoryInfo:
    name: str
    size: tuple[int, int]  # footprint extent in cells
    band: str
    anchor: str | None = None  # large furniture this object usually sits by


VOCABULARY: tuple[CategoryInfo, ...] = (
    CategoryInfo("Desk", (14, 8), "eye"),
    CategoryInfo("CounterTop", (20, 8), "eye"),
    CategoryInfo("Bed", (20, 16), "eye"),
    CategoryInfo("Sofa", (18, 8), "eye"),
    CategoryInfo("DiningTable", (14, 10), "eye"),
    CategoryInfo("TVStand", (14, 6), "eye"),
    CategoryInfo("Shelf", (12, 6), "eye"),
    CategoryInfo("Toilet", (8, 8), "eye"),
    CategoryInfo("Fridge", (10, 10), "eye"),
    CategoryInfo("Dresser", (12, 6), "eye"),
    CategoryInfo("Laptop", (6, 4), "eye", "Desk"),
    CategoryInfo("Apple", (3, 3), "low", "CounterTop"),
    CategoryInfo("Box", (6, 6), "low", "Shelf"),
    CategoryInfo("FloorLamp", (4, 4), "high", "Sofa"),
    CategoryInfo("Television", (8, 3), "eye", "TVStand"),
    CategoryInfo("AlarmClock", (3, 3), "low", "Dresser"),
    CategoryInfo("Book", (4, 3), "eye", "Shelf"),
    CategoryInfo("Mug", (3, 3), "eye", "CounterTop"),
    CategoryInfo("Pillow", (6, 4), "low", "Bed"),
    CategoryInfo("Vase", (4, 4), "high", "DiningTable"),
    CategoryInfo("HousePlant", (5, 5), "low", "Sofa"),
    CategoryInfo("Bowl", (4, 4), "eye", "DiningTable"),
    CategoryInfo("Towel", (5, 3), "high", "Toilet"),
    CategoryInfo("Bottle", (3, 3), "eye", "Fridge"),
)

K_TOTAL = len(VOCABULARY)
NAMES: tuple[str, ...] = tuple(c.name for c in VOCABULARY)
_INDEX = {name: i for i, name in enumerate(NAMES)}


def category_id(name: str) -> int:
    return _INDEX[name]


def category_name(cid: int) -> str:
    return NAMES[cid]


def is_known(name: str) -> bool:
    return name in _INDEX


def anchor_ids() -> list[int]:
    return [i for i, c in enumerate(VOCABULARY) if c.anchor is None]


def dependents_of(anchor: int) -> list[int]:
    name = NAMES[anchor]
    return [i for i, c in enumerate(VOCABULARY) if c.anchor == name]
