"""Exact combinatorial models of the three task worlds.

A state is an occupancy bitmask over the world's slots (bit ``i`` set means
slot ``i`` holds an object). Objects are interchangeable, so the bitmask is
the whole state.

Slot layouts:

* box manipulation: 3x3 grid, slot ``row * 3 + col``; boxes move one cell in
  a cardinal direction.
* shelf arrangement: slots 0-3 are table slots, 4-7 shelf slots; an object
  moves table -> free shelf slot or shelf -> free table slot.
* box stacking: 3 columns x 3 heights, slot ``col * 3 + height`` with height 0
  on the ground; only a column's top box moves, onto the ground or another
  column's top.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

from .errors import IllegalAction, InvalidState

WorldState = int


class WorldKind(str, enum.Enum):
    BOX_MANIPULATION = "BoxManipulation"
    SHELF_ARRANGEMENT = "ShelfArrangement"
    BOX_STACKING = "BoxStacking"


class Action(NamedTuple):
    from_slot: int
    to_slot: int

    def reversed(self) -> "Action":
        return Action(self.to_slot, self.from_slot)


@dataclass(frozen=True)
class WorldSpec:
    kind: WorldKind
    n_slots: int
    n_objects: int

    @classmethod
    def of(cls, kind: WorldKind | str) -> "WorldSpec":
        kind = WorldKind(kind)
        return _SPECS[kind]

    @property
    def name(self) -> str:
        return self.kind.value

    def validate(self, state: WorldState) -> None:
        if not isinstance(state, (int,)) or state < 0 or state >> self.n_slots:
            raise InvalidState(f"{state!r} is not a bitmask over {self.n_slots} slots")
        if bin(state).count("1") != self.n_objects:
            raise InvalidState(f"state {state:#b} does not hold {self.n_objects} objects")
        if self.kind is WorldKind.BOX_STACKING:
            for col in range(3):
                for h in range(1, 3):
                    if state >> (col * 3 + h) & 1 and not state >> (col * 3 + h - 1) & 1:
                        raise InvalidState(f"state {state:#b} has a floating box in column {col}")

    def is_valid(self, state: WorldState) -> bool:
        try:
            self.validate(state)
        except InvalidState:
            return False
        return True


_SPECS = {
    WorldKind.BOX_MANIPULATION: WorldSpec(WorldKind.BOX_MANIPULATION, 9, 4),
    WorldKind.SHELF_ARRANGEMENT: WorldSpec(WorldKind.SHELF_ARRANGEMENT, 8, 4),
    WorldKind.BOX_STACKING: WorldSpec(WorldKind.BOX_STACKING, 9, 4),
}

BOX_MANIPULATION = _SPECS[WorldKind.BOX_MANIPULATION]
SHELF_ARRANGEMENT = _SPECS[WorldKind.SHELF_ARRANGEMENT]
BOX_STACKING = _SPECS[WorldKind.BOX_STACKING]


def _grid_neighbors(cell: int) -> list[int]:
    r, c = divmod(cell, 3)
    out = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < 3 and 0 <= cc < 3:
            out.append(rr * 3 + cc)
    return out


def _column_height(state: WorldState, col: int) -> int:
    h = 0
    while h < 3 and state >> (col * 3 + h) & 1:
        h += 1
    return h


@lru_cache(maxsize=None)
def enumerate_states(spec: WorldSpec) -> tuple[WorldState, ...]:
    """All valid states of ``spec`` in ascending bitmask order."""
    states = []
    for slots in itertools.combinations(range(spec.n_slots), spec.n_objects):
        state = sum(1 << s for s in slots)
        if spec.is_valid(state):
            states.append(state)
    return tuple(sorted(states))


def legal_actions(spec: WorldSpec, state: WorldState) -> list[Action]:
    spec.validate(state)
    occupied = [i for i in range(spec.n_slots) if state >> i & 1]
    actions: list[Action] = []
    if spec.kind is WorldKind.BOX_MANIPULATION:
        for cell in occupied:
            actions += [Action(cell, nb) for nb in _grid_neighbors(cell) if not state >> nb & 1]
    elif spec.kind is WorldKind.SHELF_ARRANGEMENT:
        for slot in occupied:
            targets = range(4, 8) if slot < 4 else range(0, 4)
            actions += [Action(slot, t) for t in targets if not state >> t & 1]
    else:
        heights = [_column_height(state, col) for col in range(3)]
        for col in range(3):
            if heights[col] == 0:
                continue
            top = col * 3 + heights[col] - 1
            for other in range(3):
                if other != col and heights[other] < 3:
                    actions.append(Action(top, other * 3 + heights[other]))
    return actions


def apply_action(spec: WorldSpec, state: WorldState, action: Action) -> WorldState:
    if action not in legal_actions(spec, state):
        raise IllegalAction(f"{action} is not legal in state {state:#b}")
    return (state & ~(1 << action.from_slot)) | (1 << action.to_slot)


@lru_cache(maxsize=None)
def legal_transitions(spec: WorldSpec) -> tuple[tuple[WorldState, WorldState], ...]:
    """Undirected transitions as ``(a, b)`` pairs with ``a < b``, sorted.

    Every move is reversible, so each pair stands for both directions.
    """
    pairs = set()
    for s in enumerate_states(spec):
        for a in legal_actions(spec, s):
            t = apply_action(spec, s, a)
            pairs.add((min(s, t), max(s, t)))
    return tuple(sorted(pairs))


@lru_cache(maxsize=None)
def _transition_set(spec: WorldSpec) -> frozenset[tuple[WorldState, WorldState]]:
    return frozenset(legal_transitions(spec))


def is_legal_transition(spec: WorldSpec, a: WorldState, b: WorldState) -> bool:
    spec.validate(a)
    spec.validate(b)
    return (min(a, b), max(a, b)) in _transition_set(spec)


def format_state(spec: WorldSpec, state: WorldState) -> str:
    """Slot occupancy as a 0/1 string, slot 0 first."""
    return "".join("1" if state >> i & 1 else "0" for i in range(spec.n_slots))


def write_edge_list(spec: WorldSpec, path) -> int:
    transitions = legal_transitions(spec)
    with open(path, "w") as fh:
        for a, b in transitions:
            fh.write(f"{a} {b}\n")
    return len(transitions)
