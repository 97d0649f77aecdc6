"""Round envelope shared by the protocol and transport layers."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Phase(IntEnum):
    """Training phase carried by every round message.

    INITIAL: node is actively building the current tree.
    CLIENT_RESTING: client finished its tree and waits for the others.
    END_TREE: server signal that every client finished; exit the tree build.
    """

    INITIAL = 0
    CLIENT_RESTING = 1
    END_TREE = 2


@dataclass(frozen=True)
class RoundMessage:
    """One `{phase, data}` exchange unit.

    `data` is a single scalar (a split proposal or an aggregated split) or
    None for pure phase signals.
    """

    phase: Phase
    data: float | None = None
