"""Receptive-field arithmetic for conv stacks, with an interval model for
deformable layers.

A deformable layer whose sampling offsets are bounded by ``max_offset``
pixels (in its input grid) covers an effective kernel extent anywhere in
``[kernel, kernel + 2 * max_offset]``; folding both ends through the stack
gives the smallest and largest reachable receptive field.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    stride: int = 1
    padding: int = 0
    max_offset: float = 0.0

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if not self.max_offset >= 0:
            raise ValueError(f"max_offset must be >= 0, got {self.max_offset}")


@dataclass(frozen=True)
class RfState:
    rf: float = 1
    jump: int = 1

    def __post_init__(self):
        if self.rf < 1 or self.jump < 1:
            raise ValueError(f"invalid receptive field state {self}")


def _fold(stack: Iterable[ConvSpec], init: RfState, widen: bool) -> RfState:
    rf, jump = init.rf, init.jump
    for conv in stack:
        extent = conv.kernel - 1
        if widen and conv.max_offset:
            extent = extent + 2 * conv.max_offset
        rf = rf + extent * jump
        jump = jump * conv.stride
    return RfState(rf, jump)


def static_rf(stack: Sequence[ConvSpec], init: RfState = RfState()) -> RfState:
    if any(c.max_offset != 0 for c in stack):
        raise ValueError("stack has deformable layers; use deformed_rf_bound")
    return _fold(stack, init, False)


def deformed_rf_bound(stack: Sequence[ConvSpec], init: RfState = RfState()) -> tuple[RfState, RfState]:
    """(smallest, largest) receptive field reachable with bounded offsets."""
    return _fold(stack, init, False), _fold(stack, init, True)


def rf_table(stack: Sequence[ConvSpec], init: RfState = RfState()) -> list[dict]:
    """One row per layer prefix: static (offsets ignored), min, max and jump."""
    rows = []
    for i in range(1, len(stack) + 1):
        prefix = stack[:i]
        plain = static_rf([replace(c, max_offset=0.0) for c in prefix], init)
        lo, hi = deformed_rf_bound(prefix, init)
        rows.append({"layer": i - 1, "static_rf": plain.rf, "min_rf": lo.rf, "max_rf": hi.rf, "jump": plain.jump})
    return rows


def parse_stack(text: str) -> list[ConvSpec]:
    """Parse ``"k,s,p[,offset];..."``; raises ValueError naming the bad token."""
    layers = []
    for token in text.split(";"):
        token = token.strip()
        if not token:
            continue
        parts = [t.strip() for t in token.split(",")]
        if len(parts) not in (3, 4):
            raise ValueError(f"bad layer token {token!r}: expected k,s,p[,offset]")
        try:
            k, s, p = (int(v) for v in parts[:3])
            off = float(parts[3]) if len(parts) == 4 else 0.0
            layers.append(ConvSpec(k, s, p, off))
        except ValueError as exc:
            raise ValueError(f"bad layer token {token!r}: {exc}") from None
    if not layers:
        raise ValueError(f"empty stack {text!r}")
    return layers
