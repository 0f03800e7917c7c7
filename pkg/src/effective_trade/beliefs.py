"""Mode-based anticipation over finite-support subjective beliefs.

The anticipation of a transformed outcome is its most probable image value:
push the belief forward through the transform, add up probability mass per
image value, and return every value attaining the maximum (ties preserved).
Conditioning restricts the support to outcomes compatible with all
observations inside a limited memory window and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ContractViolation

__all__ = ["FiniteBelief", "History", "pushforward_mode", "conditional_mode"]

MASS_TOL = 1e-12
VALUE_TOL = 1e-9


@dataclass(frozen=True)
class FiniteBelief:
    """Distinct outcome values with probabilities summing to one."""

    support: tuple
    probabilities: tuple

    def __post_init__(self):
        support = tuple(self.support)
        probs = tuple(float(p) for p in self.probabilities)
        if not support:
            raise ContractViolation("belief support must be non-empty")
        if len(support) != len(probs):
            raise ContractViolation("support and probabilities differ in length")
        if any(p < 0 for p in probs):
            raise ContractViolation("probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > MASS_TOL:
            raise ContractViolation(f"probabilities sum to {sum(probs)}, not 1")
        keys = [_value_key(v) for v in support]
        if len(set(keys)) != len(keys):
            raise ContractViolation("support values must be pairwise distinct")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probs)

    def restrict(self, keep_mask):
        support = tuple(v for v, k in zip(self.support, keep_mask) if k)
        probs = [p for p, k in zip(self.probabilities, keep_mask) if k]
        total = sum(probs)
        if not support or total <= 0:
            raise ContractViolation("conditioning ruled out the whole support")
        return FiniteBelief(support, tuple(p / total for p in probs))


@dataclass(frozen=True)
class History:
    """Time-stamped observations with a limited memory window.

    Only observations with timestamp in [now - window, now] are consulted;
    ``now`` defaults to the newest timestamp.
    """

    observations: tuple = ()
    window: int = 1
    now: Optional[float] = None

    def __post_init__(self):
        obs = tuple((float(t), v) for t, v in self.observations)
        if self.window < 1:
            raise ContractViolation("memory window must be at least 1")
        object.__setattr__(self, "observations", obs)

    def windowed(self):
        if not self.observations:
            return ()
        now = self.now if self.now is not None else max(t for t, _ in self.observations)
        return tuple((t, v) for t, v in self.observations if now - self.window <= t <= now)


_HASHABLE = (int, float, str, bytes, bool, np.floating, np.integer)


def _is_hashable(v):
    try:
        hash(v)
        return True
    except TypeError:
        return False


def _value_key(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        try:
            return ("vec",) + tuple(float(x) for x in np.asarray(v, dtype=float).ravel())
        except (TypeError, ValueError):
            return ("obj", repr(v))
    return ("scalar", v) if _is_hashable(v) else ("obj", repr(v))


def _group_images(values, tol=VALUE_TOL):
    """Group image values, merging numeric vectors within tolerance.

    Returns a list of group indices, one per value.
    """
    numeric = []
    groups = []
    assignment = []
    exact = {}
    for v in values:
        arr = None
        if isinstance(v, (int, float, np.floating, np.integer)) or \
                isinstance(v, (list, tuple, np.ndarray)):
            try:
                arr = np.atleast_1d(np.asarray(v, dtype=float))
            except (TypeError, ValueError):
                arr = None
        if arr is not None:
            gid = None
            for g, rep in numeric:
                if rep.shape == arr.shape and np.all(np.abs(rep - arr) <= tol):
                    gid = g
                    break
            if gid is None:
                gid = len(groups)
                groups.append(v)
                numeric.append((gid, arr))
            assignment.append(gid)
        else:
            key = v if isinstance(v, _HASHABLE) or _is_hashable(v) else repr(v)
            if key not in exact:
                exact[key] = len(groups)
                groups.append(v)
            assignment.append(exact[key])
    return groups, assignment


def pushforward_mode(belief: FiniteBelief, transform: Callable) -> list:
    """Most probable image values of the belief under ``transform``.

    Ties are preserved: every image value attaining the maximal mass is
    returned, in first-appearance order.
    """
    images = [transform(v) for v in belief.support]
    groups, assignment = _group_images(images)
    mass = [0.0] * len(groups)
    for gid, p in zip(assignment, belief.probabilities):
        mass[gid] += p
    best = max(mass)
    return [groups[g] for g in range(len(groups))
            if mass[g] >= best - MASS_TOL]


def conditional_mode(belief: FiniteBelief, history: History,
                     compatible: Callable) -> list:
    """Modal outcomes of the belief conditioned on the windowed history.

    ``compatible(outcome, observation_value)`` decides whether an outcome
    survives an observation; observations older than the memory window are
    ignored. Raises when everything is ruled out.
    """
    window = history.windowed()
    keep = [all(compatible(v, obs) for _, obs in window) for v in belief.support]
    restricted = belief.restrict(keep)
    return pushforward_mode(restricted, lambda v: v)
