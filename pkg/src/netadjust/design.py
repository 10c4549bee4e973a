"""Bernoulli treatment assignment and global counterfactual vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class TreatmentVector:
    """Binary assignment vector with its design probability."""

    w: np.ndarray
    pi: float

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.size and not np.all((w == 0) | (w == 1)):
            raise InvalidParameterError("treatment entries must be 0 or 1")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def n1(self) -> int:
        return int(self.w.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1


def stream_rng(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent RNG stream keyed by (master seed, replicate indices).

    Uses SeedSequence spawning semantics so parallel replicates reproduce
    bitwise regardless of scheduling order.
    """
    return np.random.default_rng(
        np.random.SeedSequence((int(master_seed),) + tuple(int(i) for i in indices))
    )


def bernoulli_assign(n: int, pi: float, seed) -> TreatmentVector:
    """Draw i.i.d. Bernoulli(pi) treatments, deterministic given the seed.

    ``seed`` may be an int or an already-constructed Generator (used for
    replicate streams).
    """
    if not 0.0 < pi < 1.0:
        raise InvalidParameterError("pi must lie strictly between 0 and 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = (rng.random(n) < pi).astype(np.float64)
    return TreatmentVector(w, pi)


def global_vector(n: int, arm: int) -> TreatmentVector:
    """All-control (arm=0) or all-treated (arm=1) assignment."""
    if arm not in (0, 1):
        raise InvalidParameterError("arm must be 0 or 1")
    # pi is nominal here; the vector is a deterministic counterfactual
    return TreatmentVector(np.full(n, float(arm)), pi=0.5)
