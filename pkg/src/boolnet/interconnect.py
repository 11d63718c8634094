"""Candidate-set management: periodic refresh of each slot's weakest
candidates, with random or gradient-guided replacement sampling.

A refresh replaces, per gate input slot, the R lowest-weighted candidate
entries ((value, position) lexicographic, so ties go to the earlier
entry). Replacements inherit w_floor, the smallest surviving weight, so
the hardened argmax choice of a slot with non-degenerate weights is never
disturbed. New indices are sampled outside the kept set: a collision
would just duplicate a parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError, UsageError
from .model import LayerParams

# Fixed slice width for streaming gradient scans; memory use is
# O(batch * chunk), independent of the fan-in width I.
CHUNK = 1024


def sample_random(
    R: int, I: int, exclude, rng: np.random.Generator
) -> np.ndarray:
    """R distinct indices uniform over [0, I) minus the excluded set."""
    excl = np.unique(np.asarray(list(exclude), dtype=np.int64).reshape(-1))
    excl = excl[(excl >= 0) & (excl < I)]
    if I - excl.size < R:
        raise StructuralError(
            f"cannot draw {R} indices from [0,{I}) excluding {excl.size}"
        )
    pool = np.setdiff1d(np.arange(I, dtype=np.int64), excl, assume_unique=True)
    return rng.choice(pool, size=R, replace=False).astype(np.int64)


def connection_scores_chunk(x_cols: np.ndarray, dy_slot: np.ndarray) -> np.ndarray:
    """Per-input-column connection gradient: sum_b (2x - 1) * dy.

    Reduction runs along the batch axis only, so scores are bitwise
    identical whether columns are scored in one call or in slices.
    """
    x_cols = np.asarray(x_cols, dtype=np.float64)
    dy_slot = np.asarray(dy_slot, dtype=np.float64)
    return ((2.0 * x_cols - 1.0) * dy_slot[:, None]).sum(axis=0)


def sample_gradient_guided(
    R: int,
    I: int,
    x: np.ndarray,
    dy_slot: np.ndarray,
    exclude=(),
    chunk: int = CHUNK,
) -> np.ndarray:
    """Indices of the R most negative connection gradients, streaming.

    Scans the I columns in fixed-size slices and keeps a running best-R
    (score, index) set, so peak extra memory is O(batch * chunk) no matter
    how wide the layer is. Ties break toward the lower index; excluded
    (kept) candidates are never returned.
    """
    if x is None or dy_slot is None:
        raise UsageError("gradient-guided sampling needs a batch (x, dy)")
    x = np.asarray(x)
    dy_slot = np.asarray(dy_slot)
    if x.ndim != 2 or x.shape[1] != I:
        raise StructuralError(f"x must be (batch, {I})")
    excl = np.unique(np.asarray(list(exclude), dtype=np.int64).reshape(-1))
    excl = excl[(excl >= 0) & (excl < I)]
    if I - excl.size < R:
        raise StructuralError(
            f"cannot draw {R} indices from [0,{I}) excluding {excl.size}"
        )
    if R == 0:
        return np.empty(0, dtype=np.int64)

    best_vals = np.empty(0, dtype=np.float64)
    best_idx = np.empty(0, dtype=np.int64)
    for lo in range(0, I, chunk):
        hi = min(lo + chunk, I)
        vals = connection_scores_chunk(x[:, lo:hi], dy_slot)
        masked = excl[(excl >= lo) & (excl < hi)] - lo
        vals[masked] = np.inf
        vals = np.concatenate([best_vals, vals])
        idx = np.concatenate([best_idx, np.arange(lo, hi, dtype=np.int64)])
        # Primary key: score ascending (most negative first); ties by index.
        order = np.lexsort((idx, vals))[:R]
        best_vals = vals[order]
        best_idx = idx[order]
    return best_idx


class RandomSampler:
    """Uniform replacement sampling, vectorized across all slots."""

    mode = "random"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def sample_many(self, R: int, I: int, kept: np.ndarray, slots=None):
        n_slots = kept.shape[0]
        if I - kept.shape[1] < R:
            raise StructuralError(
                f"cannot draw {R} indices from [0,{I}) "
                f"excluding {kept.shape[1]} kept"
            )
        out = self.rng.integers(0, I, size=(n_slots, R), dtype=np.int64)
        for _ in range(100):
            srt = np.sort(out, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            bad |= (out[:, :, None] == kept[:, None, :]).any(axis=(1, 2))
            if not bad.any():
                return out
            out[bad] = self.rng.integers(
                0, I, size=(int(bad.sum()), R), dtype=np.int64
            )
        # Tiny pools can starve rejection sampling; finish slot by slot.
        srt = np.sort(out, axis=1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        bad |= (out[:, :, None] == kept[:, None, :]).any(axis=(1, 2))
        for s in np.flatnonzero(bad):
            out[s] = sample_random(R, I, kept[s], self.rng)
        return out


class GradientGuidedSampler:
    """Replacement sampling from the most negative connection gradients
    of the most recent training batch."""

    mode = "gradient_guided"

    def __init__(self, x: np.ndarray, dy: np.ndarray):
        # x: (batch, I) layer inputs; dy: (batch, G, 2) slot gradients.
        self.x = np.asarray(x)
        self.dy = np.asarray(dy)

    def sample_many(self, R: int, I: int, kept: np.ndarray, slots=None):
        if slots is None:
            raise UsageError("gradient-guided sampling needs slot identities")
        out = np.empty((kept.shape[0], R), dtype=np.int64)
        for row, (g, j) in enumerate(slots):
            out[row] = sample_gradient_guided(
                R, I, self.x, self.dy[:, g, j], exclude=kept[row]
            )
        return out


@dataclass
class RefreshEvent:
    """Record of one refresh: which slot entries changed and the floor
    weight each slot's newcomers inherited."""

    layer: int
    step: int
    n_replaced: int
    old_indices: np.ndarray  # (G, 2, R) int64
    new_indices: np.ndarray  # (G, 2, R) int64
    w_floor: np.ndarray  # (G, 2) float32

    def to_dict(self, detail: bool = False) -> dict:
        d = {
            "layer": self.layer,
            "step": self.step,
            "n_replaced": self.n_replaced,
            "n_slots": int(self.w_floor.size),
        }
        if self.w_floor.size:
            d["w_floor_min"] = float(self.w_floor.min())
            d["w_floor_max"] = float(self.w_floor.max())
        if detail:
            d["old_indices"] = self.old_indices.tolist()
            d["new_indices"] = self.new_indices.tolist()
            d["w_floor"] = self.w_floor.tolist()
        return d


class RefreshLog:
    """Newline-delimited JSON audit trail of refresh events."""

    def __init__(self, path, detail: bool = False):
        self.path = path
        self.detail = detail

    def write(self, event: RefreshEvent) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps(event.to_dict(self.detail)) + "\n")


def refresh_candidates(
    layer: LayerParams,
    sampler,
    R: int,
    fan_in_width: int,
    layer_index: int = 0,
    step: int = 0,
) -> RefreshEvent:
    """Replace each slot's R weakest candidates in place.

    Kept weights are untouched; each newcomer's weight is set to the
    minimum surviving weight of its slot (0 when R = C and nothing
    survives). Candidate distinctness within every slot is preserved.
    """
    if layer.frozen_interconnect:
        raise UsageError("refresh on a frozen interconnect")
    C = layer.n_candidates
    if not 0 <= R <= C:
        raise StructuralError(f"replacement budget {R} outside [0, {C}]")
    G = layer.n_gates
    if R == 0:
        return RefreshEvent(
            layer_index,
            step,
            0,
            np.empty((G, 2, 0), dtype=np.int64),
            np.empty((G, 2, 0), dtype=np.int64),
            np.zeros((G, 2), dtype=np.float32),
        )

    cand = layer.candidates.reshape(G * 2, C)
    weights = layer.conn_weights.reshape(G * 2, C)
    order = np.argsort(weights, axis=1, kind="stable")
    repl_pos = order[:, :R]
    kept_pos = order[:, R:]
    rows = np.arange(G * 2)[:, None]
    if R < C:
        w_floor = weights[rows[:, 0], kept_pos[:, 0]]
    else:
        w_floor = np.zeros(G * 2, dtype=weights.dtype)
    kept_idx = cand[rows, kept_pos]

    slots = [(s // 2, s % 2) for s in range(G * 2)]
    old_idx = cand[rows, repl_pos].copy()
    new_idx = sampler.sample_many(R, fan_in_width, kept_idx, slots)

    cand[rows, repl_pos] = new_idx.astype(cand.dtype)
    weights[rows, repl_pos] = w_floor[:, None]

    return RefreshEvent(
        layer_index,
        step,
        R,
        old_idx.reshape(G, 2, R).astype(np.int64),
        new_idx.reshape(G, 2, R).astype(np.int64),
        w_floor.reshape(G, 2).astype(np.float32),
    )
