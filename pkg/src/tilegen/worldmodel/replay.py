"""Top-N_q loss priority queue and long-tail sampling probability."""

from __future__ import annotations

import numpy as np


class LongtailQueue:
    """Keeps the capacity highest-loss sample ids; ties keep the most recent."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._loss = np.full(capacity, -np.inf, dtype=np.float64)
        self._tick = np.zeros(capacity, dtype=np.int64)
        self._key: list = [None] * capacity
        self._slot: dict = {}
        self._free = list(range(capacity - 1, -1, -1))
        self._clock = 0

    def __len__(self) -> int:
        return len(self._slot)

    def __contains__(self, key) -> bool:
        return key in self._slot

    def loss_of(self, key) -> float:
        return float(self._loss[self._slot[key]])

    def keys(self) -> list:
        order = sorted(self._slot.values())
        return [self._key[s] for s in order]

    def upsert(self, key, loss: float) -> None:
        loss = float(loss)
        self._clock += 1
        slot = self._slot.get(key)
        if slot is not None:
            self._loss[slot] = loss
            self._tick[slot] = self._clock
            return
        if self._free:
            slot = self._free.pop()
        else:
            lmin = self._loss.min()
            if loss < lmin:
                return
            cands = np.flatnonzero(self._loss == lmin)
            slot = int(cands[np.argmin(self._tick[cands])])
            del self._slot[self._key[slot]]
        self._key[slot] = key
        self._slot[key] = slot
        self._loss[slot] = loss
        self._tick[slot] = self._clock

    def sample(self, count: int, rng: np.random.Generator) -> list:
        if not self._slot:
            raise ValueError("cannot sample from an empty queue")
        order = sorted(self._slot.values())
        picks = rng.integers(0, len(order), size=count)
        return [self._key[order[i]] for i in picks]

    def state(self) -> dict:
        order = sorted(self._slot.values())
        return {
            "keys": [list(self._key[s]) if isinstance(self._key[s], tuple) else self._key[s] for s in order],
            "losses": [float(self._loss[s]) for s in order],
            "ticks": [int(self._tick[s]) for s in order],
            "clock": self._clock,
        }

    @classmethod
    def from_state(cls, capacity: int, state: dict) -> "LongtailQueue":
        queue = cls(capacity)
        for raw_key, loss, tick in zip(state["keys"], state["losses"], state["ticks"]):
            key = tuple(raw_key) if isinstance(raw_key, list) else raw_key
            slot = queue._free.pop()
            queue._key[slot] = key
            queue._slot[key] = slot
            queue._loss[slot] = loss
            queue._tick[slot] = tick
        queue._clock = int(state["clock"])
        return queue


def longtail_probability(avg_loss: float, ref_loss: float, p_max: float = 0.3) -> float:
    """p = p_max * clamp(1 - avg/ref, 0, 1); zero when no reference yet."""
    if ref_loss <= 0.0:
        return 0.0
    frac = 1.0 - avg_loss / ref_loss
    return p_max * min(max(frac, 0.0), 1.0)
