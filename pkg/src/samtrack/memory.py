"""Appearance memory: per-frame key/value store read by joint non-local attention."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError, StateError

LOGIT_FLOOR = 700.0


@dataclass
class MemoryEntry:
    key: np.ndarray
    value: np.ndarray
    frame_index: int
    is_box_mask: bool = False

    def __post_init__(self):
        if self.key.shape[:2] != self.value.shape[:2]:
            raise InvalidArgumentError("key and value spatial dims differ")


@dataclass
class MemoryBank:
    """Ordered interval entries plus an optional "last preserved frame" slot.

    ``sampling_interval`` of 0 keeps the initialization entry only; ``None``
    disables interval sampling (only the last slot is refreshed).
    """

    sampling_interval: int | None = 5
    always_include_last: bool = True
    capacity: int = 40
    entries: list[MemoryEntry] = field(default_factory=list)
    last: MemoryEntry | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError("capacity must be positive")
        if self.sampling_interval is not None and self.sampling_interval < 0:
            raise ConfigurationError("sampling interval must be >= 0 or None")
        self._stack = None

    def __len__(self) -> int:
        """Occupied slots: interval entries plus the last slot when set."""
        return len(self.entries) + (self.last is not None)

    @property
    def last_frame_index(self) -> int:
        idx = [e.frame_index for e in self.entries]
        if self.last is not None:
            idx.append(self.last.frame_index)
        return max(idx, default=-1)

    def readable(self) -> list[MemoryEntry]:
        """Entries attended by ``read``; the last slot is skipped when it aliases an entry."""
        out = list(self.entries)
        if self.last is not None and (not out or out[-1].frame_index != self.last.frame_index):
            out.append(self.last)
        return out

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All key vectors ``(N, ck)`` and value vectors ``(N, cv)`` in read order."""
        if self._stack is None:
            items = self.readable()
            if not items:
                raise StateError("memory bank is empty")
            ck = items[0].key.shape[2]
            cv = items[0].value.shape[2]
            self._stack = (
                np.concatenate([e.key.reshape(-1, ck) for e in items]),
                np.concatenate([e.value.reshape(-1, cv) for e in items]),
            )
        return self._stack

    def _touch(self):
        self._stack = None

    def seed(self, entry: MemoryEntry):
        """Store the initialization entry of an empty bank."""
        if self.entries or self.last is not None:
            raise StateError("bank already initialized")
        self.entries.append(entry)
        self._touch()

    def copy(self) -> "MemoryBank":
        bank = replace(self, entries=list(self.entries))
        bank._stack = self._stack
        return bank


def write(bank: MemoryBank, entry: MemoryEntry, preserved: bool) -> MemoryBank:
    """Gated write with the interval policy; mutates and returns ``bank``."""
    if entry.frame_index <= bank.last_frame_index:
        raise InvalidArgumentError(
            f"frame {entry.frame_index} is not after the last stored frame {bank.last_frame_index}"
        )
    interval = bank.sampling_interval
    if not preserved or interval == 0:
        return bank
    if interval is not None and entry.frame_index % interval == 0:
        bank.entries.append(entry)
        if len(bank.entries) > bank.capacity:
            # entry 0 is the initialization frame and never leaves
            del bank.entries[1]
    if bank.always_include_last:
        bank.last = entry
    bank._touch()
    return bank


def read(bank: MemoryBank, query) -> np.ndarray:
    """Retrieve values for every query position.

    Attention weights are a softmax over every position of every stored
    frame jointly, so each query position gets one simplex over the whole
    memory.
    """
    keys, values = bank.stacked()
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 3 or query.shape[2] != keys.shape[1]:
        raise InvalidArgumentError(
            f"query channels {query.shape[-1]} do not match key channels {keys.shape[1]}"
        )
    h, w, ck = query.shape
    logits = query.reshape(-1, ck) @ keys.T
    logits -= logits.max(axis=1, keepdims=True)
    # keep exp out of the (slow) subnormal range; such weights are < 1e-304 anyway
    np.maximum(logits, -LOGIT_FLOOR, out=logits)
    np.exp(logits, out=logits)
    norm = logits.sum(axis=1, keepdims=True)
    out = (logits @ values) / norm
    return out.reshape(h, w, -1)


def attention_weights(bank: MemoryBank, query) -> np.ndarray:
    """The full ``(positions, memory positions)`` attention matrix used by ``read``."""
    keys, _ = bank.stacked()
    q = np.asarray(query, dtype=np.float64)
    logits = q.reshape(-1, q.shape[2]) @ keys.T
    e = np.exp(np.maximum(logits - logits.max(axis=1, keepdims=True), -LOGIT_FLOOR))
    return e / e.sum(axis=1, keepdims=True)


def readout_concat(retrieved, query_value) -> np.ndarray:
    """Channel concatenation, retrieved value first."""
    retrieved = np.asarray(retrieved, dtype=np.float64)
    query_value = np.asarray(query_value, dtype=np.float64)
    if retrieved.shape[:2] != query_value.shape[:2]:
        raise InvalidArgumentError("retrieved and query value spatial dims differ")
    return np.concatenate([retrieved, query_value], axis=2)


def replace_box_mask_entry(bank: MemoryBank, entry: MemoryEntry) -> MemoryBank:
    """Swap the box-mask placeholder's key/value for ``entry``'s, keeping its frame index."""
    for i, old in enumerate(bank.entries):
        if old.is_box_mask:
            bank.entries[i] = MemoryEntry(entry.key, entry.value, old.frame_index, False)
            bank._touch()
            return bank
    raise StateError("bank holds no box-mask entry")
