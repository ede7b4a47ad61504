"""Per-step masking surface for inference stacks that own the logits.

An external decode loop holds a SessionHandle and calls mask_step once per
token with its own probability vector; the handle returns the mask, the
masked argmax choice, and the renormalized distribution, then advances by
that choice. Results are bit-identical to the core engine driving the same
state, and core error types pass through unchanged.

Vectors cross the boundary as contiguous numpy arrays; no callbacks re-enter
host code from the core.
"""

from __future__ import annotations

import numpy as np

from callmask.decoder import (
    MaskVector,
    Vocabulary,
    apply_mask,
    compute_mask,
    new_session,
    step,
)
from callmask.errors import (
    ConstraintDeadlock,
    LengthMismatch,
    SchemaViolation,
    UnspellableRegistry,
)
from callmask.schema import load_registry

__all__ = [
    "SessionHandle",
    "SessionClosed",
    "open_session",
    "mask_step",
    "close",
    "is_done",
    "ConstraintDeadlock",
    "LengthMismatch",
    "SchemaViolation",
    "UnspellableRegistry",
]


class SessionClosed(RuntimeError):
    """The handle was closed; no further operations are allowed."""


class SessionHandle:
    """Opaque reference to one live decode session."""

    __slots__ = ("_state",)

    def __init__(self, state):
        self._state = state

    def _require_open(self):
        if self._state is None:
            raise SessionClosed("session handle is closed")
        return self._state


def open_session(registry_document, vocabulary) -> SessionHandle:
    """Create a session from a registry document (JSON text or parsed list)
    and an ordered token list. Raises SchemaViolation / UnspellableRegistry
    exactly as the core does."""
    registry = load_registry(registry_document)
    vocab = Vocabulary(tuple(vocabulary))
    return SessionHandle(new_session(registry, vocab))


def mask_step(handle: SessionHandle, dist) -> tuple[np.ndarray, int, np.ndarray]:
    """One masked decoding step on a caller-supplied distribution.

    Returns (mask, chosen token id, masked distribution) and advances the
    session by the chosen token. The choice is the argmax of dist * mask
    (lowest index on ties); with zero surviving mass the masked
    distribution falls back to uniform over the kept set.
    """
    state = handle._require_open()
    dist = np.ascontiguousarray(dist, dtype=float)
    if dist.shape != (len(state.vocab),):
        raise LengthMismatch(
            f"distribution has shape {dist.shape}, vocabulary size is {len(state.vocab)}"
        )
    mask: MaskVector = compute_mask(state)
    masked_dist = apply_mask(dist, mask)
    product = np.where(mask.values, dist, 0.0)
    if product.sum() > 0.0:
        chosen = int(np.argmax(product))
    else:
        chosen = int(np.argmax(mask.values))
    handle._state = step(state, chosen)
    return np.array(mask.values, dtype=bool), chosen, masked_dist


def is_done(handle: SessionHandle) -> bool:
    """Whether the session has consumed a complete response."""
    return handle._require_open().done


def emitted_text(handle: SessionHandle) -> str:
    """The characters emitted so far (diagnostic convenience)."""
    return handle._require_open().char_stream


def close(handle: SessionHandle) -> None:
    handle._require_open()
    handle._state = None
