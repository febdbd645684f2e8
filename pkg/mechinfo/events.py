from __future__ import annotations

import logging
import types
import weakref
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, DefaultDict, List, Optional, Type, TypeVar

LOG = logging.getLogger(__name__)

E = TypeVar("E")  # event type variable
Handler = Callable[[Any], None]


@dataclass(frozen=True)
class Event:
    """Base event marker class."""


# --- Progress events ---
@dataclass(frozen=True)
class StepConverged(Event):
    step: int
    load_fraction: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class IncrementCut(Event):
    step: int
    level: int
    reason: str


@dataclass(frozen=True)
class IterationCompleted(Event):
    iteration: int
    loss: float
    relative_loss: float


@dataclass(frozen=True)
class TrialCompleted(Event):
    number: int
    status: str
    objective: float


@dataclass(frozen=True)
class ChainProgress(Event):
    iteration: int
    acceptance_rate: float
    log_post: float


@dataclass
class _Subscription:
    handle_id: int
    once: bool
    target: Any  # handler or weakref.WeakMethod

    def resolve(self) -> Optional[Handler]:
        if isinstance(self.target, weakref.WeakMethod):
            return self.target()
        return self.target


class EventBus:
    """
    Progress bus shared by solver, optimizers and samplers.

    - a raising listener is logged and skipped; publishing continues
    - once=True listeners drop themselves after their first delivery
    - weak=True holds bound methods through WeakMethod (dead ones are pruned)
    - unsubscribe by handle id or by handler
    """

    def __init__(self) -> None:
        self._subs: DefaultDict[Type[Event], List[_Subscription]] = defaultdict(list)
        self._next_id: int = 1

    def subscribe(
        self, event_type: Type[E], handler: Handler, *, once: bool = False, weak: bool = False
    ) -> int:
        handle_id = self._next_id
        self._next_id += 1
        target: Any = weakref.WeakMethod(handler) if weak and isinstance(handler, types.MethodType) else handler
        self._subs[event_type].append(_Subscription(handle_id, once, target))
        return handle_id

    def unsubscribe(self, event_type: Type[E], handle_id: Optional[int] = None, handler: Optional[Handler] = None) -> None:
        subs = self._subs.get(event_type)
        if not subs:
            return
        self._subs[event_type] = [
            s
            for s in subs
            if not (
                (handle_id is not None and s.handle_id == handle_id)
                or (handler is not None and s.resolve() is handler)
            )
        ]

    def publish(self, event: Event) -> None:
        subs = self._subs.get(type(event))
        if not subs:
            return
        spent: List[int] = []
        for sub in list(subs):
            callback = sub.resolve()
            if callback is None:
                spent.append(sub.handle_id)
                continue
            try:
                callback(event)
            except Exception:
                LOG.exception("listener for %s failed", type(event).__name__)
            if sub.once:
                spent.append(sub.handle_id)
        if spent:
            self._subs[type(event)] = [s for s in self._subs[type(event)] if s.handle_id not in spent]

    def listener_count(self, event_type: Type[E]) -> int:
        return len(self._subs.get(event_type, ()))


def publish(bus: Optional[EventBus], event: Event) -> None:
    """Publish on an optional bus."""
    if bus is not None:
        bus.publish(event)
