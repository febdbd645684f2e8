from __future__ import annotations

from mechinfo.events import ChainProgress, EventBus, StepConverged, TrialCompleted, publish


def _step(k=1):
    return StepConverged(k, 0.1 * k, 3, 1e-9)


class Recorder:
    def __init__(self):
        self.seen = []

    def on_event(self, event):
        self.seen.append(event)


class TestEventBus:
    def test_delivers_by_exact_type(self):
        bus = EventBus()
        steps, trials = [], []
        bus.subscribe(StepConverged, steps.append)
        bus.subscribe(TrialCompleted, trials.append)
        bus.publish(_step())
        assert steps == [_step()]
        assert trials == []

    def test_once_listener_drops_itself(self):
        bus = EventBus()
        seen = []
        bus.subscribe(StepConverged, seen.append, once=True)
        bus.publish(_step(1))
        bus.publish(_step(2))
        assert [e.step for e in seen] == [1]
        assert bus.listener_count(StepConverged) == 0

    def test_failing_listener_does_not_stop_delivery(self):
        bus = EventBus()
        seen = []

        def broken(event):
            raise RuntimeError("listener bug")

        bus.subscribe(ChainProgress, broken)
        bus.subscribe(ChainProgress, seen.append)
        bus.publish(ChainProgress(100, 0.3, -12.0))
        assert len(seen) == 1

    def test_unsubscribe_by_handle_and_handler(self):
        bus = EventBus()
        seen = []
        handle = bus.subscribe(StepConverged, seen.append)
        bus.unsubscribe(StepConverged, handle_id=handle)
        bus.publish(_step())
        other = Recorder()
        bus.subscribe(StepConverged, other.on_event)
        bus.unsubscribe(StepConverged, handler=other.on_event)
        bus.publish(_step())
        assert seen == [] and other.seen == []

    def test_weak_method_is_pruned(self):
        bus = EventBus()
        rec = Recorder()
        bus.subscribe(StepConverged, rec.on_event, weak=True)
        bus.publish(_step())
        assert len(rec.seen) == 1
        del rec
        bus.publish(_step())
        assert bus.listener_count(StepConverged) == 0

    def test_publish_without_bus(self):
        publish(None, _step())
