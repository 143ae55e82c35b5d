from __future__ import annotations

import pytest

from seismoflow.clock import RealClock, VirtualClock


def test_virtual_clock_starts_at_zero():
    assert VirtualClock().now_ms() == 0


def test_advance_moves_time():
    clock = VirtualClock()
    clock.advance(250)
    assert clock.now_ms() == 250


def test_time_cannot_go_backwards():
    clock = VirtualClock(start_ms=100)
    with pytest.raises(ValueError):
        clock.advance_to(50)


def test_timers_fire_in_due_order():
    clock = VirtualClock()
    fired = []
    clock.schedule(30, lambda: fired.append("late"))
    clock.schedule(10, lambda: fired.append("early"))
    clock.schedule(10, lambda: fired.append("early-second"))
    clock.advance_to(100)
    assert fired == ["early", "early-second", "late"]


def test_timer_sees_its_due_time():
    clock = VirtualClock()
    seen = []
    clock.schedule(40, lambda: seen.append(clock.now_ms()))
    clock.advance_to(1000)
    assert seen == [40]


def test_cancelled_timer_does_not_fire():
    clock = VirtualClock()
    fired = []
    handle = clock.schedule(10, lambda: fired.append(1))
    handle.cancel()
    clock.advance(100)
    assert fired == []


def test_timer_scheduled_by_callback_fires_within_same_advance():
    clock = VirtualClock()
    fired = []

    def first():
        fired.append("first")
        clock.schedule(5, lambda: fired.append("chained"))

    clock.schedule(10, first)
    clock.advance_to(100)
    assert fired == ["first", "chained"]


def test_timer_beyond_target_stays_pending():
    clock = VirtualClock()
    fired = []
    clock.schedule(500, lambda: fired.append(1))
    clock.advance_to(499)
    assert fired == []
    clock.advance_to(500)
    assert fired == [1]


def test_real_clock_monotonic_enough():
    clock = RealClock()
    a = clock.now_ms()
    b = clock.now_ms()
    assert b >= a > 1_500_000_000_000  # sometime after 2017
