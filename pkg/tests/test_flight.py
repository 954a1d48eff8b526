import pytest

from uavsearch.flight import ARRIVED, DEADLINE, STOPPED, Flight


def recorder():
    frames = []
    return frames, lambda pose, k: frames.append((k, pose.timestamp, pose.position))


def test_frames_at_multiples_of_period():
    frames, cb = recorder()
    f = Flight((0, 0), 40.0, 10.0, 1.0, 100.0, cb)
    assert f.follow([(25, 0)], 100.0) == ARRIVED
    assert [k for k, _, _ in frames] == [1, 2]
    assert [t for _, t, _ in frames] == [1.0, 2.0]
    assert frames[0][2] == (10.0, 0.0, 40.0)
    assert f.t == pytest.approx(2.5)
    assert f.track[-1] == (25.0, 0.0, pytest.approx(2.5))


def test_short_budget_gives_one_frame():
    frames, cb = recorder()
    f = Flight((0, 0), 40.0, 10.0, 0.5, 0.5, cb)
    assert f.follow([(100, 0)], 10.0) == DEADLINE
    f.hover(10.0)
    assert len(frames) == 1 and f.t == 0.5 and f.exhausted
    assert f.xy == (5.0, 0.0)


def test_deadline_never_overrun():
    f = Flight((0, 0), 40.0, 7.0, 0.3, 1000.0)
    assert f.follow([(100, 0), (100, 100)], 13.37) == DEADLINE
    assert f.t == pytest.approx(13.37)
    assert all(t <= 13.37 + 1e-12 for _, _, t in f.track)


def test_stop_callback():
    f = Flight((0, 0), 40.0, 10.0, 0.5, 100.0)
    assert f.follow([(100, 0)], 100.0, stop=lambda: f.t >= 2.0) == STOPPED
    assert f.t == pytest.approx(2.0)


def test_on_move_receives_contiguous_segments():
    segs = []
    f = Flight((0, 0), 40.0, 10.0, 0.5, 100.0)
    f.follow([(10, 0), (10, 10)], 100.0, on_move=lambda a, b: segs.append((a, b)))
    for (a0, b0), (a1, _) in zip(segs, segs[1:]):
        assert b0 == a1
    assert segs[0][0] == (0.0, 0.0) and segs[-1][1] == (10.0, 10.0)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        Flight((0, 0), 40.0, 0.0, 0.5, 10.0)
