import numpy as np

from hoardbench.rng import RunStreams, Substream


def test_same_seed_same_draws():
    a = Substream(42, "env")
    b = Substream(42, "env")
    assert np.array_equal(a.uniform(size=10), b.uniform(size=10))


def test_streams_are_independent_of_each_other():
    # Consuming one stream must not move any other.
    s1 = RunStreams(7)
    s2 = RunStreams(7)
    s1.env.uniform(size=1000)
    s1.adversary.normal(size=50)
    assert np.array_equal(s1.agent.uniform(size=20), s2.agent.uniform(size=20))
    assert np.array_equal(s1.verifier.random(size=20), s2.verifier.random(size=20))


def test_named_streams_differ():
    s = RunStreams(3)
    assert not np.array_equal(s.env.uniform(size=8), s.agent.uniform(size=8))


def test_draw_counting():
    s = RunStreams(0)
    s.env.uniform(size=100)
    s.env.integers(0, 10)
    s.agent.normal()
    counts = s.draw_counts()
    assert counts["env"] == 2
    assert counts["agent"] == 1
    assert counts["adversary"] == 0


def test_unknown_stream_rejected():
    import pytest

    with pytest.raises(KeyError):
        Substream(0, "nope")
