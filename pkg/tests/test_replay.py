import numpy as np
import pytest

from sadq.replay import Batch, EmptyBuffer, ReplayBuffer, Transition


def make_t(i, done=False, truncated=False):
    return Transition(np.full(3, float(i)), i % 2, float(i),
                      np.full(3, float(i + 1)), done, truncated)


class TestRing:
    def test_push_grows_then_wraps(self):
        buf = ReplayBuffer(2, 3)
        for i in range(3):
            buf.push(make_t(i))
        assert buf.size == 2
        stored = {t.s[0] for t in buf.transitions()}
        assert stored == {1.0, 2.0}  # oldest (0) overwritten first

    def test_insertion_order_after_wrap(self):
        buf = ReplayBuffer(3, 3)
        for i in range(5):
            buf.push(make_t(i))
        assert [t.s[0] for t in buf.transitions()] == [2.0, 3.0, 4.0]

    def test_push_then_sample_single(self):
        buf = ReplayBuffer(4, 3)
        buf.push(make_t(7, done=True))
        batch = buf.sample(1, np.random.default_rng(0))
        assert isinstance(batch, Batch) and len(batch) == 1
        np.testing.assert_array_equal(batch.s[0], [7.0, 7.0, 7.0])
        assert batch.done[0] and not batch.truncated[0]

    def test_large_capacity_accepted(self):
        ReplayBuffer(100000, 4)

    def test_rejects_bad_shapes_and_values(self):
        buf = ReplayBuffer(2, 3)
        with pytest.raises(ValueError):
            buf.push(Transition(np.zeros(4), 0, 0.0, np.zeros(3),
                                False, False))
        with pytest.raises(ValueError):
            buf.push(Transition(np.array([np.nan, 0, 0]), 0, 0.0,
                                np.zeros(3), False, False))


class TestSampling:
    def test_empty_raises(self):
        with pytest.raises(EmptyBuffer):
            ReplayBuffer(2, 3).sample(1, np.random.default_rng(0))

    def test_oversampling_allowed(self):
        buf = ReplayBuffer(8, 3)
        buf.push(make_t(0))
        batch = buf.sample(5, np.random.default_rng(0))
        assert len(batch) == 5

    def test_uniform_frequency(self):
        buf = ReplayBuffer(16, 3)
        for i in range(10):
            buf.push(make_t(i))
        rng = np.random.default_rng(1)
        n = 100_000
        batch = buf.sample(n, rng)
        counts = np.bincount(batch.s[:, 0].astype(int), minlength=10)
        p = 1 / 10
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 3 * sigma)

    def test_seeded_determinism(self):
        buf = ReplayBuffer(16, 3)
        for i in range(10):
            buf.push(make_t(i))
        a = buf.sample(32, np.random.default_rng(5))
        b = buf.sample(32, np.random.default_rng(5))
        np.testing.assert_array_equal(a.s, b.s)
        np.testing.assert_array_equal(a.a, b.a)


class TestStateRoundtrip:
    def test_roundtrip_preserves_content_and_cursor(self):
        buf = ReplayBuffer(3, 3)
        for i in range(5):
            buf.push(make_t(i, truncated=(i == 4)))
        clone = ReplayBuffer(3, 3)
        clone.load_state_dict(buf.state_dict())
        assert clone.cursor == buf.cursor and clone.size == buf.size
        for a, b in zip(buf.transitions(), clone.transitions()):
            np.testing.assert_array_equal(a.s, b.s)
            assert (a.a, a.r, a.done, a.truncated) == \
                   (b.a, b.r, b.done, b.truncated)

    def test_geometry_mismatch_rejected(self):
        buf = ReplayBuffer(3, 3)
        buf.push(make_t(0))
        with pytest.raises(ValueError):
            ReplayBuffer(4, 3).load_state_dict(buf.state_dict())
