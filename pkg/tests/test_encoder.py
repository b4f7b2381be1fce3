import numpy as np
import pytest

from memtrack.encoder import AGGREGATIONS, EncoderBlocks, encode_all, encode_long, encode_short, encode_track, fuse
from memtrack.errors import InvariantError
from memtrack.memory import MemoryBuffer, TrackState
from memtrack.nn import sinusoid_table
from memtrack.reference import naive_attend

D = 8


def states_from(rows, start=1):
    return [TrackState(r, (0.5, 0.5, 0.1, 0.1), 1.0, start + i) for i, r in enumerate(rows)]


def naive_block(params, query, rows, gain):
    ages = np.arange(len(rows))[::-1]
    keys = rows + gain * sinusoid_table(ages, rows.shape[1])
    return naive_attend(query[None], keys, rows, params.wq, params.wk, params.wv, params.wo, params.n_heads)[0]


@pytest.fixture
def blocks(rng):
    return EncoderBlocks.random(D, rng, n_heads=2, std=0.4, temporal_gain=0.7)


class TestShort:
    def test_single_state(self, rng):
        e = rng.normal(size=D)
        np.testing.assert_allclose(encode_short(states_from([e]), EncoderBlocks.identity(D)), e, atol=1e-15)

    def test_identical_states(self, rng):
        e = rng.normal(size=D)
        np.testing.assert_allclose(encode_short(states_from([e] * 5), EncoderBlocks.identity(D)), e, atol=1e-14)

    def test_matches_reference(self, rng, blocks):
        rows = rng.normal(size=(5, D))
        ref = naive_block(blocks.short, rows[-1], rows, blocks.temporal_gain)
        np.testing.assert_allclose(encode_short(states_from(rows), blocks), ref, atol=1e-12, rtol=0)

    def test_empty(self, blocks):
        with pytest.raises(ValueError):
            encode_short([], blocks)


class TestLong:
    def test_single_state(self, rng):
        e = rng.normal(size=D)
        np.testing.assert_allclose(encode_long(rng.normal(size=D), states_from([e]), EncoderBlocks.identity(D)), e, atol=1e-15)

    def test_swap_with_equal_encodings(self, rng):
        b = EncoderBlocks.random(D, rng, std=0.4, temporal_gain=0.0)
        rows = rng.normal(size=(4, D))
        dmat = rng.normal(size=D)
        swapped = rows[[1, 0, 2, 3]]
        np.testing.assert_allclose(encode_long(dmat, states_from(rows), b), encode_long(dmat, states_from(swapped), b),
                                   atol=1e-12, rtol=0)

    def test_matches_reference(self, rng, blocks):
        rows = rng.normal(size=(25, D))
        dmat = rng.normal(size=D)
        ref = naive_block(blocks.long, dmat, rows, blocks.temporal_gain)
        np.testing.assert_allclose(encode_long(dmat, states_from(rows), blocks), ref, atol=1e-12, rtol=0)

    def test_convex_with_identity(self, rng):
        rows = rng.normal(size=(10, D))
        out = encode_long(rng.normal(size=D), states_from(rows), EncoderBlocks.identity(D, beta=1.0))
        assert np.all(out <= rows.max(axis=0) + 1e-12) and np.all(out >= rows.min(axis=0) - 1e-12)

    def test_empty(self, blocks, rng):
        with pytest.raises(ValueError):
            encode_long(rng.normal(size=D), [], blocks)


class TestFuse:
    def test_equal_contexts(self, rng):
        v = rng.normal(size=D)
        trk, token = fuse(v, v, rng.normal(size=D), EncoderBlocks.identity(D))
        np.testing.assert_allclose(trk, v, atol=1e-14)
        np.testing.assert_allclose(token, v, atol=1e-14)

    def test_swap_with_equal_keys(self, rng):
        b = EncoderBlocks.random(D, rng, std=0.4)
        b.fusion.wk[...] = 0.0  # every key projects to the same vector
        a, c, dmat = rng.normal(size=(3, D))
        for x, y in zip(fuse(a, c, dmat, b), fuse(c, a, dmat, b)):
            np.testing.assert_allclose(x, y, atol=1e-12, rtol=0)

    def test_matches_reference(self, rng, blocks):
        a, c, dmat = rng.normal(size=(3, D))
        kv = np.stack([a, c])
        f = blocks.fusion
        att = naive_attend(dmat[None], kv, kv, f.wq, f.wk, f.wv, f.wo, f.n_heads)
        ffn = blocks.fusion_ffn
        hidden = np.maximum(att @ ffn.w1.T + ffn.b1, 0)
        out = (hidden @ ffn.w2.T + ffn.b2)[0]
        trk, token = fuse(a, c, dmat, blocks)
        np.testing.assert_allclose(trk, out[:D], atol=1e-12, rtol=0)
        np.testing.assert_allclose(token, out[D:], atol=1e-12, rtol=0)

    def test_width(self, rng, blocks):
        with pytest.raises(ValueError):
            fuse(np.zeros(D), np.zeros(D + 1), np.zeros(D), blocks)


class TestEncodeAll:
    def buffer(self, rng, n_tracks=2, frames=6):
        buf = MemoryBuffer()
        for tid in range(1, n_tracks + 1):
            buf = buf.admit(tid, TrackState(rng.normal(size=D), (0.5, 0.5, 0.1, 0.1), 1.0, 1))
        for t in range(2, frames + 1):
            buf = buf.append_frame(t, {tid: TrackState(rng.normal(size=D), (0.5, 0.5, 0.1, 0.1), 1.0, t)
                                       for tid in buf.track_ids if rng.random() < 0.7})
        return buf

    def test_empty(self, blocks):
        out, dm = encode_all(MemoryBuffer(), {}, blocks)
        assert out.shape == (0, D) and dm == {}

    def test_isolation(self, rng, blocks):
        buf = self.buffer(rng)
        dmats = {1: rng.normal(size=D), 2: rng.normal(size=D)}
        out, dm = encode_all(buf, dmats, blocks)
        other = buf.remove(2).admit(2, TrackState(rng.normal(size=D), (0.5, 0.5, 0.1, 0.1), 1.0, 6))
        out2, dm2 = encode_all(other, dmats, blocks)
        assert np.array_equal(out[0], out2[0]) and np.array_equal(dm[1], dm2[1])
        assert not np.array_equal(out[1], out2[1])

    def test_single_track_composition(self, rng, blocks):
        buf = self.buffer(rng, n_tracks=1, frames=30)
        dmat = rng.normal(size=D)
        out, dm = encode_all(buf, {1: dmat}, blocks)
        long = buf.window(1, blocks.long_len)
        asc = encode_short(long[-blocks.short_len:], blocks)
        alc = encode_long(dmat, long, blocks)
        trk, token = fuse(asc, alc, dmat, blocks)
        assert np.array_equal(out[0], trk) and np.array_equal(dm[1], token)

    def test_order_is_admission(self, rng, blocks):
        buf = self.buffer(rng, n_tracks=3)
        dmats = {t: rng.normal(size=D) for t in (1, 2, 3)}
        out, _ = encode_all(buf, dmats, blocks)
        for row, tid in zip(out, buf.track_ids):
            assert np.array_equal(row, encode_track(buf.window(tid, blocks.long_len), dmats[tid], blocks)[0])

    def test_missing_dmat(self, rng, blocks):
        with pytest.raises(InvariantError):
            encode_all(self.buffer(rng), {1: np.zeros(D)}, blocks)


@pytest.mark.parametrize("agg", AGGREGATIONS)
def test_aggregation_strategies(rng, agg):
    b = EncoderBlocks.random(D, rng, std=0.4, aggregation=agg)
    rows = rng.normal(size=(7, D))
    trk, token = encode_track(states_from(rows), rng.normal(size=D), b)
    assert trk.shape == (D,) and token.shape == (D,)
    if agg == "avg-pool":
        np.testing.assert_allclose(trk, rows.mean(axis=0), atol=1e-15)
    if agg == "max-pool":
        np.testing.assert_array_equal(trk, rows.max(axis=0))


def test_config_checks(rng):
    with pytest.raises(ValueError):
        EncoderBlocks.random(D, rng, short_len=6, long_len=5)
    with pytest.raises(ValueError):
        EncoderBlocks.random(D, rng, aggregation="median")
