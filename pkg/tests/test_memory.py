import json
import math

import numpy as np
import pytest

from hoardbench.core.state import Action, InputError, Observation
from hoardbench.memory import (
    CueVector,
    EpisodeRecord,
    LandmarkSet,
    MemoryStore,
    Query,
    StoreVariant,
    VerifyStatus,
    brute_force_retrieve,
    cue_similarity,
    decode_location,
    dump_store,
    encode_cue,
    grid_cell,
    index_partition,
    load_store,
    reference_partition,
    retrieve,
    trilaterate,
    write,
)
from hoardbench.rng import RunStreams, Substream
from hoardbench.verifier import VerifierSignal


def _landmarks(seed=0, count=25):
    return LandmarkSet.sample(count, Substream(seed, "env"))


def _store_with(episodes, variant=StoreVariant.CLUSTERED):
    store = MemoryStore(variant)
    for e in episodes:
        store.append(e)
    return store


def _episode(i, item_type, loc, landmarks, value=1.0):
    return EpisodeRecord(
        id=i,
        written_at=i,
        item_type=item_type,
        item_value=value,
        location=loc,
        cue=encode_cue(loc, landmarks),
    )


def _random_episodes(n, landmarks, stream, types=4):
    eps = []
    t = stream.integers(1, types + 1, size=n)
    locs = stream.uniform(0.05, 0.95, size=(n, 2))
    for i in range(n):
        eps.append(_episode(i, int(t[i]), (float(locs[i, 0]), float(locs[i, 1])), landmarks))
    return eps


# --- Cues -------------------------------------------------------------------


def test_cue_references_three_distinct_nearest_landmarks():
    lm = _landmarks()
    cue = encode_cue((0.25, 0.75), lm)
    assert len(set(cue.landmark_ids)) == 3
    # Oracle: brute-force nearest three.
    d = np.hypot(lm.positions[:, 0] - 0.25, lm.positions[:, 1] - 0.75)
    assert set(cue.landmark_ids) == set(np.argsort(d)[:3].tolist())


def test_cue_self_similarity_is_one():
    lm = _landmarks()
    cue = encode_cue((0.4, 0.6), lm)
    assert cue_similarity(cue, cue) == pytest.approx(1.0, abs=1e-12)


def test_cue_requires_distinct_landmarks():
    with pytest.raises(InputError):
        CueVector((1, 1, 2), (0.1, 0.2, 0.3), (0.0, 0.1, 0.2))


# --- Trilateration -----------------------------------------------------------


def test_decode_zero_drift_is_exact():
    lm = _landmarks(3)
    for loc in [(0.2, 0.3), (0.8, 0.1), (0.5, 0.55)]:
        rec = _episode(0, 1, loc, lm)
        decoded = decode_location(rec, lm)
        assert math.hypot(decoded[0] - loc[0], decoded[1] - loc[1]) < 1e-9


def test_decode_translation_equivariance():
    lm = _landmarks(4)
    loc = (0.4, 0.45)
    rec = _episode(0, 1, loc, lm)
    shifted = LandmarkSet(lm.ids, lm.positions + np.array([0.1, 0.0]))
    decoded = decode_location(rec, shifted)
    assert decoded[0] == pytest.approx(loc[0] + 0.1, abs=1e-9)
    assert decoded[1] == pytest.approx(loc[1], abs=1e-9)


def test_decode_collinear_falls_back_to_stored_location():
    lm = LandmarkSet(
        (0, 1, 2), np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
    )
    loc = (0.3, 0.7)
    # Cue built by hand against the collinear anchors.
    d = [math.hypot(loc[0] - x, loc[1] - y) for x, y in lm.positions]
    b = [math.atan2(y - loc[1], x - loc[0]) for x, y in lm.positions]
    rec = EpisodeRecord(0, 0, 1, 1.0, loc, CueVector((0, 1, 2), tuple(d), tuple(b)))
    assert decode_location(rec, lm) == loc


def test_decode_drift_error_band():
    # Monte Carlo oracle fixed ahead of the assertion: mean decode error for
    # drift sigma 0.02 over 1000 fixtures lies in [0.01, 0.04].
    stream = Substream(77, "env")
    errors = []
    for k in range(1000):
        lm = LandmarkSet.sample(12, stream)
        loc = (float(stream.uniform(0.1, 0.9)), float(stream.uniform(0.1, 0.9)))
        rec = _episode(0, 1, loc, lm)
        drifted = lm.drifted(0.02, stream)
        decoded = decode_location(rec, drifted)
        errors.append(math.hypot(decoded[0] - loc[0], decoded[1] - loc[1]))
    mean_error = float(np.mean(errors))
    assert 0.01 <= mean_error <= 0.04


def test_trilateration_rejects_collinear():
    anchors = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    point, degenerate = trilaterate(anchors, np.array([0.1, 0.1, 0.1]))
    assert degenerate and point is None


# --- Writes ------------------------------------------------------------------


def _dig(x, y, item_type=1, value=2.0, step=0):
    return Action(
        "dig",
        {"x": x, "y": y, "item_type": float(item_type), "item_value": value,
         "step": float(step)},
    )


def test_single_write_builds_cue_from_three_nearest():
    lm = _landmarks()
    store = MemoryStore(StoreVariant.CLUSTERED)
    obs = Observation({"phase": 0.0}, landmarks=lm.as_obs_tuples())
    write(store, obs, _dig(0.25, 0.75))
    assert len(store) == 1
    ep = store.episodes[0]
    assert ep.item_type == 1 and ep.item_value == 2.0
    assert ep.location == (0.25, 0.75)
    assert ep.cue == encode_cue((0.25, 0.75), lm)


def test_verifier_feedback_updates_status_without_appending():
    lm = _landmarks()
    store = MemoryStore(StoreVariant.CLUSTERED)
    obs = Observation({"phase": 0.0}, landmarks=lm.as_obs_tuples())
    for i in range(8):
        write(store, obs, _dig(0.1 + 0.1 * i, 0.5, step=i))
    signal = VerifierSignal(9, 7, 7, True, True, "cache_ok", target=7)
    write(store, obs, _dig(0, 0), verifier_feedback=signal)
    assert len(store) == 8
    assert store.episode_by_id(7).verify_status is VerifyStatus.PASSED
    # The status transition is one-way.
    with pytest.raises(InputError):
        write(store, obs, _dig(0, 0), verifier_feedback=signal)


def test_duplicate_episode_id_aborts():
    lm = _landmarks()
    store = MemoryStore(StoreVariant.FLAT)
    store.append(_episode(0, 1, (0.5, 0.5), lm))
    with pytest.raises(RuntimeError):
        store.append(_episode(0, 1, (0.4, 0.4), lm))


def test_thousand_writes_match_brute_force_partition():
    lm = _landmarks(5)
    store = MemoryStore(StoreVariant.CLUSTERED)
    stream = Substream(11, "env")
    obs = Observation({"phase": 0.0}, landmarks=lm.as_obs_tuples())
    types = stream.integers(1, 5, size=1000)
    locs = stream.uniform(0.0, 1.0, size=(1000, 2))
    for i in range(1000):
        write(store, obs, _dig(float(locs[i, 0]), float(locs[i, 1]), int(types[i]), step=i))
    partition = index_partition(store)
    assert sum(len(v) for v in partition.values()) == 1000
    assert partition == reference_partition(store.episodes)


def test_index_integrity_under_interleaved_feedback():
    lm = _landmarks(6)
    store = MemoryStore(StoreVariant.CLUSTERED)
    obs = Observation({"phase": 0.0}, landmarks=lm.as_obs_tuples())
    stream = Substream(12, "env")
    locs = stream.uniform(0.0, 1.0, size=(60, 2))
    for i in range(60):
        write(store, obs, _dig(float(locs[i, 0]), float(locs[i, 1]), 1 + i % 3, step=i))
        if i % 7 == 0:
            sig = VerifierSignal(i + 2, i, i, i % 2 == 0, True, "p", target=i)
            write(store, obs, _dig(0, 0), verifier_feedback=sig)
    assert index_partition(store) == reference_partition(store.episodes)


# --- Retrieval ---------------------------------------------------------------


def test_singleton_store_probes_one_for_both_variants():
    lm = _landmarks()
    for variant in StoreVariant:
        store = _store_with([_episode(0, 2, (0.3, 0.3), lm)], variant)
        q = Query(2, None, encode_cue((0.3, 0.3), lm))
        r = retrieve(store, q, lm)
        assert r.episode.id == 0
        assert r.probes_used == 1
        assert store.probe_counter == 1


def test_absent_type_returns_empty_with_zero_confidence():
    lm = _landmarks()
    for variant in StoreVariant:
        store = _store_with([_episode(0, 2, (0.3, 0.3), lm)], variant)
        r = retrieve(store, Query(5, None, encode_cue((0.3, 0.3), lm)), lm)
        assert r.episode is None and r.confidence == 0.0


def test_empty_query_rejected():
    lm = _landmarks()
    store = _store_with([_episode(0, 2, (0.3, 0.3), lm)])
    with pytest.raises(InputError):
        retrieve(store, Query(), lm)


def test_probe_counts_at_n1024_match_reference():
    # N=1024 uniform over 8 types, zero drift: the flat archive examines all
    # same-type episodes (roughly 128), the clustered index a handful.
    lm = _landmarks(9)
    stream = Substream(21, "env")
    episodes = _random_episodes(1024, lm, stream, types=8)
    flat = _store_with(episodes, StoreVariant.FLAT)
    clustered = _store_with(episodes, StoreVariant.CLUSTERED)
    flat_probes, clust_probes = [], []
    for e in episodes[::31]:
        q = Query(e.item_type, None, encode_cue(e.location, lm))
        rf = retrieve(flat, q, lm)
        rc = retrieve(clustered, q, lm)
        ref = brute_force_retrieve(flat, q, lm)
        assert rf.episode.id == ref.episode.id == rc.episode.id
        same_type = sum(1 for x in episodes if x.item_type == e.item_type)
        assert rf.probes_used == same_type
        flat_probes.append(rf.probes_used)
        clust_probes.append(rc.probes_used)
    assert np.mean(flat_probes) == pytest.approx(128, rel=0.25)
    assert max(clust_probes) <= 16


def test_equal_content_equivalence_up_to_64_episodes():
    # Identical episode sets, zero drift: flat, clustered, and the
    # brute-force reference agree on every query.
    stream = Substream(31, "env")
    for trial in range(6):
        lm = LandmarkSet.sample(15, stream)
        n = 8 * (trial + 1)
        episodes = _random_episodes(n, lm, stream, types=3)
        flat = _store_with(episodes, StoreVariant.FLAT)
        clustered = _store_with(episodes, StoreVariant.CLUSTERED)
        for e in episodes:
            q = Query(e.item_type, None, encode_cue(e.location, lm))
            ids = {
                retrieve(flat, q, lm).episode.id,
                retrieve(clustered, q, lm).episode.id,
                brute_force_retrieve(flat, q, lm).episode.id,
            }
            assert ids == {e.id}


def test_probe_scaling_ladder():
    # Flat probes grow linearly with same-type count; clustered probes stay
    # bounded by the populated-bucket sizes.
    stream = Substream(41, "env")
    lm = LandmarkSet.sample(25, stream)
    flat_means = {}
    clust_maxes = {}
    for n in (64, 256, 1024, 4096):
        episodes = _random_episodes(n, lm, stream, types=4)
        flat = _store_with(episodes, StoreVariant.FLAT)
        clustered = _store_with(episodes, StoreVariant.CLUSTERED)
        fp, cp = [], []
        for e in episodes[:: max(1, n // 32)]:
            q = Query(e.item_type, None, encode_cue(e.location, lm))
            fp.append(retrieve(flat, q, lm).probes_used)
            cp.append(retrieve(clustered, q, lm).probes_used)
        flat_means[n] = np.mean(fp)
        max_bucket = max(
            len(ids) for cells in clustered.index.values() for ids in cells.values()
        )
        clust_maxes[n] = (max(cp), max_bucket)
    for n in (64, 256, 1024):
        ratio = flat_means[4 * n] / flat_means[n]
        assert 2.5 <= ratio <= 6.0  # linear growth in same-type count
    for n, (worst, max_bucket) in clust_maxes.items():
        assert worst <= 9 * max_bucket


def test_storage_parity_between_variants():
    lm = _landmarks()
    stream = Substream(51, "env")
    episodes = _random_episodes(40, lm, stream)
    flat = _store_with(episodes, StoreVariant.FLAT)
    clustered = _store_with(episodes, StoreVariant.CLUSTERED)
    assert dump_store(flat) == dump_store(clustered)


def test_dump_load_round_trip():
    lm = _landmarks()
    stream = Substream(52, "env")
    store = _store_with(_random_episodes(12, lm, stream))
    text = dump_store(store)
    loaded = load_store(text, StoreVariant.CLUSTERED)
    assert dump_store(loaded) == text
    assert index_partition(loaded) == index_partition(store)
    assert json.loads(text)[0]["verify_status"] == "unverified"


def test_probe_counter_monotone_and_consistent():
    lm = _landmarks()
    stream = Substream(53, "env")
    store = _store_with(_random_episodes(30, lm, stream))
    last = 0
    for e in store.episodes[:10]:
        q = Query(e.item_type, None, encode_cue(e.location, lm))
        r = retrieve(store, q, lm)
        assert store.probe_counter == last + r.probes_used
        last = store.probe_counter


def test_grid_cell_clipping():
    assert grid_cell((0.0, 0.0)) == (0, 0)
    assert grid_cell((1.0, 1.0)) == (15, 15)
    assert grid_cell((0.51, 0.49)) == (8, 7)
