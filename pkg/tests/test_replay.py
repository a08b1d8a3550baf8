import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from unplugged.env import DELAYS
from unplugged.replay import (DatasetFormatError, ReplayDataset, RolloutSampler, SequentialLanes,
                              SkillSampler, generate_dataset, sample_rollout)


def test_two_episodes_per_game():
    ds = generate_dataset(10, seed=0)
    assert len(ds) == 20
    assert ds.stats()["episodes"] == 20


def test_generation_byte_identical():
    a = generate_dataset(30, SkillSampler.parse("uniform"), seed=9).to_bytes()
    b = generate_dataset(30, SkillSampler.parse("uniform"), seed=9).to_bytes()
    assert a == b


def test_parallel_generation_matches_serial():
    a = generate_dataset(20, seed=4).to_bytes()
    b = generate_dataset(20, seed=4, workers=2).to_bytes()
    assert a == b


def test_round_trip(tmp_path, small_dataset):
    path = tmp_path / "d.bin"
    small_dataset.write(path)
    back = ReplayDataset.read(path)
    assert back.episodes == small_dataset.episodes
    assert back.config == small_dataset.config
    for a, b in zip(back.episodes, small_dataset.episodes):
        assert (a.outcome, a.skill, a.map_id, a.game_seed, a.player_id) == \
               (b.outcome, b.skill, b.map_id, b.game_seed, b.player_id)


def test_format_errors(small_dataset):
    data = small_dataset.to_bytes()
    with pytest.raises(DatasetFormatError):
        ReplayDataset.from_bytes(b"NOTMAGIC" + data[8:])
    with pytest.raises(DatasetFormatError):
        ReplayDataset.from_bytes(data[:-7])
    bad = bytearray(data)
    bad[8] = 9  # version
    with pytest.raises(DatasetFormatError):
        ReplayDataset.from_bytes(bytes(bad))


def test_episode_invariants(small_dataset):
    for ep in small_dataset:
        d = ep.steps["game_loop_delta"]
        assert d[0] == 0
        assert np.array_equal(d[1:], ep.steps["delay"][:-1])
        assert np.array_equal(ep.steps["prev_delay"][1:], ep.steps["delay"][:-1])
        assert d.sum() <= 512
        assert ep.rewards[-1] == ep.outcome and not ep.rewards[:-1].any()
        level = round((ep.skill - 1000) / 1000)
        assert abs(ep.skill - (1000 * level + 1000)) <= 100


def test_game_pairs_antisymmetric(small_dataset):
    eps = small_dataset.episodes
    for a, b in zip(eps[::2], eps[1::2]):
        assert a.game_seed == b.game_seed and a.outcome + b.outcome == 0


def test_delay_timeline_matches_engine(small_dataset):
    # the logged loops of a player are the running sum of its action delays
    from unplugged.env import play_game, scripted_policy
    ep = small_dataset.episodes[0]
    loops = np.cumsum(ep.steps["game_loop_delta"])
    frac = ep.steps["game_loop_frac"]
    assert np.allclose(np.minimum(1.0, loops / 512), frac)


def _linear_scan(ds, min_skill, allowed):
    out = []
    for ep in ds.episodes:
        if ep.skill > min_skill and ep.outcome in allowed:
            out.append(ep)
    return out


@pytest.mark.parametrize("min_skill", [0.0, 2500.0, 3500.0, 5200.0])
@pytest.mark.parametrize("mode,allowed", [("all", {-1, 0, 1}), ("win_only", {1}),
                                          ("win_and_loss", {-1, 1})])
def test_filter_matches_scan(small_dataset, min_skill, mode, allowed):
    view = small_dataset.filter(min_skill, mode)
    assert view.episodes == _linear_scan(small_dataset, min_skill, allowed)


def test_filter_identity_and_half(small_dataset):
    assert small_dataset.filter(0.0, "all").episodes == small_dataset.episodes
    draws = sum(ep.outcome == 0 for ep in small_dataset)
    wins = len(small_dataset.filter(0.0, "win_only"))
    assert wins == (len(small_dataset) - draws) // 2


def test_one_step_episode_rollout(small_dataset):
    ep = small_dataset.episodes[0]
    ds = ReplayDataset([type(ep)(ep.steps[:1].copy(), 1, ep.skill, 0, 0, 0)])
    r = sample_rollout(ds, 1, np.random.default_rng(0))
    assert len(r.steps) == 1 and r.rewards[-1] == 1 and r.truncated


def test_offset_uniformity():
    ds = generate_dataset(1, SkillSampler(fixed=(5, 5)), seed=0)
    ep = ds.episodes[0]
    ds = ReplayDataset([ep])
    K = 2
    sampler = RolloutSampler(ds, K, np.random.default_rng(1))
    counts = np.zeros(len(ep) - K + 1)
    for _ in range(20_000):
        counts[sampler.sample().offset] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_rollouts_stay_in_episode(small_dataset):
    sampler = RolloutSampler(small_dataset, 4, np.random.default_rng(2))
    for _ in range(300):
        r = sampler.sample()
        ep = small_dataset.episodes[r.episode_index]
        assert np.array_equal(r.steps, ep.steps[r.offset:r.offset + 5])
    idx, valid = sampler.sample_indices(200)
    cols = small_dataset.columns
    ep_of = np.searchsorted(cols.episode_start, idx, side="right") - 1
    assert (ep_of == ep_of[:, :1]).all()


def test_short_episodes_resampled(small_dataset):
    sampler = RolloutSampler(small_dataset, 20, np.random.default_rng(3))
    sampler.sample_indices(500)
    assert sampler.resamples > 0


def test_lanes_overlap_and_reconstruct(small_dataset):
    lanes = SequentialLanes(small_dataset, 3, 5, np.random.default_rng(4))
    cols = small_dataset.columns
    prev = None
    streams = [[] for _ in range(3)]
    for i in range(20):
        idx, pos = lanes.next_indices()
        assert (pos == 5 * i).all()
        if prev is not None:
            assert np.array_equal(prev[:, -1], idx[:, 0])
        for j in range(3):
            streams[j].extend(idx[j, :5].tolist())
        prev = idx
    for s in streams:
        s = np.array(s)
        starts = np.flatnonzero(cols.is_first[s])
        for a, b in zip(starts[:-1], starts[1:]):
            e = np.searchsorted(cols.episode_start, s[a])
            assert b - a == cols.episode_len[e]
            assert np.array_equal(s[a:b], np.arange(s[a], s[a] + cols.episode_len[e]))


def test_lane_single_episode_degenerate(small_dataset):
    ep = small_dataset.episodes[0]
    ds = ReplayDataset([ep])
    lanes = SequentialLanes(ds, 1, len(ep) - 1, np.random.default_rng(0))
    first, _ = lanes.next_batch()
    assert first.shape == (1, len(ep))
    assert first.is_first[0, 0] and first.is_last[0, -1]
    # later windows keep the one-step overlap, so they straddle two copies of the episode
    second, _ = lanes.next_batch()
    assert second.is_last[0, 0] and second.is_first[0, 1]


def test_stats_histogram(small_dataset):
    s = small_dataset.stats()
    assert sum(n for _, _, n in s["histogram"]) == len(small_dataset)
    assert s["wins"] + s["losses"] + s["draws"] == len(small_dataset)
    assert small_dataset.histogram_csv().startswith("skill_lo,skill_hi,episodes\n")


def test_skill_sampler_parse():
    assert SkillSampler.parse("fixed:5,0").fixed == (5, 0)
    assert SkillSampler.parse("matched:2").max_gap == 2
    with pytest.raises(ValueError):
        SkillSampler.parse("bogus")


@settings(max_examples=20, deadline=None)
@given(level=st.integers(0, 5), seed=st.integers(0, 1000))
def test_skill_label_range(level, seed):
    from unplugged.replay import skill_label
    s = skill_label(level, np.random.default_rng(seed))
    assert 1000 * level + 900 <= s <= 1000 * level + 1100
