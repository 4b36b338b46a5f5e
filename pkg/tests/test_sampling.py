import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adcut.clips import ClipMeta, ClipSet
from adcut.sampling import (
    CeilingUnsatisfiable,
    NonDivisible,
    PathwayConfig,
    PresetError,
    SlowFastConfig,
    parse_preset,
    plan_clip,
    plan_request,
    pool_features,
    sample_frames,
    squeeze_queries,
)

FAST24 = SlowFastConfig(fast=PathwayConfig(2, 4), slow=PathwayConfig(0.5, 16))
FAST24_SLOW64 = SlowFastConfig(fast=PathwayConfig(2, 4), slow=PathwayConfig(0.125, 64))


def clip(duration_s: float, frame_count: int, index: int = 0) -> ClipMeta:
    return ClipMeta(index=index, duration_s=duration_s, frame_count=frame_count)


class TestSampleFrames:
    def test_middle_frame_branch(self):
        assert sample_frames(clip(0.4, 12), 2) == [6]

    def test_uniform_branch(self):
        assert sample_frames(clip(3.0, 90), 2) == [0, 15, 30, 45, 60, 75]

    def test_exact_interval_boundary(self):
        # t == 1/f takes the uniform branch with a single frame
        assert sample_frames(clip(0.5, 15), 2) == [0]

    @given(
        st.floats(min_value=0.05, max_value=120.0),
        st.sampled_from([0.125, 0.5, 1.0, 2.0]),
        st.integers(min_value=24, max_value=60),
    )
    def test_properties(self, t, f, native_fps):
        c = clip(t, max(1, round(t * native_fps)))
        indices = sample_frames(c, f)
        assert len(indices) >= 1
        assert all(0 <= i < c.frame_count for i in indices)
        assert indices == sorted(set(indices))
        if t < 1 / f:
            assert indices == [c.frame_count // 2]
        else:
            assert len(indices) == min(math.floor(t * f + 0.5), c.frame_count)

    def test_monotone_in_duration(self):
        rng = random.Random(3)
        for _ in range(200):
            f = rng.choice([0.125, 0.5, 2.0])
            t1 = rng.uniform(0.1, 30)
            t2 = t1 + rng.uniform(0.0, 30)
            c1 = clip(t1, max(1, round(t1 * 30)))
            c2 = clip(t2, max(1, round(t2 * 30)))
            assert len(sample_frames(c2, f)) >= len(sample_frames(c1, f))


class TestPlanClip:
    def test_eight_second_clip_budget_equality(self):
        for cfg in (FAST24, FAST24_SLOW64):
            entry = plan_clip(clip(8.0, 240), cfg)
            assert entry.fast.tokens == 64
            assert entry.slow.tokens == 64

    def test_degenerate_clip(self):
        entry = plan_clip(clip(0.4, 12), FAST24)
        assert entry.fast.tokens == 4
        assert entry.slow.tokens == 16
        assert entry.fast.frame_indices == (6,)

    def test_ten_second_clip(self):
        entry = plan_clip(clip(10.0, 300), FAST24_SLOW64)
        assert entry.fast.tokens == 20 * 4
        assert entry.slow.tokens == 1 * 64

    def test_timestamps_strictly_increasing_within_clip(self):
        rng = random.Random(11)
        for _ in range(100):
            t = rng.uniform(0.1, 60)
            c = clip(t, max(1, round(t * rng.uniform(24, 60))))
            entry = plan_clip(c, FAST24)
            for pathway in (entry.fast, entry.slow):
                ts = pathway.timestamps_s
                assert all(b > a for a, b in zip(ts, ts[1:]))
                assert all(0 <= x < c.duration_s for x in ts)

    @given(st.floats(min_value=8.0, max_value=60.0), st.integers(min_value=24, max_value=60))
    def test_token_rate_equality(self, t, native_fps):
        # rate-matched presets: fast fps*k == slow fps*k
        for cfg in (FAST24, FAST24_SLOW64):
            entry = plan_clip(clip(t, max(1, round(t * native_fps))), cfg)
            slack = max(cfg.fast.tokens_per_frame, cfg.slow.tokens_per_frame)
            assert abs(entry.fast.tokens - entry.slow.tokens) <= slack


class TestPlanRequest:
    def test_no_reduction(self):
        clips = ClipSet(clip(8.0, 240, i) for i in range(5))
        plan = plan_request(clips, FAST24)
        assert plan.total_fast_frames == 80
        assert plan.reduction_factor == 1
        assert plan.effective_fast_fps == 2.0

    def test_halving(self):
        clips = ClipSet(clip(10.0, 300, i) for i in range(40))
        plan = plan_request(clips, FAST24)
        assert plan.reduction_factor == 2
        assert plan.effective_fast_fps == 1.0
        assert plan.total_fast_frames == 400

    def test_unsatisfiable(self):
        clips = ClipSet(clip(0.1, 3, i) for i in range(700))
        with pytest.raises(CeilingUnsatisfiable) as err:
            plan_request(clips, FAST24)
        assert err.value.clip_count == 700

    def test_totals_equal_sum_of_entries(self):
        rng = random.Random(21)
        durations = [rng.uniform(1, 20) for _ in range(12)]
        clips = ClipSet(clip(t, max(1, round(30 * t)), i) for i, t in enumerate(durations))
        plan = plan_request(clips, FAST24)
        assert plan.total_fast_tokens == sum(c.fast.tokens for c in plan.clips)
        assert plan.total_slow_tokens == sum(c.slow.tokens for c in plan.clips)

    def test_ceiling_never_exceeded_random_sets(self):
        rng = random.Random(13)
        for _ in range(60):
            n = rng.randint(1, 80)
            durations = [rng.uniform(0.2, 40) for _ in range(n)]
            clips = ClipSet(clip(t, max(1, round(t * 30)), i) for i, t in enumerate(durations))
            plan = plan_request(clips, FAST24)
            assert plan.total_fast_frames <= FAST24.frame_ceiling
            assert plan.reduction_factor & (plan.reduction_factor - 1) == 0  # power of two
            assert len(plan.clips) == n


class TestCompressionOps:
    def test_squeeze_identity(self):
        q = np.arange(12.0).reshape(4, 3)
        assert np.array_equal(squeeze_queries(q, 1), q)

    def test_squeeze_hand_case(self):
        q = np.array([[1.0], [3.0], [5.0], [7.0]])
        assert np.array_equal(squeeze_queries(q, 2), np.array([[2.0], [6.0]]))

    def test_squeeze_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        q = rng.integers(-1000, 1000, size=(64, 32)).astype(np.float64)
        out = squeeze_queries(q, 4)
        for i in range(16):
            group = q[4 * i : 4 * (i + 1)]
            expected = sum(group[j] for j in range(4)) / 4.0
            assert np.array_equal(out[i], expected)

    def test_squeeze_nondivisible(self):
        with pytest.raises(NonDivisible):
            squeeze_queries(np.zeros((5, 2)), 2)

    def test_pool_identity(self):
        g = np.arange(24.0).reshape(2, 3, 4)
        assert np.array_equal(pool_features(g, 1), g)

    def test_pool_hand_case(self):
        g = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
        assert np.array_equal(pool_features(g, 2), np.array([[[2.5]]]))

    def test_pool_matches_bruteforce(self):
        rng = np.random.default_rng(9)
        g = rng.integers(-1000, 1000, size=(24, 24, 8)).astype(np.float64)
        out = pool_features(g, 3)
        for i in range(8):
            for j in range(8):
                block = g[3 * i : 3 * i + 3, 3 * j : 3 * j + 3]
                total = np.zeros(8)
                for r in range(3):
                    for c in range(3):
                        total = total + block[r, c]
                assert np.array_equal(out[i, j], total / 9.0)

    def test_grand_mean_preserved(self):
        rng = np.random.default_rng(17)
        g = rng.standard_normal((12, 18, 5))
        pooled = pool_features(g, 3)
        assert abs(pooled.mean() - g.mean()) <= 1e-12 * max(1.0, abs(g.mean()))
        q = rng.standard_normal((40, 7))
        squeezed = squeeze_queries(q, 8)
        assert abs(squeezed.mean() - q.mean()) <= 1e-12 * max(1.0, abs(q.mean()))

    def test_pool_nondivisible(self):
        with pytest.raises(NonDivisible):
            pool_features(np.zeros((5, 6, 2)), 2)


class TestPresets:
    def test_table_style_space_separated(self):
        cfg = parse_preset("fast:2/4 slow:0.125/64")
        assert cfg.fast == PathwayConfig(2.0, 4)
        assert cfg.slow == PathwayConfig(0.125, 64)

    def test_comma_separated(self):
        cfg = parse_preset("fast:2/4,slow:0.5/16")
        assert cfg.slow == PathwayConfig(0.5, 16)

    def test_single_pair_drives_both_pathways(self):
        cfg = parse_preset("2/9")
        assert cfg.fast == cfg.slow == PathwayConfig(2.0, 9)

    @pytest.mark.parametrize("bad", ["", "fast:2", "fast:a/4", "fast:2/4 fast:1/8", "slow:0.5/16", "2/4 slow:1/8"])
    def test_bad_presets(self, bad):
        with pytest.raises(PresetError):
            parse_preset(bad)

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            SlowFastConfig(fast=PathwayConfig(0.5, 16), slow=PathwayConfig(2, 4))
