import numpy as np
import pytest

from blinkdet.anno_model import FrameBox
from blinkdet.netcore import (
    MlpParams,
    ModelParams,
    QueryState,
    StageParams,
    VideoFeature,
    detector_forward,
    init_queries,
    load_params,
    mhsa,
    params_from_arrays,
    params_to_arrays,
    query_interaction,
    random_params,
    read_container,
    roi_align,
    save_params,
    video_interaction,
    write_container,
)

from oracles import naive_video_interaction


def small_params(seed=0, num_queries=3, num_iterations=2, channels=8, num_heads=2, roi_grid=3):
    return random_params(
        num_queries=num_queries,
        num_iterations=num_iterations,
        channels=channels,
        num_heads=num_heads,
        roi_grid=roi_grid,
        seed=seed,
    )


def small_feature(rng, num_frames=4, channels=8, height=5, width=6):
    return VideoFeature(rng.uniform(-1.0, 1.0, (num_frames, channels, height, width)))


class TestInitQueries:
    def test_temporal_tiling(self):
        params = small_params()
        qs = init_queries(params, 3)
        for t in range(3):
            assert np.array_equal(qs.queries[:, t, :], params.query_seed)
            assert np.array_equal(qs.proposals[:, t, :], params.proposal_seed)

    def test_single_frame(self):
        params = small_params()
        qs = init_queries(params, 1)
        assert qs.queries.shape == (3, 1, 8)

    def test_distinct_seeds_stay_distinct(self):
        params = small_params()
        qs = init_queries(params, 2)
        assert not np.array_equal(qs.queries[0], qs.queries[1])

    def test_invalid_frame_count(self):
        with pytest.raises(ValueError):
            init_queries(small_params(), 0)


class TestMhsa:
    def test_singleton_attention_weight_is_one(self):
        params = small_params(seed=1)
        attn = params.stages[0].spatial_attn
        x = np.random.default_rng(0).uniform(-1, 1, (1, 8))
        out, weights = mhsa(x, attn, 2, return_weights=True)
        assert np.allclose(weights, 1.0)
        v = x @ attn.wv + attn.bv
        expected = x + (v @ attn.wo + attn.bo)
        assert np.allclose(out, expected, atol=1e-12)

    def test_rows_sum_to_one(self):
        params = small_params(seed=2)
        x = np.random.default_rng(1).uniform(-2, 2, (7, 8))
        _, weights = mhsa(x, params.stages[0].temporal_attn, 2, return_weights=True)
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_permutation_equivariance(self):
        params = small_params(seed=3)
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, (6, 8))
        perm = rng.permutation(6)
        out = mhsa(x, params.stages[0].spatial_attn, 2)
        out_perm = mhsa(x[perm], params.stages[0].spatial_attn, 2)
        assert np.allclose(out_perm, out[perm], atol=1e-12)

    def test_head_divisibility_enforced(self):
        params = small_params(seed=4)
        x = np.zeros((2, 8))
        with pytest.raises(ValueError):
            mhsa(x, params.stages[0].spatial_attn, 3)


class TestQueryInteraction:
    def test_single_query_single_frame_reduces_to_mhsa(self):
        params = small_params(seed=5, num_queries=1)
        stage = params.stages[0]
        qs = init_queries(params, 1)
        out = query_interaction(qs, stage, 2)
        step1 = mhsa(qs.queries[:, 0, :], stage.spatial_attn, 2)
        step2 = mhsa(step1, stage.temporal_attn, 2)
        assert np.allclose(out.queries[:, 0, :], step2, atol=1e-12)

    def test_query_permutation_equivariance(self):
        params = small_params(seed=6, num_queries=5)
        stage = params.stages[0]
        rng = np.random.default_rng(3)
        queries = rng.uniform(-1, 1, (5, 4, 8))
        proposals = np.tile(params.proposal_seed[:, None, :], (1, 4, 1))
        out = query_interaction(QueryState(queries, proposals), stage, 2)
        perm = rng.permutation(5)
        out_perm = query_interaction(QueryState(queries[perm], proposals[perm]), stage, 2)
        assert np.allclose(out_perm.queries, out.queries[perm], atol=1e-10)

    def test_identical_queries_stay_identical_across_spatial_stage(self):
        params = small_params(seed=7, num_queries=4)
        stage = params.stages[0]
        one = np.random.default_rng(4).uniform(-1, 1, (1, 3, 8))
        queries = np.repeat(one, 4, axis=0)
        proposals = np.tile(np.array([0.2, 0.2, 0.8, 0.8]), (4, 3, 1))
        out = query_interaction(QueryState(queries, proposals), stage, 2)
        for i in range(1, 4):
            assert np.allclose(out.queries[i], out.queries[0], atol=1e-12)


class TestRoiAlign:
    def test_constant_feature(self):
        feature = VideoFeature(np.full((1, 3, 4, 4), 2.5))
        out = roi_align(feature, FrameBox(0.1, 0.2, 0.8, 0.9), 0, 3)
        assert out.shape == (3, 3, 3)
        assert np.allclose(out, 2.5)

    def test_linear_ramp_in_x(self):
        # feature value at cell (r, c) is c, i.e. ramp(x) = x - 0.5 at x = c + 0.5
        width = 10
        fmap = np.tile(np.arange(width, dtype=float), (1, 1, 6, 1))
        feature = VideoFeature(fmap)
        box = FrameBox(0.2, 0.3, 0.7, 0.8)
        grid = 4
        out = roi_align(feature, box, 0, grid)
        for j in range(grid):
            x_center = (box.x1 + (j + 0.5) / grid * (box.x2 - box.x1)) * width
            expected = x_center - 0.5  # closed-form bilinear value on the ramp
            assert np.allclose(out[:, j, 0], expected, atol=1e-12)

    def test_box_at_single_cell_center(self):
        rng = np.random.default_rng(5)
        fmap = rng.uniform(0, 1, (1, 2, 6, 6))
        feature = VideoFeature(fmap)
        # tiny box centered on cell (2, 3): x = 3.5 / 6, y = 2.5 / 6
        half = 1e-6
        box = FrameBox(3.5 / 6 - half, 2.5 / 6 - half, 3.5 / 6 + half, 2.5 / 6 + half)
        out = roi_align(feature, box, 0, 2)
        assert np.allclose(out, fmap[0, :, 2, 3], atol=1e-5)

    def test_edge_clamping_full_box(self):
        rng = np.random.default_rng(6)
        feature = VideoFeature(rng.uniform(-1, 1, (1, 2, 4, 4)))
        out = roi_align(feature, FrameBox(0.0, 0.0, 1.0, 1.0), 0, 5)
        assert np.all(np.isfinite(out))


class TestVideoInteraction:
    def test_zero_queries_give_projection_bias(self):
        params = small_params(seed=8)
        stage = params.stages[0]
        rng = np.random.default_rng(7)
        feature = small_feature(rng)
        queries = np.zeros((3, 4, 8))
        proposals = np.tile(params.proposal_seed[:, None, :], (1, 4, 1))
        out = video_interaction(QueryState(queries, proposals), feature, stage, 3)
        for i in range(3):
            for t in range(4):
                assert np.allclose(out[i, t], stage.update_b, atol=1e-12)

    def test_output_shape(self):
        params = small_params(seed=9, num_queries=4)
        rng = np.random.default_rng(8)
        feature = small_feature(rng, num_frames=5)
        qs = init_queries(params, 5)
        out = video_interaction(qs, feature, params.stages[0], 3)
        assert out.shape == (4, 5, 8)

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            params = small_params(seed=trial + 10)
            stage = params.stages[0]
            feature = small_feature(rng)
            queries = rng.uniform(-1, 1, (3, 4, 8))
            proposals = np.clip(rng.uniform(0.0, 0.45, (3, 4, 4)), 0, 1)
            proposals[..., 2:] = proposals[..., :2] + rng.uniform(0.1, 0.5, (3, 4, 2))
            proposals = np.clip(proposals, 0.0, 1.0)
            qs = QueryState(queries, proposals)
            fast = video_interaction(qs, feature, stage, 3)
            slow = naive_video_interaction(queries, proposals, feature.values, stage, 3)
            assert np.max(np.abs(fast - slow)) < 1e-9


class TestHeadsAndForward:
    def test_zero_weights_give_half_scores(self):
        from blinkdet.netcore import heads_forward

        zeros_mlp = MlpParams(np.zeros((8, 8)), np.zeros(8), np.zeros((8, 1)), np.zeros(1))
        zeros_box = MlpParams(np.zeros((8, 8)), np.zeros(8), np.zeros((8, 4)), np.zeros(4))
        base = small_params(seed=11).stages[0]
        stage = StageParams(
            spatial_attn=base.spatial_attn,
            temporal_attn=base.temporal_attn,
            filter_gen=base.filter_gen,
            update_w=base.update_w,
            update_b=base.update_b,
            face_score_head=zeros_mlp,
            face_box_head=zeros_box,
            blink_head=zeros_mlp,
        )
        q = np.random.default_rng(10).uniform(-1, 1, (2, 3, 8))
        face, boxes, blink = heads_forward(q, stage)
        assert np.all(face == 0.5)
        assert np.all(blink == 0.5)
        assert np.all(boxes == 0.0)

    def test_raising_logit_raises_score(self):
        from blinkdet.netcore import heads_forward

        base = small_params(seed=12).stages[0]
        q = np.random.default_rng(11).uniform(-1, 1, (2, 3, 8))
        face_lo, _, _ = heads_forward(q, base)
        bumped = StageParams(
            spatial_attn=base.spatial_attn,
            temporal_attn=base.temporal_attn,
            filter_gen=base.filter_gen,
            update_w=base.update_w,
            update_b=base.update_b,
            face_score_head=MlpParams(
                base.face_score_head.w1,
                base.face_score_head.b1,
                base.face_score_head.w2,
                base.face_score_head.b2 + 1.0,
            ),
            face_box_head=base.face_box_head,
            blink_head=base.blink_head,
        )
        face_hi, _, _ = heads_forward(q, bumped)
        assert np.all(face_hi > face_lo)

    def test_forward_shapes_scores_and_boxes(self):
        params = small_params(seed=13, num_queries=4, num_iterations=3)
        rng = np.random.default_rng(12)
        feature = small_feature(rng, num_frames=5)
        out = detector_forward(feature, params)
        assert len(out.stages) == 3
        for stage_out in out.stages:
            assert stage_out.face_scores.shape == (4, 5)
            assert stage_out.boxes.shape == (4, 5, 4)
            assert stage_out.blink_scores.shape == (4, 5)
            for arr in (stage_out.face_scores, stage_out.blink_scores):
                assert np.all((arr > 0.0) & (arr < 1.0))
            boxes = stage_out.boxes
            assert boxes.min() >= 0.0 and boxes.max() <= 1.0
            assert np.all(boxes[..., 2] >= boxes[..., 0])
            assert np.all(boxes[..., 3] >= boxes[..., 1])

    def test_forward_deterministic(self):
        params = small_params(seed=14)
        rng = np.random.default_rng(13)
        feature = small_feature(rng)
        out1 = detector_forward(feature, params)
        out2 = detector_forward(feature, params)
        for s1, s2 in zip(out1.stages, out2.stages):
            assert np.array_equal(s1.face_scores, s2.face_scores)
            assert np.array_equal(s1.boxes, s2.boxes)
            assert np.array_equal(s1.blink_scores, s2.blink_scores)

    def test_single_iteration_equals_manual_composition(self):
        from blinkdet.netcore import heads_forward

        params = small_params(seed=15, num_iterations=1)
        rng = np.random.default_rng(14)
        feature = small_feature(rng)
        out = detector_forward(feature, params)

        stage = params.stages[0]
        qs = init_queries(params, 4)
        qs = query_interaction(qs, stage, params.num_heads)
        q_updated = video_interaction(qs, feature, stage, params.roi_grid)
        face, boxes, blink = heads_forward(q_updated, stage)
        assert np.array_equal(out.final.face_scores, face)
        assert np.array_equal(out.final.boxes, boxes)
        assert np.array_equal(out.final.blink_scores, blink)

    def test_channel_mismatch_rejected(self):
        params = small_params(seed=16)
        feature = VideoFeature(np.zeros((2, 12, 4, 4)))
        with pytest.raises(ValueError):
            detector_forward(feature, params)


class TestContainers:
    def test_params_round_trip(self, tmp_path):
        params = small_params(seed=17)
        path = tmp_path / "weights.bin"
        save_params(path, params, seed=17)
        loaded = load_params(path)
        for name, arr in params_to_arrays(params).items():
            assert np.array_equal(params_to_arrays(loaded)[name], arr), name
        assert loaded.num_heads == params.num_heads
        assert loaded.roi_grid == params.roi_grid

    def test_container_meta_round_trip(self, tmp_path):
        path = tmp_path / "arrays.bin"
        data = {"a": np.arange(12.0).reshape(3, 4), "b": np.array([1.5])}
        write_container(path, data, meta={"kind": "features", "video_id": "x"})
        arrays, meta = read_container(path)
        assert np.array_equal(arrays["a"], data["a"])
        assert np.array_equal(arrays["b"], data["b"])
        assert meta["video_id"] == "x"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTAPACKxxxxxxx")
        with pytest.raises(ValueError):
            read_container(path)

    def test_missing_array_rejected(self, tmp_path):
        params = small_params(seed=18)
        arrays = params_to_arrays(params)
        arrays.pop("stage0.filter_gen")
        with pytest.raises(ValueError):
            params_from_arrays(
                arrays,
                {
                    "num_queries": 3,
                    "num_iterations": 2,
                    "channels": 8,
                    "num_heads": 2,
                    "roi_grid": 3,
                },
            )

    def test_head_divisibility_enforced_at_load(self):
        params = small_params(seed=19)
        with pytest.raises(ValueError):
            ModelParams(
                num_queries=3,
                num_iterations=2,
                channels=8,
                num_heads=3,  # 8 % 3 != 0
                roi_grid=3,
                query_seed=params.query_seed,
                proposal_seed=params.proposal_seed,
                stages=params.stages,
            )
