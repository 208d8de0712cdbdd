import pytest

from jddl.backbone import (
    BackboneSpec,
    LayerSpec,
    backbone_summary,
    bottleneck_params,
    builtin_backbone,
    conv_block_params,
    faster_block_params,
    param_count,
    parse_backbone_spec,
    reduction_ratio,
    shape_propagate,
    summary_markdown,
)

# reference per-layer counts for the two builtin backbones
YOLOV8N_PARAMS = (464, 4672, 7360, 18560, 49664, 73984, 197632, 295424, 460288, 164608)
AIR_YOLO_PARAMS = (464, 4672, 3920, 18560, 22144, 73984, 87552, 295424, 240128, 164608)


class TestParamCount:
    @pytest.mark.parametrize(
        "layer,expected",
        [
            (LayerSpec("ConvBlock", 3, 16, k=3, stride=2), 464),
            (LayerSpec("ConvBlock", 16, 32, k=3, stride=2), 4672),
            (LayerSpec("ConvBlock", 32, 64, k=3, stride=2), 18560),
            (LayerSpec("ConvBlock", 64, 128, k=3, stride=2), 73984),
            (LayerSpec("ConvBlock", 128, 256, k=3, stride=2), 295424),
            (LayerSpec("C2f", 32, 32, n=1), 7360),
            (LayerSpec("C2f", 64, 64, n=2), 49664),
            (LayerSpec("C2f", 128, 128, n=2), 197632),
            (LayerSpec("C2f", 256, 256, n=1), 460288),
            (LayerSpec("C2fFaster", 32, 32, n=1), 3920),
            (LayerSpec("C2fFaster", 64, 64, n=2), 22144),
            (LayerSpec("C2fFaster", 128, 128, n=2), 87552),
            (LayerSpec("C2fFaster", 256, 256, n=1), 240128),
            (LayerSpec("SPPF", 256, 256), 164608),
        ],
    )
    def test_reference_cells(self, layer, expected):
        assert param_count(layer) == expected

    def test_faster_block_at_16(self):
        assert faster_block_params(16) == 1232

    def test_counts_are_ints(self):
        for layer in builtin_backbone("air-yolo").layers:
            assert isinstance(param_count(layer), int)

    def test_substitution_delta(self):
        # replacing bottlenecks with FasterBlocks saves exactly n * diff
        for c in (16, 32, 64, 128):
            for n in (1, 2, 3):
                c2f = LayerSpec("C2f", 2 * c, 2 * c, n=n)
                faster = LayerSpec("C2fFaster", 2 * c, 2 * c, n=n)
                delta = param_count(c2f) - param_count(faster)
                assert delta == n * (bottleneck_params(c) - faster_block_params(c))

    def test_monotone_in_output_channels(self):
        convs = [conv_block_params(64, c, 3) for c in range(8, 257, 8)]
        assert all(a < b for a, b in zip(convs, convs[1:]))
        c2fs = [param_count(LayerSpec("C2f", 64, c, n=2)) for c in range(8, 257, 8)]
        assert all(a < b for a, b in zip(c2fs, c2fs[1:]))
        fasters = [param_count(LayerSpec("C2fFaster", 64, c, n=2)) for c in range(8, 257, 8)]
        assert all(a < b for a, b in zip(fasters, fasters[1:]))


class TestBuiltinBackbones:
    def test_yolov8n_rows_and_total(self):
        summary = backbone_summary(builtin_backbone("yolov8n"))
        assert tuple(r.params for r in summary.rows) == YOLOV8N_PARAMS
        assert summary.total == sum(YOLOV8N_PARAMS) == 1_272_656

    def test_air_yolo_rows_and_total(self):
        summary = backbone_summary(builtin_backbone("air-yolo"))
        assert tuple(r.params for r in summary.rows) == AIR_YOLO_PARAMS
        assert summary.total == sum(AIR_YOLO_PARAMS) == 911_456

    def test_reduction_about_thirty_percent(self):
        red = reduction_ratio(1_272_656, 911_456)
        assert 0.25 <= red <= 0.32

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="builtin"):
            builtin_backbone("yolov5s")

    def test_markdown_table(self):
        md = summary_markdown(backbone_summary(builtin_backbone("air-yolo")))
        assert "| 2 | C2fFaster | 32 | 32 | 3920 |" in md
        assert "| Sum | | | | 911456 |" in md


class TestValidation:
    def test_odd_hidden_width_rejected(self):
        with pytest.raises(ValueError, match="even"):
            LayerSpec("C2f", 32, 31, n=1)

    def test_partial_width_divisibility(self):
        with pytest.raises(ValueError, match="divisible by 8"):
            LayerSpec("C2fFaster", 32, 36, n=1)

    def test_conv_needs_kernel_and_stride(self):
        with pytest.raises(ValueError, match="kernel"):
            LayerSpec("ConvBlock", 3, 16)

    def test_repeat_count_required(self):
        with pytest.raises(ValueError, match="repeat"):
            LayerSpec("C2f", 32, 32)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            LayerSpec("Dense", 32, 32)

    def test_sppf_needs_even_input(self):
        with pytest.raises(ValueError, match="even"):
            LayerSpec("SPPF", 255, 256)

    def test_channel_chain_checked(self):
        with pytest.raises(ValueError, match="chain"):
            BackboneSpec(
                (
                    LayerSpec("ConvBlock", 3, 16, k=3, stride=2),
                    LayerSpec("ConvBlock", 32, 64, k=3, stride=2),
                )
            )


class TestShapePropagation:
    def test_first_stride_two_conv(self):
        spec = BackboneSpec((LayerSpec("ConvBlock", 3, 16, k=3, stride=2),))
        assert shape_propagate(640, 640, 3, spec) == [(320, 320, 16)]

    def test_full_backbone(self):
        shapes = shape_propagate(640, 640, 3, builtin_backbone("air-yolo"))
        assert shapes[-1] == (20, 20, 256)
        assert shapes[0] == (320, 320, 16)

    def test_c2f_preserves_spatial(self):
        spec = BackboneSpec((LayerSpec("C2f", 32, 64, n=2),))
        assert shape_propagate(80, 60, 32, spec) == [(80, 60, 64)]

    def test_indivisible_rejected(self):
        spec = BackboneSpec((LayerSpec("ConvBlock", 3, 16, k=3, stride=2),))
        with pytest.raises(ValueError, match="divisible"):
            shape_propagate(641, 640, 3, spec)

    def test_channel_mismatch_rejected(self):
        spec = BackboneSpec((LayerSpec("ConvBlock", 3, 16, k=3, stride=2),))
        with pytest.raises(ValueError, match="channels"):
            shape_propagate(640, 640, 4, spec)


class TestSpecFiles:
    def test_round_trip_against_builtin(self, tmp_path):
        lines = [
            "# backbone of the lightweight detector",
            "ConvBlock 3 16 3 2",
            "ConvBlock 16 32 3 2",
            "C2fFaster 32 32 1",
            "ConvBlock 32 64 3 2",
            "C2fFaster 64 64 2",
            "ConvBlock 64 128 3 2",
            "C2fFaster 128 128 2",
            "ConvBlock 128 256 3 2",
            "C2fFaster 256 256 1",
            "SPPF 256 256",
        ]
        path = tmp_path / "air.txt"
        path.write_text("\n".join(lines) + "\n")
        parsed = parse_backbone_spec(path)
        assert parsed.layers == builtin_backbone("air-yolo").layers
        assert backbone_summary(parsed).total == 911_456

    def test_single_conv_file(self, tmp_path):
        path = tmp_path / "one.txt"
        path.write_text("ConvBlock 3 8 5 1\n")
        summary = backbone_summary(parse_backbone_spec(path))
        assert summary.total == 3 * 8 * 25 + 16

    def test_malformed_line_reports_location(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("ConvBlock 3 16 3 2\nC2f 16 32\n")
        with pytest.raises(ValueError, match="bad.txt:2"):
            parse_backbone_spec(path)

    def test_unknown_kind_in_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("Linear 3 16\n")
        with pytest.raises(ValueError, match="kind"):
            parse_backbone_spec(path)
