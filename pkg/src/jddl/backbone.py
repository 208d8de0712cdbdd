"""Symbolic parameter counting and shape propagation for detector backbones.

Counting conventions: a convolution followed by a normalization layer
carries no bias, and the normalization contributes 2 parameters per
output channel (scale + shift). Block formulas:

    ConvBlock(c_in, c_out, k)   = c_in*c_out*k^2 + 2*c_out
    Bottleneck(c)               = 2 * (9*c^2 + 2*c)          two 3x3 ConvBlocks
    FasterBlock(d)              = (d/4)^2 * 9                3x3 partial conv on d/4
                                                             channels, no bias/norm
                                + d*2d + 2*(2d)              1x1 expand, normalized
                                + 2d*d                       1x1 project, no bias/norm
    C2f(c_in, c_out, n)         = ConvBlock(c_in, 2c, 1) + ConvBlock((2+n)c, c_out, 1)
                                + n*Bottleneck(c),           c = c_out/2
    C2fFaster(c_in, c_out, n)   = same split/merge convs + n*FasterBlock(c)
    SPPF(c_in, c_out)           = ConvBlock(c_in, c_in/2, 1) + ConvBlock(2*c_in, c_out, 1)

All arithmetic is exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

LAYER_KINDS = ("ConvBlock", "C2f", "C2fFaster", "SPPF")

BUILTIN_NAMES = ("yolov8n", "air-yolo")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    c_in: int
    c_out: int
    k: int | None = None
    stride: int | None = None
    n: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind '{self.kind}', expected one of {LAYER_KINDS}")
        if self.c_in <= 0 or self.c_out <= 0:
            raise ValueError(f"{self.kind}: channel counts must be positive")
        if self.kind == "ConvBlock":
            if self.k is None or self.stride is None:
                raise ValueError("ConvBlock needs kernel size and stride")
            if self.k <= 0 or self.stride <= 0:
                raise ValueError("ConvBlock kernel size and stride must be positive")
        elif self.kind in ("C2f", "C2fFaster"):
            if self.n is None or self.n <= 0:
                raise ValueError(f"{self.kind} needs a positive repeat count n")
            if self.c_out % 2:
                raise ValueError(f"{self.kind}: c_out must be even (hidden width c_out/2)")
            if self.kind == "C2fFaster" and self.c_out % 8:
                raise ValueError(
                    "C2fFaster: c_out must be divisible by 8 so the partial 3x3 width is integral"
                )
        elif self.kind == "SPPF":
            if self.c_in % 2:
                raise ValueError("SPPF: c_in must be even (hidden width c_in/2)")


def conv_block_params(c_in: int, c_out: int, k: int) -> int:
    return c_in * c_out * k * k + 2 * c_out


def bottleneck_params(c: int) -> int:
    return 2 * (9 * c * c + 2 * c)


def faster_block_params(d: int) -> int:
    partial = (d // 4) ** 2 * 9
    expand = d * (2 * d) + 2 * (2 * d)
    project = (2 * d) * d
    return partial + expand + project


def param_count(layer: LayerSpec) -> int:
    if layer.kind == "ConvBlock":
        return conv_block_params(layer.c_in, layer.c_out, layer.k)
    if layer.kind == "C2f":
        c = layer.c_out // 2
        return (
            conv_block_params(layer.c_in, 2 * c, 1)
            + conv_block_params((2 + layer.n) * c, layer.c_out, 1)
            + layer.n * bottleneck_params(c)
        )
    if layer.kind == "C2fFaster":
        c = layer.c_out // 2
        return (
            conv_block_params(layer.c_in, 2 * c, 1)
            + conv_block_params((2 + layer.n) * c, layer.c_out, 1)
            + layer.n * faster_block_params(c)
        )
    if layer.kind == "SPPF":
        return conv_block_params(layer.c_in, layer.c_in // 2, 1) + conv_block_params(
            2 * layer.c_in, layer.c_out, 1
        )
    raise ValueError(f"unknown layer kind '{layer.kind}'")


@dataclass(frozen=True)
class BackboneSpec:
    layers: tuple[LayerSpec, ...]
    name: str = ""

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("backbone needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if prev.c_out != cur.c_in:
                raise ValueError(
                    f"layer {i} input channels {cur.c_in} do not chain from "
                    f"layer {i - 1} output {prev.c_out}"
                )


def _stage(kind: str) -> BackboneSpec:
    """The shared backbone shape; `kind` fills the four repeated stages."""
    return BackboneSpec(
        (
            LayerSpec("ConvBlock", 3, 16, k=3, stride=2),
            LayerSpec("ConvBlock", 16, 32, k=3, stride=2),
            LayerSpec(kind, 32, 32, n=1),
            LayerSpec("ConvBlock", 32, 64, k=3, stride=2),
            LayerSpec(kind, 64, 64, n=2),
            LayerSpec("ConvBlock", 64, 128, k=3, stride=2),
            LayerSpec(kind, 128, 128, n=2),
            LayerSpec("ConvBlock", 128, 256, k=3, stride=2),
            LayerSpec(kind, 256, 256, n=1),
            LayerSpec("SPPF", 256, 256),
        ),
        name="yolov8n" if kind == "C2f" else "air-yolo",
    )


def builtin_backbone(name: str) -> BackboneSpec:
    """Built-in 10-row backbones; stage repeats are (1, 2, 2, 1)."""
    if name == "yolov8n":
        return _stage("C2f")
    if name == "air-yolo":
        return _stage("C2fFaster")
    raise ValueError(f"unknown builtin backbone '{name}', expected one of {BUILTIN_NAMES}")


@dataclass(frozen=True)
class LayerRow:
    index: int
    kind: str
    c_in: int
    c_out: int
    params: int


@dataclass(frozen=True)
class BackboneSummary:
    name: str
    rows: tuple[LayerRow, ...]
    total: int


def backbone_summary(spec: BackboneSpec) -> BackboneSummary:
    rows = tuple(
        LayerRow(i, layer.kind, layer.c_in, layer.c_out, param_count(layer))
        for i, layer in enumerate(spec.layers)
    )
    return BackboneSummary(spec.name, rows, sum(r.params for r in rows))


def reduction_ratio(baseline_total: int, other_total: int) -> float:
    """Fractional parameter reduction of `other` relative to `baseline`."""
    if baseline_total <= 0:
        raise ValueError("baseline total must be positive")
    return 1.0 - other_total / baseline_total


def shape_propagate(
    height: int, width: int, channels: int, spec: BackboneSpec
) -> list[tuple[int, int, int]]:
    """Per-layer output shapes (H, W, C) under the same-padding convention.

    Stride-s ConvBlocks divide the spatial dimensions exactly; indivisible
    inputs are rejected. The other blocks preserve spatial size.
    """
    if channels != spec.layers[0].c_in:
        raise ValueError(
            f"input has {channels} channels but the first layer expects {spec.layers[0].c_in}"
        )
    shapes = []
    h, w = height, width
    for i, layer in enumerate(spec.layers):
        if layer.kind == "ConvBlock" and layer.stride > 1:
            if h % layer.stride or w % layer.stride:
                raise ValueError(
                    f"layer {i}: spatial size {h}x{w} not divisible by stride {layer.stride}"
                )
            h //= layer.stride
            w //= layer.stride
        shapes.append((h, w, layer.c_out))
    return shapes


# --- spec files and rendering ---------------------------------------------
#
# Line format, one layer per line ('#' starts a comment):
#   ConvBlock c_in c_out k stride
#   C2f       c_in c_out n
#   C2fFaster c_in c_out n
#   SPPF      c_in c_out


def parse_backbone_spec(path: str | Path) -> BackboneSpec:
    layers = []
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        where = f"{path}:{lineno}"
        kind = fields[0]
        try:
            if kind == "ConvBlock":
                if len(fields) != 5:
                    raise ValueError("expected 'ConvBlock c_in c_out k stride'")
                layers.append(
                    LayerSpec(kind, int(fields[1]), int(fields[2]), k=int(fields[3]), stride=int(fields[4]))
                )
            elif kind in ("C2f", "C2fFaster"):
                if len(fields) != 4:
                    raise ValueError(f"expected '{kind} c_in c_out n'")
                layers.append(LayerSpec(kind, int(fields[1]), int(fields[2]), n=int(fields[3])))
            elif kind == "SPPF":
                if len(fields) != 3:
                    raise ValueError("expected 'SPPF c_in c_out'")
                layers.append(LayerSpec(kind, int(fields[1]), int(fields[2])))
            else:
                raise ValueError(f"unknown layer kind '{kind}'")
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from exc
    return BackboneSpec(tuple(layers), name=path.stem)


def summary_markdown(summary: BackboneSummary) -> str:
    lines = [
        "| No. | Module | Input | Output | Params |",
        "| --- | --- | --- | --- | --- |",
    ]
    for row in summary.rows:
        lines.append(f"| {row.index} | {row.kind} | {row.c_in} | {row.c_out} | {row.params} |")
    lines.append(f"| Sum | | | | {summary.total} |")
    return "\n".join(lines) + "\n"
