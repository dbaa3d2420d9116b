"""LMD layer table, forward inference and architecture introspection.

Encoder: the 13 VGG16 convolutions with only the first three max-pools kept
(after convs 2, 4 and 7), convs 11-13 dilated by 2, and a 14th conv that
narrows the features to the decoder width. Decoder: 7 thin convolutions and
2 max-unpools fed by the pooling indices of encoder pools 3 and 2.

The decoder leaves the score map at output stride 2, so a parameter-free 2x
bilinear upsample restores full resolution before the softmax.
"""
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError

CONV = "conv3x3"
MAXPOOL = "maxpool"
MAXUNPOOL = "maxunpool"
UPSAMPLE = "upsample2x"
SOFTMAX = "softmax"
KINDS = (CONV, MAXPOOL, MAXUNPOOL, UPSAMPLE, SOFTMAX)

BN_EPSILON = 1e-5
DECODER_WIDTH = 64

# (out_c, dilation) for encoder convs 1..14, and the 1-based conv numbers
# each retained max-pool follows.
ENCODER_CONVS = (
    (64, 1), (64, 1),
    (128, 1), (128, 1),
    (256, 1), (256, 1), (256, 1),
    (512, 1), (512, 1), (512, 1),
    (512, 2), (512, 2), (512, 2),
    (DECODER_WIDTH, 1),
)
POOL_AFTER = (2, 4, 7)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    in_c: int = 0
    out_c: int = 0
    dilation: int = 1
    bn_relu: bool = False
    unpool_source: int = None  # index into NetworkSpec.layers of the paired maxpool
    stage: str = "encoder"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"layer {self.name}: unknown kind {self.kind!r}")
        if self.kind == CONV and (self.in_c < 1 or self.out_c < 1 or self.dilation < 1):
            raise ContractError(f"layer {self.name}: conv needs in_c, out_c, dilation >= 1")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    num_classes: int
    input_multiple: int = 8

    def convs(self, stage=None):
        return [
            layer for layer in self.layers
            if layer.kind == CONV and (stage is None or layer.stage == stage)
        ]

    def count(self, kind, stage=None):
        return sum(1 for layer in self.layers if layer.kind == kind and (stage is None or layer.stage == stage))


@dataclass
class ForwardResult:
    scores: np.ndarray  # (1, num_classes, H, W) softmax probabilities
    labels: np.ndarray  # (H, W) int64 argmax, ties to the lowest class id
    trace: list = field(default_factory=list)  # (layer name, output shape)


def build_lmd(num_classes):
    if int(num_classes) != num_classes or num_classes < 2:
        raise ContractError(f"num_classes must be an integer >= 2, got {num_classes}")
    layers = []
    pool_index = []
    in_c = 3
    for i, (out_c, dilation) in enumerate(ENCODER_CONVS, start=1):
        layers.append(LayerSpec(f"enc{i}", CONV, in_c, out_c, dilation, True))
        in_c = out_c
        if i in POOL_AFTER:
            pool_index.append(len(layers))
            layers.append(LayerSpec(f"pool{len(pool_index)}", MAXPOOL))

    w = DECODER_WIDTH

    def dec(k, out_c=w, bn_relu=True):
        return LayerSpec(f"dec{k}", CONV, w, out_c, 1, bn_relu, stage="decoder")

    layers += [
        dec(1),
        LayerSpec("unpool1", MAXUNPOOL, unpool_source=pool_index[2], stage="decoder"),
        dec(2), dec(3),
        LayerSpec("unpool2", MAXUNPOOL, unpool_source=pool_index[1], stage="decoder"),
        dec(4), dec(5), dec(6),
        dec(7, num_classes, bn_relu=False),
        LayerSpec("upsample", UPSAMPLE, stage="decoder"),
        LayerSpec("softmax", SOFTMAX, stage="decoder"),
    ]
    net = NetworkSpec(tuple(layers), int(num_classes))
    validate_lmd(net)
    return net


def validate_lmd(net):
    """Check the structural invariants of the LMD topology."""
    enc = net.convs("encoder")
    if len(enc) != 14:
        raise ContractError(f"encoder must have 14 convs, has {len(enc)}")
    for i, layer in enumerate(enc, start=1):
        want = 2 if 11 <= i <= 13 else 1
        if layer.dilation != want:
            raise ContractError(f"encoder conv {i} ({layer.name}) has dilation {layer.dilation}, want {want}")
    pools = [i for i, layer in enumerate(net.layers) if layer.kind == MAXPOOL]
    if len(pools) != 3:
        raise ContractError(f"encoder must have 3 max-pools, has {len(pools)}")
    for pool, after in zip(pools, POOL_AFTER):
        prev = net.layers[pool - 1]
        if prev is not enc[after - 1]:
            raise ContractError(f"{net.layers[pool].name} must follow encoder conv {after}")
    if len(net.convs("decoder")) != 7 or net.count(MAXUNPOOL, "decoder") != 2:
        raise ContractError("decoder must have 7 convs and 2 max-unpools")
    sources = []
    for i, layer in enumerate(net.layers):
        if layer.kind == MAXUNPOOL:
            src = layer.unpool_source
            if src is None or not 0 <= src < i or net.layers[src].kind != MAXPOOL:
                raise ContractError(f"{layer.name} must reference an earlier maxpool")
            sources.append(src)
    if sorted(sources) != pools[1:] or len(set(sources)) != 2:
        raise ContractError("the two unpools must consume the indices of encoder pools 2 and 3")
    if net.convs()[-1].out_c != net.num_classes:
        raise ContractError("final conv width must equal num_classes")


def param_count(net):
    total = 0
    for layer in net.convs():
        total += 9 * layer.in_c * layer.out_c + layer.out_c
        if layer.bn_relu:
            total += 4 * layer.out_c
    return total


def expected_tensors(net):
    """(layer name, role, shape) for every parameter tensor, in layer order."""
    out = []
    for layer in net.convs():
        out.append((layer.name, "weight", (layer.out_c, layer.in_c, 3, 3)))
        out.append((layer.name, "bias", (layer.out_c,)))
        if layer.bn_relu:
            for role in ("gamma", "beta", "mean", "var"):
                out.append((layer.name, role, (layer.out_c,)))
    return out


def _encoder_layers(net):
    out = []
    for layer in net.layers:
        if layer.stage != "encoder" or layer.kind in (MAXUNPOOL, UPSAMPLE, SOFTMAX):
            break
        out.append(layer)
    return out


def receptive_field(net):
    """Receptive field and output stride at the end of the encoder.

    Uses rf += (extent - 1) * jump, jump *= stride, with a dilated 3x3 conv
    of extent 2 * dilation + 1 and a 2x2 stride-2 pool. The walk stops at the
    first decoder layer (or the first unpool/upsample).
    """
    rf, jump = 1, 1
    for layer in _encoder_layers(net):
        if layer.kind == CONV:
            rf += 2 * layer.dilation * jump
        elif layer.kind == MAXPOOL:
            rf += jump
            jump *= 2
    return rf, rf, jump


def output_strides(net):
    """Cumulative output stride after every layer, as (name, stride) pairs."""
    stride = 1
    out = []
    for layer in net.layers:
        if layer.kind == MAXPOOL:
            stride *= 2
        elif layer.kind in (MAXUNPOOL, UPSAMPLE):
            stride //= 2
        out.append((layer.name, stride))
    return out


def _conv_params(weights, layer):
    return T.ConvParams(
        weights.get(layer.name, "weight"),
        weights.get(layer.name, "bias"),
        stride=1,
        padding=layer.dilation,
        dilation=layer.dilation,
    )


def _bn_params(weights, layer):
    return T.BatchNormParams(
        weights.get(layer.name, "gamma"),
        weights.get(layer.name, "beta"),
        weights.get(layer.name, "mean"),
        weights.get(layer.name, "var"),
        BN_EPSILON,
    )


def check_input(net, image):
    image = np.asarray(image)
    if image.ndim != 4 or image.shape[0] != 1:
        raise ContractError(f"image must have shape (1, C, H, W), got {image.shape}")
    first = net.convs()[0]
    if image.shape[1] != first.in_c:
        raise ContractError(f"image has {image.shape[1]} channels, network expects {first.in_c}")
    h, w = image.shape[2:]
    m = net.input_multiple
    if h % m or w % m:
        raise ContractError(f"image size {h}x{w} must be a multiple of {m} in both dims")


def forward(net, weights, image):
    """Run inference on one (1, C, H, W) image and return scores and labels."""
    from .weights import check_store

    check_input(net, image)
    check_store(weights, net)
    x = T.as_tensor(image)
    pooled = {}
    trace = []
    for i, layer in enumerate(net.layers):
        if layer.kind == CONV:
            x = T.conv2d(x, _conv_params(weights, layer))
            if layer.bn_relu:
                x = T.relu(T.batchnorm_infer(x, _bn_params(weights, layer)))
        elif layer.kind == MAXPOOL:
            h, w = x.shape[2:]
            x, idx = T.maxpool2x2(x)
            pooled[i] = (idx, h, w)
        elif layer.kind == MAXUNPOOL:
            idx, h, w = pooled[layer.unpool_source]
            if x.shape[1] > idx.shape[1]:
                raise ContractError(
                    f"{layer.name}: {x.shape[1]} channels but only {idx.shape[1]} pooled index maps"
                )
            # the decoder is thinner than the encoder: channel k reuses the
            # indices of encoder channel k
            idx = idx[:, :x.shape[1]]
            x = T.maxunpool2x2(x, idx, h, w)
        elif layer.kind == UPSAMPLE:
            x = T.upsample2x_bilinear(x)
        elif layer.kind == SOFTMAX:
            x = T.softmax_channels(x)
        trace.append((layer.name, x.shape))
    return ForwardResult(x, x[0].argmax(axis=0).astype(np.int64), trace)
