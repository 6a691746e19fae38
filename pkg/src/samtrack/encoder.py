"""Fixed, seeded feature extractor standing in for a pretrained backbone.

Channel layout of every backbone feature map: the first ``C/2`` channels
carry appearance (driven by the RGB frame), the last ``C/2`` carry mask
context (driven by the fg/bg stems).  The backbone is block diagonal, so
appearance channels never see the mask; key and query heads read only
the appearance half, which makes ``<query, key>`` a similarity between
the two frames' appearance rather than a random bilinear form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .mask import MaskPair
from .tensor import ConvKernelStack, SplitMix64, as_feature_map, conv2d

BACKBONE_GAIN = 0.25  # spread of the random part of each identity-anchored backbone conv
KEY_JITTER = 0.25  # spread of the random part of the key head

# order of every parameter stack, used for serialization
STACKS = (
    "frame_stem",
    "fg_stem",
    "bg_stem",
    "backbone0",
    "backbone1",
    "backbone2",
    "key_head",
    "value_head",
    "query_head",
    "query_value_head",
)


class Embedding(NamedTuple):
    key: np.ndarray
    value: np.ndarray


class QueryEncoding(NamedTuple):
    query: np.ndarray
    query_value: np.ndarray
    skips: list
    features: np.ndarray


@dataclass
class EncoderParams:
    seed: int
    channels: int
    stride: int
    key_scale: float
    stacks: dict[str, ConvKernelStack] = field(default_factory=dict)

    @property
    def key_channels(self) -> int:
        return self.channels // 8

    @property
    def value_channels(self) -> int:
        return self.channels // 2

    @property
    def backbone_strides(self) -> tuple[int, int, int]:
        return (self.stride // 2, 1, 1)

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name in STACKS:
            out[f"{name}.weights"] = self.stacks[name].weights
            out[f"{name}.bias"] = self.stacks[name].bias
        return out


def _relu(x):
    return np.maximum(x, 0.0)


def _stem_filters() -> list[tuple[np.ndarray, float]]:
    """Hand-crafted (filter, bias) pairs applied per colour channel.

    The identity filter appears with both signs around mid-grey so the
    relu keeps the full signed colour; gradients are sign-free and the
    box blur is centred like the identity.
    """
    ident = np.zeros((3, 3))
    ident[1, 1] = 1.0
    hgrad = np.array([[0.0, 0.0, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.0, 0.0]])
    blur = np.full((3, 3), 1.0 / 9.0)
    return [(ident, -0.5), (-ident, 0.5), (hgrad, 0.0), (hgrad.T.copy(), 0.0), (blur, -0.5)]


def _random_stack(rng: SplitMix64, cout, cin, k, gain=1.0) -> ConvKernelStack:
    fan_in = cin * k * k
    w = rng.normal((cout, cin, k, k), scale=gain / np.sqrt(fan_in))
    return ConvKernelStack(w, np.zeros(cout))


def init_encoder(seed: int, channels: int = 32, stride: int = 4, key_scale: float = 32.0) -> EncoderParams:
    """Draw every encoder weight from a splitmix64 stream seeded with ``seed``."""
    if channels < 8 or channels % 8:
        raise ConfigurationError(f"base channels must be a positive multiple of 8, got {channels}")
    if stride < 2 or stride % 2:
        raise ConfigurationError(f"downsample stride must be an even integer >= 2, got {stride}")
    rng = SplitMix64(seed)
    c = channels
    a = c // 2  # appearance channels; the rest carry mask context
    stacks: dict[str, ConvKernelStack] = {}

    # frame stem: hand-crafted filters per colour channel first, seeded ones after
    frame = np.zeros((c, 3, 3, 3))
    frame_bias = np.zeros(c)
    crafted = [(f, b, ch) for f, b in _stem_filters() for ch in range(3)]
    n_crafted = min(len(crafted), a)
    for o, (filt, bias, ch) in enumerate(crafted[:n_crafted]):
        frame[o, ch] = filt
        frame_bias[o] = bias
    frame[n_crafted:a] = rng.normal((a - n_crafted, 3, 3, 3), scale=1.0 / np.sqrt(27.0))
    frame_bias[n_crafted:a] = -0.5 * frame[n_crafted:a].sum(axis=(1, 2, 3))
    stacks["frame_stem"] = ConvKernelStack(frame, frame_bias)

    # mask stems: blurred probabilities with seeded positive gains, into the mask half
    blur = np.full((3, 3), 1.0 / 9.0)
    for name, sign in (("fg_stem", 1.0), ("bg_stem", -1.0)):
        w = np.zeros((c, 1, 3, 3))
        gains = 0.5 + rng.uniform(c - a)
        signs = np.where(np.arange(c - a) % 2 == 0, sign, -sign)
        w[a:, 0] = (signs * gains)[:, None, None] * blur
        stacks[name] = ConvKernelStack(w, np.zeros(c))

    # backbone: identity-anchored random convs, block diagonal (appearance | mask)
    for i in range(3):
        w = np.zeros((c, c, 3, 3))
        w[:a, :a] = _random_stack(rng, a, a, 3, gain=BACKBONE_GAIN).weights
        w[a:, a:] = _random_stack(rng, c - a, c - a, 3, gain=BACKBONE_GAIN).weights
        w[np.arange(c), np.arange(c), 1, 1] += 1.0
        stacks[f"backbone{i}"] = ConvKernelStack(w, np.zeros(c))

    key = np.zeros((c // 8, c, 1, 1))
    key[:, :a] = KEY_JITTER * _random_stack(rng, c // 8, a, 1).weights[:, :, 0, 0][:, :, None, None]
    if a >= 6:
        # anchor: signed colour (positive minus negative half-wave) per channel
        for ch in range(min(3, c // 8)):
            key[ch, ch] += 1.0
            key[ch, 3 + ch] -= 1.0
    key_bias = np.zeros(c // 8)
    stacks["key_head"] = ConvKernelStack(key, key_bias)
    stacks["value_head"] = _random_stack(rng, c // 2, c, 1)
    # the query head is tied to the key head: keys and queries share one embedding
    stacks["query_head"] = stacks["key_head"].copy()
    stacks["query_value_head"] = _random_stack(rng, c // 2, c, 1)
    return EncoderParams(int(seed), c, stride, float(key_scale), stacks)


def _check_frame(frame) -> np.ndarray:
    frame = as_feature_map(frame, "frame")
    if frame.shape[2] != 3:
        raise InvalidArgumentError(f"frame must have 3 channels, got {frame.shape[2]}")
    return frame


def _backbone(params: EncoderParams, stem_out):
    feats = []
    x = stem_out
    for i, s in enumerate(params.backbone_strides):
        x = _relu(conv2d(x, params.stacks[f"backbone{i}"], stride=s))
        feats.append(x)
    return feats


def _key_embed(head: ConvKernelStack, feats, scale: float) -> np.ndarray:
    k = conv2d(feats, head)
    norm = np.sqrt((k * k).sum(axis=2, keepdims=True)) + 1e-6
    return scale * k / norm


def encode_memory(params: EncoderParams, frame, mask: MaskPair) -> Embedding:
    """Key and value of a frame together with its fg/bg probability masks."""
    frame = _check_frame(frame)
    if mask.fg.shape != frame.shape[:2] or mask.bg.shape != frame.shape[:2]:
        raise InvalidArgumentError("frame and mask dims differ")
    if mask.fg.min() < 0 or mask.fg.max() > 1 or mask.bg.min() < 0 or mask.bg.max() > 1:
        raise InvalidArgumentError("mask probabilities must lie in [0, 1]")
    st = params.stacks
    stem = conv2d(frame, st["frame_stem"], stride=2)
    stem += conv2d(mask.fg[:, :, None], st["fg_stem"], stride=2)
    stem += conv2d(mask.bg[:, :, None], st["bg_stem"], stride=2)
    f_m = _backbone(params, _relu(stem))[-1]
    return Embedding(_key_embed(st["key_head"], f_m, params.key_scale), conv2d(f_m, st["value_head"]))


def encode_query(params: EncoderParams, frame) -> QueryEncoding:
    """Query, query value, decoder skip features and the common feature map.

    ``skips`` is ``[stem output (1/2 resolution), first backbone layer]``.
    """
    frame = _check_frame(frame)
    st = params.stacks
    stem = _relu(conv2d(frame, st["frame_stem"], stride=2))
    feats = _backbone(params, stem)
    f_q = feats[-1]
    return QueryEncoding(
        _key_embed(st["query_head"], f_q, params.key_scale),
        conv2d(f_q, st["query_value_head"]),
        [stem, feats[0]],
        f_q,
    )
