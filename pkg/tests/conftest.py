from pathlib import Path

import numpy as np
import pytest

from radars.space import SearchSpace

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def make_space(channels=(4, 8, 8), strides=(1, 2, 1), hp=(("kernel_size", (1, 3)), ("frac_bits", (1, 3))),
               input_shape=(3, 8, 8), num_classes=4):
    return SearchSpace.build(input_shape, num_classes, channels, strides, hp)


@pytest.fixture
def table1_space():
    return SearchSpace.load(CONFIGS / "cifar10_quant.json")


@pytest.fixture
def toy64():
    return SearchSpace.load(CONFIGS / "toy64.json")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def naive_conv(x, w, stride):
    """Direct nested-loop "same" convolution; also counts multiply-accumulates."""
    B, C, H, W = x.shape
    O, _, K, _ = w.shape
    p = K // 2
    HO, WO = -(-H // stride), -(-W // stride)
    out = np.zeros((B, O, HO, WO))
    macs = 0
    for b in range(B):
        for o in range(O):
            for i in range(HO):
                for j in range(WO):
                    acc = 0.0
                    for c in range(C):
                        for di in range(K):
                            for dj in range(K):
                                r, s = i * stride + di - p, j * stride + dj - p
                                v = x[b, c, r, s] if 0 <= r < H and 0 <= s < W else 0.0
                                acc += v * w[o, c, di, dj]
                                macs += 1
                    out[b, o, i, j] = acc
    return out, macs


def count_macs(ci, co, k, h, w, stride):
    """Count MACs of one image by walking every output position and kernel tap."""
    ho, wo = -(-h // stride), -(-w // stride)
    n = 0
    for _o in range(co):
        for _i in range(ho):
            for _j in range(wo):
                for _c in range(ci):
                    for _di in range(k):
                        for _dj in range(k):
                            n += 1
    return n
