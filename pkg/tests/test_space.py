import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radars.errors import ConfigError, EmptySet, SpaceTooLarge
from radars.space import (
    Architecture,
    HyperParamType,
    LayerTemplate,
    SearchSpace,
    Subspace,
    enumerate_space,
    sample,
    space_size,
    subspace_from,
)

from conftest import CONFIGS, ROOT, make_space


def test_table1_space_size(table1_space):
    assert space_size(table1_space) == 24**6 == 191_102_976


def test_singleton_space_size():
    sp = make_space(channels=(2,), strides=(1,), hp=(("kernel_size", (3,)),))
    assert space_size(sp) == 1


def test_size_matches_enumeration():
    sp = make_space(channels=(2, 2, 2), strides=(1, 1, 1), hp=(("kernel_size", (1, 3, 5, 7)),))
    archs = list(enumerate_space(sp, 1000))
    assert space_size(sp) == len(archs) == 64
    assert len(set(archs)) == 64


def test_enumerate_lexicographic():
    sp = make_space(channels=(2, 2), strides=(1, 1), hp=(("kernel_size", (1, 3)),))
    got = [tuple(r[0] for r in a.choices) for a in enumerate_space(sp, 10)]
    assert got == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_enumerate_too_large(table1_space):
    with pytest.raises(SpaceTooLarge):
        enumerate_space(table1_space, 10**6)


def test_sample_singleton_and_determinism(table1_space):
    sp = make_space(channels=(2,), strides=(1,), hp=(("kernel_size", (3,)),))
    assert sample(sp, np.random.default_rng(7)) == Architecture(((0,),))
    a = sample(table1_space, np.random.default_rng(42))
    b = sample(table1_space, np.random.default_rng(42))
    assert a == b
    table1_space.validate(a)


def test_sample_uniform_multinomial():
    # one layer with 24 candidate tuples
    sp = make_space(channels=(2,), strides=(1,),
                    hp=(("kernel_size", (1, 3, 5, 7)), ("int_bits", (1, 3)), ("frac_bits", (1, 3, 6))))
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.zeros(24)
    for _ in range(n):
        counts[sp.candidate_index(sample(sp, rng).choices[0])] += 1
    p = 1 / 24
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 5 * sigma)


def test_fig2_layer_dedup():
    # three architectures whose third layer picks Op4, Op5, Op5
    sp = make_space(channels=(2, 2, 2), strides=(1, 1, 1), hp=(("kernel_size", (1, 3, 5, 7, 9, 11)),))
    archs = [
        Architecture(((0,), (1,), (4,))),
        Architecture(((2,), (1,), (5,))),
        Architecture(((3,), (0,), (5,))),
    ]
    sub = subspace_from(sp, archs)
    assert sub.allowed[2] == ((4,), (5,))
    assert sub.allowed[1] == ((0,), (1,))
    assert len(sub.allowed[0]) == 3


def test_single_arch_subspace_is_singletons(toy64):
    a = Architecture(((1, 0), (0, 1), (1, 1)))
    sub = subspace_from(toy64, [a])
    assert sub.sizes() == [1, 1, 1]
    assert sub.architecture([0, 0, 0]) == a


def test_full_enumeration_union():
    sp = make_space(channels=(2, 2), strides=(1, 1), hp=(("kernel_size", (1, 3)),))
    sub = subspace_from(sp, enumerate_space(sp, 10))
    assert sub.allowed == (((0,), (1,)), ((0,), (1,)))


def test_subspace_empty():
    sp = make_space()
    with pytest.raises(EmptySet):
        subspace_from(sp, [])
    with pytest.raises(EmptySet):
        Subspace(((), ((0, 0),)))


arch_strategy = st.lists(
    st.tuples(*(st.tuples(st.integers(0, 1), st.integers(0, 1)) for _ in range(3))),
    min_size=1, max_size=12,
)


@settings(max_examples=60, deadline=None)
@given(arch_strategy, arch_strategy)
def test_subspace_monotone(a_rows, b_rows):
    sp = make_space()
    A = [Architecture(r) for r in a_rows]
    B = A + [Architecture(r) for r in b_rows]
    sa, sb = subspace_from(sp, A), subspace_from(sp, B)
    for la, lb in zip(sa.allowed, sb.allowed):
        assert set(la) <= set(lb)
    for l, cands in enumerate(sa.allowed):
        assert len(cands) <= min(len(set(A)), sp.candidates_per_layer())


@settings(max_examples=60, deadline=None)
@given(st.tuples(*(st.tuples(st.integers(0, 1), st.integers(0, 1)) for _ in range(3))))
def test_encode_decode_roundtrip(rows):
    sp = make_space()
    a = Architecture(rows)
    sub = subspace_from(sp, [a])
    assert sub.architecture([0] * sp.num_layers) == a
    assert Architecture.decode(a.encode()) == a


def test_layer_template_ceil():
    t = LayerTemplate(3, 8, 2, 7, 5)
    assert (t.out_width, t.out_height) == (4, 3)


def test_table1_channel_chain(table1_space):
    chain = [l.in_channels for l in table1_space.layers] + [table1_space.layers[-1].out_channels]
    assert chain == [3, 64, 64, 128, 128, 256, 256]
    assert [l.stride for l in table1_space.layers] == [1, 2, 1, 2, 1, 2]
    assert [l.out_width for l in table1_space.layers] == [32, 16, 16, 8, 8, 4]


@pytest.mark.parametrize(
    "choices", [(), (3, 1), (1, 1), (0, 1)],
)
def test_hp_type_invariants(choices):
    with pytest.raises(ConfigError):
        HyperParamType("kernel_size", choices)


def test_space_rejects_even_kernel_and_bad_chain():
    with pytest.raises(ConfigError):
        make_space(hp=(("kernel_size", (2, 3)),))
    with pytest.raises(ConfigError):
        SearchSpace((LayerTemplate(3, 4, 1, 8, 8), LayerTemplate(5, 4, 1, 8, 8)),
                    (HyperParamType("kernel_size", (3,)),), (3, 8, 8), 2)


def test_json_roundtrip_and_shipped_copy(table1_space):
    again = SearchSpace.from_dict(json.loads(json.dumps(table1_space.to_dict())))
    assert again == table1_space
    packaged = ROOT / "src" / "radars" / "configs" / "cifar10_quant.json"
    assert json.loads(packaged.read_text()) == json.loads((CONFIGS / "cifar10_quant.json").read_text())


def test_validate_rejects_out_of_range(toy64):
    with pytest.raises(ValueError):
        toy64.validate(Architecture(((2, 0), (0, 0), (0, 0))))
    with pytest.raises(ValueError):
        toy64.validate(Architecture(((0, 0), (0, 0))))


def test_architecture_ordering():
    a, b = Architecture(((0, 1),)), Architecture(((1, 0),))
    assert a < b
    assert sorted([b, a]) == [a, b]
