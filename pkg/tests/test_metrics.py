import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radars.metrics import (
    CostModelParams,
    RewardParams,
    aops,
    layer_activation_count,
    layer_weight_count,
    mac_count,
    max_single_path_memory,
    reward,
    single_path_memory,
    subspace_memory,
    supernet_memory_full,
)
from radars.space import (
    Architecture,
    HyperParamType,
    LayerTemplate,
    enumerate_space,
    full_subspace,
    subspace_from,
)

from conftest import count_macs, make_space


def _types(*sizes):
    return [HyperParamType(f"t{i}", tuple(range(1, n + 1))) for i, n in enumerate(sizes)]


@pytest.mark.parametrize(
    "ci,co,k,hw,expected",
    [(3, 8, 3, 16, 55_296), (1, 1, 1, 1, 1), (64, 64, 3, 16, 9_437_184)],
)
def test_mac_count_examples(ci, co, k, hw, expected):
    layer = LayerTemplate(ci, co, 1, hw, hw)
    assert mac_count(layer, k) == expected
    if ci * co * hw < 2000:
        assert count_macs(ci, co, k, hw, hw, 1) == expected


def test_aops_single_layer_example():
    sp = make_space(channels=(8,), strides=(1,), input_shape=(3, 16, 16),
                    hp=(("kernel_size", (3,)), ("int_bits", (1,)), ("frac_bits", (3,))))
    arch = Architecture(((0, 0, 0),))
    # 55,296 MACs times (1 + 1 + 3)^2
    assert aops(sp, arch) == 1_382_400


def test_aops_equal_bits_structure():
    sp = make_space(channels=(4, 6), strides=(1, 2), input_shape=(2, 6, 6),
                    hp=(("kernel_size", (1, 3)), ("int_bits", (2,)), ("frac_bits", (4,))))
    for arch in enumerate_space(sp, 100):
        macs = sum(mac_count(l, sp.resolve(r).kernel) for l, r in zip(sp.layers, arch.choices))
        assert aops(sp, arch) == macs * 7**2


def test_aops_monotone_exhaustive():
    sp = make_space(channels=(4,), strides=(1,), input_shape=(2, 5, 5),
                    hp=(("kernel_size", (1, 3, 5, 7)), ("int_bits", (1, 3)), ("frac_bits", (1, 3, 6))))
    table = {a.choices[0]: aops(sp, a) for a in enumerate_space(sp, 100)}
    for cand, value in table.items():
        for t in range(3):
            up = list(cand)
            up[t] += 1
            if tuple(up) in table:
                assert table[tuple(up)] >= value


def test_reward_table2_example():
    p = RewardParams(alpha=0.5, beta=0.0, gamma=1e9)
    assert reward(0.8833, 2.50e9, p) == pytest.approx(-0.30835, abs=1e-12)


def test_reward_limits():
    assert reward(0.7, 5e12, RewardParams(1.0, 0.0, 1e9)) == 0.7
    p = RewardParams(0.5, 123.0, 1e6)
    assert reward(0.6, 123.0, p) == pytest.approx(0.5 * 0.6 + 0.5)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e10), st.floats(-1e9, 1e9), st.floats(1e3, 1e10),
)
def test_reward_affine_partials(alpha, acc, a, beta, gamma):
    p = RewardParams(alpha, beta, gamma)
    h = 1e-3
    # central differences lose digits in proportion to the magnitude of the reward itself
    slack = 1e-9 + 1e-15 * abs(reward(acc, a, p)) / h
    d_acc = (reward(acc + h, a, p) - reward(acc - h, a, p)) / (2 * h)
    assert d_acc == pytest.approx(alpha, abs=slack)
    ha = gamma * 1e-3
    d_aops = (reward(acc, a + ha, p) - reward(acc, a - ha, p)) / (2 * ha)
    assert d_aops == pytest.approx(-(1 - alpha) / gamma, rel=1e-6, abs=1e-15)


def test_weight_and_activation_counts():
    types24 = _types(4, 2, 3)
    assert layer_weight_count(LayerTemplate(64, 64, 1, 8, 8), types24, 3) == 884_736
    assert layer_weight_count(LayerTemplate(3, 4, 1, 8, 8), _types(2), 1) == 24
    assert layer_weight_count(LayerTemplate(5, 7, 1, 8, 8), _types(1), 3) == 5 * 7 * 9
    assert layer_activation_count(LayerTemplate(3, 4, 1, 2, 2), _types(6), 2) == 192
    assert layer_activation_count(LayerTemplate(3, 4, 1, 3, 5), _types(1), 1) == 4 * 3 * 5
    assert layer_activation_count(LayerTemplate(3, 64, 1, 32, 32), types24, 256) == 402_653_184


def test_full_memory_degenerate_is_single_network():
    sp = make_space(channels=(4, 6), strides=(1, 2), hp=(("kernel_size", (3,)),))
    cost = CostModelParams(1.0, 1.0, 8, 4.0)
    arch = Architecture(((0,), (0,)))
    expected = 4.0 * sum(
        l.in_channels * l.out_channels * 9 + 8 * l.out_channels * l.out_width * l.out_height
        for l in sp.layers
    )
    assert supernet_memory_full(sp, cost) == expected == single_path_memory(sp, arch, cost)


def test_full_memory_linear_in_choices():
    cost = CostModelParams()
    a = make_space(hp=(("kernel_size", (1, 3)), ("frac_bits", (1, 3))))
    b = make_space(hp=(("kernel_size", (1, 3)), ("frac_bits", (1, 3, 5, 6))))
    assert supernet_memory_full(b, cost) == 2 * supernet_memory_full(a, cost)


def test_adding_type_multiplies_by_d():
    cost = CostModelParams(2, 2, 16, 4)
    base = make_space(hp=(("kernel_size", (1, 3, 5)),))
    more = make_space(hp=(("kernel_size", (1, 3, 5)), ("frac_bits", (1, 2, 3))))
    assert supernet_memory_full(more, cost) == 3 * supernet_memory_full(base, cost)
    ratio_base = supernet_memory_full(base, cost) / max_single_path_memory(base, cost)
    ratio_more = supernet_memory_full(more, cost) / max_single_path_memory(more, cost)
    assert ratio_more == pytest.approx(3 * ratio_base)


def test_singleton_subspace_equals_single_path(toy64):
    cost = CostModelParams(2, 3, 7, 4)
    for arch in enumerate_space(toy64, 64):
        sub = subspace_from(toy64, [arch])
        assert subspace_memory(toy64, sub, cost) == single_path_memory(toy64, arch, cost)


def test_full_subspace_bounded_by_kmax_formula():
    sp = make_space(channels=(3, 5), strides=(1, 2), hp=(("kernel_size", (1, 3, 5)), ("frac_bits", (1, 2))))
    cost = CostModelParams(2, 2, 4, 4)
    assert subspace_memory(sp, full_subspace(sp), cost) <= supernet_memory_full(sp, cost)
    # without kernel choices the exact model coincides with the formula
    sp2 = make_space(channels=(3, 5), strides=(1, 2), hp=(("int_bits", (1, 2)), ("frac_bits", (1, 2))))
    assert subspace_memory(sp2, full_subspace(sp2), cost) == supernet_memory_full(sp2, cost)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 63), min_size=1, max_size=10))
def test_dedup_never_increases_memory(idxs):
    sp = make_space()
    cost = CostModelParams(2, 2, 8, 4)
    archs = list(enumerate_space(sp, 64))
    chosen = [archs[i] for i in idxs]
    sub = subspace_from(sp, chosen)
    mem = subspace_memory(sp, sub, cost)
    assert mem <= sum(single_path_memory(sp, a, cost) for a in chosen) + 1e-9
    m = len(set(chosen))
    assert mem <= m * max(single_path_memory(sp, a, cost) for a in chosen) + 1e-9


def test_cost_params_positive():
    with pytest.raises(ValueError):
        CostModelParams(eta=0)
    with pytest.raises(ValueError):
        RewardParams(alpha=1.5)
    with pytest.raises(ValueError):
        RewardParams(gamma=0)
