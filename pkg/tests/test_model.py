from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from axelrod1d.model import (
    ConfigurationError,
    InterfaceState,
    SystemParams,
    Topology,
    UsageError,
    VertexConfig,
    apply_copy,
    copy_rate,
    discordant_levels,
    interface_view,
    jump_rate,
    overlap,
    sample_half_line,
    sample_initial,
)


def cfg(rows, q=2, topology="torus"):
    return VertexConfig.from_rows(rows, q, topology)


def test_overlap_examples():
    c = cfg([(0, 1, 0), (0, 1, 1), (0, 1, 1)])
    assert overlap(c, 0, 1) == Fraction(2, 3)
    assert overlap(c, 1, 2) == 1
    c4 = cfg([(0, 0, 1, 1), (1, 1, 0, 0), (0, 0, 1, 1)])
    assert overlap(c4, 0, 1) == 0
    assert isinstance(overlap(c, 0, 1), Fraction)


def test_overlap_rejects_non_adjacent_and_out_of_range():
    c = cfg([(0,), (1,), (0,), (1,), (1,)])
    with pytest.raises(UsageError):
        overlap(c, 0, 2)
    with pytest.raises(UsageError):
        overlap(c, 0, 7)
    # torus wraps, path does not
    assert overlap(c, 4, 0) == 0
    with pytest.raises(UsageError):
        overlap(cfg([(0,), (1,), (0,)], topology="path"), 2, 0)


def test_discordant_levels_examples():
    c = cfg([(0, 1, 0), (0, 1, 1), (0, 1, 1)])
    assert discordant_levels(c, 0, 1) == {3}
    assert discordant_levels(c, 1, 2) == set()
    assert discordant_levels(cfg([(0, 0), (1, 1)]), 0, 1) == {1, 2}


def test_apply_copy_examples():
    c = cfg([(0, 1, 0), (0, 1, 1), (1, 1, 1)])
    out = apply_copy(c, 0, 1, 3)
    assert out.cultures[0] == (0, 1, 1)
    assert out.cultures[1:] == c.cultures[1:]
    assert apply_copy(c, 0, 1, 1) == c
    assert apply_copy(out, 0, 1, 3) == out
    with pytest.raises(UsageError):
        apply_copy(c, 0, 1, 4)


def test_jump_rate_values():
    assert jump_rate(1, 3) == Fraction(2, 3)
    assert jump_rate(2, 3) == Fraction(1, 6)
    assert jump_rate(3, 3) == 0
    for bad in (0, 4):
        with pytest.raises(UsageError):
            jump_rate(bad, 3)


@pytest.mark.parametrize("F", range(1, 9))
def test_jump_rate_shape(F):
    rates = [jump_rate(j, F) for j in range(1, F + 1)]
    assert rates[0] == 1 - Fraction(1, F)
    assert rates[-1] == 0
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_copy_rate_examples():
    c = cfg([(0, 1, 0), (0, 1, 1), (1, 0, 0)])
    assert copy_rate(c, 0, 1, 3) == Fraction(1, 3)
    assert 2 * copy_rate(c, 0, 1, 3) == jump_rate(1, 3)
    assert copy_rate(c, 0, 1, 1) == 0
    # zero overlap: no interaction at all
    assert copy_rate(c, 1, 2, 1) == 0


def brute_force_directed_rates(F):
    """All pairs of binary cultures differing in exactly j features, from the generator."""
    out = {}
    for j in range(1, F + 1):
        a = (0,) * F
        b = (1,) * j + (0,) * (F - j)
        c = cfg([a, b])
        total = sum(copy_rate(c, 0, 1, i) + copy_rate(c, 1, 0, i) for i in range(1, F + 1))
        out[j] = (total, copy_rate(c, 0, 1, 1))
    return out


@pytest.mark.parametrize("F", range(1, 9))
def test_directed_rate_identity_brute_force(F):
    for j, (total_both, directed) in brute_force_directed_rates(F).items():
        # one discordant level, both directions, equals r(j)
        assert 2 * directed == jump_rate(j, F)
        assert directed == Fraction(F - j, 2 * F * j)
        assert total_both == j * jump_rate(j, F)


def test_interface_view_examples():
    same = cfg([(1, 0)] * 5)
    assert interface_view(same).masks == (0,) * 5
    view = interface_view(cfg([(0,), (0,), (1,), (1,)]))
    # vertices (2,3) and (4,1) one-based are edges 1 and 3 here
    assert view.masks == (0, 1, 0, 1)
    assert view.total() == 2
    assert view.zeta == (0, 1, 0, 1)


def test_interface_view_of_uniform_config_is_bernoulli_half():
    params = SystemParams(3, 2, 100_000, seed=5)
    view = interface_view(sample_initial(params))
    bits = np.array([[m >> i & 1 for i in range(3)] for m in view.masks])
    n = bits.shape[0]
    se = 0.5 / np.sqrt(n)
    assert np.all(np.abs(bits.mean(axis=0) - 0.5) < 4 * se)
    # independence across levels and across neighbouring edges
    joint_levels = (bits[:, 0] & bits[:, 1]).mean()
    joint_edges = (bits[:-1, 0] & bits[1:, 0]).mean()
    se4 = np.sqrt(0.25 * 0.75 / n)
    assert abs(joint_levels - 0.25) < 4 * se4
    assert abs(joint_edges - 0.25) < 4 * se4


def test_sample_initial_uniform_chi_square():
    params = SystemParams(2, 2, 100_000, seed=17)
    config = sample_initial(params)
    codes = [c[0] * 2 + c[1] for c in config.cultures]
    counts = np.bincount(codes, minlength=4)
    assert sps.chisquare(counts).pvalue > 0.01


def test_sample_initial_deterministic():
    params = SystemParams(3, 4, 50, seed=99)
    assert sample_initial(params) == sample_initial(params)
    assert sample_initial(params) != sample_initial(SystemParams(3, 4, 50, seed=100))


def test_sample_initial_q3_disagreement():
    params = SystemParams(1, 3, 100_000, seed=3)
    view = interface_view(sample_initial(params))
    p = view.total() / view.edges
    se = np.sqrt(2 / 9 / view.edges)
    assert abs(p - 2 / 3) < 4 * se


def test_half_line_law():
    params = SystemParams(3, 2, 2001, Topology.KILLED_HALF_LINE, seed=4)
    state = sample_half_line(params)
    assert state.masks[0] == 0b111
    assert state.edges == 2000
    rest = state.total() - 3
    assert abs(rest / (3 * 1999) - 0.5) < 0.03


def test_params_validation():
    with pytest.raises(ConfigurationError):
        SystemParams(0, 2, 10)
    with pytest.raises(ConfigurationError):
        SystemParams(2, 1, 10)
    with pytest.raises(ConfigurationError):
        SystemParams(2, 2, 1)
    with pytest.raises(ConfigurationError):
        SystemParams(2, 3, 10, Topology.KILLED_HALF_LINE)
    assert SystemParams(2, 2, 10, "path").edges == 9
    assert SystemParams(2, 2, 10).edges == 10


def test_serialization_round_trip():
    c = cfg([(0, 1, 2), (2, 2, 0), (1, 0, 0)], q=3)
    text = c.dumps()
    assert text.splitlines()[1] == "2,2,0"
    assert VertexConfig.loads(text, 3) == c
    s = InterfaceState((0b001, 0b110, 0b000), 3)
    assert s.dumps().splitlines() == ["100", "011", "000"]
    assert InterfaceState.loads(s.dumps()) == s


cultures_strategy = st.integers(1, 5).flatmap(
    lambda F: st.integers(2, 4).flatmap(
        lambda q: st.lists(st.lists(st.integers(0, q - 1), min_size=F, max_size=F),
                           min_size=3, max_size=12).map(lambda rows: cfg(rows, q))))


@given(cultures_strategy)
def test_discordant_plus_overlap_is_F(c):
    for x in range(c.size):
        y = (x + 1) % c.size
        assert len(discordant_levels(c, x, y)) + c.features * overlap(c, x, y) == c.features


@given(cultures_strategy, st.data())
def test_copy_changes_view_only_locally(c, data):
    x = data.draw(st.integers(0, c.size - 1))
    y = (x + data.draw(st.sampled_from([-1, 1]))) % c.size
    level = data.draw(st.integers(1, c.features))
    before = interface_view(c).masks
    after = interface_view(apply_copy(c, x, y, level)).masks
    bit = 1 << (level - 1)
    incident = {(x - 1) % c.size, x}
    for u, (a, b) in enumerate(zip(before, after)):
        if u not in incident:
            assert a == b
        else:
            assert (a ^ b) & ~bit == 0


@given(st.integers(1, 6), st.lists(st.integers(0, 63), min_size=2, max_size=30))
def test_binary_torus_levels_have_even_parity(F, raw):
    rows = [tuple(v >> i & 1 for i in range(F)) for v in raw]
    view = interface_view(cfg(rows))
    for count in view.level_counts():
        assert count % 2 == 0


@settings(max_examples=50)
@given(st.integers(1, 8), st.data())
def test_copy_rate_matches_jump_rate(F, data):
    j = data.draw(st.integers(1, F))
    a = tuple(data.draw(st.lists(st.integers(0, 1), min_size=F, max_size=F)))
    flip = data.draw(st.permutations(range(F)))[:j]
    b = tuple(1 - v if i in flip else v for i, v in enumerate(a))
    c = cfg([a, b])
    level = flip[0] + 1
    assert 2 * copy_rate(c, 0, 1, level) == jump_rate(j, F)
