import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from cerfgan.domains import (MULTI, SINGLE, DomainRegistry, build_registry, label_batch, multi_hot, one_hot,
                             pad_label_to_block, validate_label)


def test_minimal_registry():
    reg = build_registry({"domains": ["sketch", "photo"], "pairs": [(0, 1)]})
    assert reg.N == 2
    assert reg.pairs == frozenset({frozenset({0, 1})})


def test_sixteen_domains():
    names = [f"d{i}" for i in range(16)]
    reg = build_registry({"domains": names, "pairs": "all"})
    assert reg.N == 16
    assert len(reg.pairs) == 16 * 15 // 2


def test_pairs_by_name():
    reg = build_registry({"domains": ["a", "b", "c"], "pairs": [["a", "c"]]})
    assert reg.sorted_pairs() == [(0, 2)]


@pytest.mark.parametrize("config, match", [
    ({"domains": ["a", "b", "b"], "pairs": [(0, 1)]}, "duplicate"),
    ({"domains": ["a", "b"], "pairs": [(0, 2)]}, "unknown"),
    ({"domains": ["a", "b"], "pairs": [("a", "z")]}, "unknown"),
    ({"domains": ["a", "b"], "pairs": [(1, 1)]}, "self-pair"),
    ({"domains": ["a"], "pairs": []}, "at least 2"),
    ({"domains": ["a", "b"], "pairs": []}, "at least 1 pair"),
])
def test_registry_errors(config, match):
    with pytest.raises(ValueError, match=match):
        build_registry(config)


def test_registry_rejects_bad_names():
    with pytest.raises(ValueError):
        DomainRegistry(("a,b", "c"), frozenset({frozenset({0, 1})}))
    with pytest.raises(ValueError):
        DomainRegistry(("", "c"), frozenset({frozenset({0, 1})}))


def test_index_lookup_names_valid_domains():
    reg = build_registry({"domains": ["x", "y"], "pairs": "all"})
    assert reg.index("y") == 1
    with pytest.raises(KeyError, match="x, y"):
        reg.index("z")


def test_one_hot_examples():
    assert one_hot(0, 10).tolist() == [1.0] + [0.0] * 9
    assert one_hot(1, 2).tolist() == [0.0, 1.0]
    with pytest.raises(IndexError):
        one_hot(10, 10)
    with pytest.raises(IndexError):
        one_hot(-1, 3)


@given(st.integers(1, 64).flatmap(lambda n: st.tuples(st.integers(0, n - 1), st.just(n))))
def test_one_hot_argmax_roundtrip(case):
    i, n = case
    v = one_hot(i, n)
    assert int(v.argmax()) == i
    validate_label(v, SINGLE)


def test_label_modes():
    validate_label(torch.tensor([1.0, 0.0, 1.0]), MULTI)
    with pytest.raises(ValueError):
        validate_label(torch.tensor([1.0, 0.0, 1.0]), SINGLE)
    with pytest.raises(ValueError):
        validate_label(torch.zeros(4), MULTI)
    with pytest.raises(ValueError):
        validate_label(torch.tensor([0.5, 0.5]), MULTI)


def test_label_batch_matches_one_hot():
    b = label_batch([2, 0], 3)
    assert torch.equal(b, torch.stack([one_hot(2, 3), one_hot(0, 3)]))
    with pytest.raises(IndexError):
        label_batch([3], 3)


def test_pad_one_hot_to_bottleneck_block():
    block = pad_label_to_block(one_hot(0, 16), (512, 2, 2))
    assert block.shape == (512, 2, 2)
    flat = block.flatten()
    assert flat[0] == 1 and flat[1:].abs().sum() == 0
    assert flat.numel() == 2048


def test_pad_multi_label_against_flatten_oracle():
    label = multi_hot([0, 2], 40)
    block = pad_label_to_block(label, (512, 2, 2))
    expected = np.zeros(2048, dtype=np.float32)
    expected[0] = expected[2] = 1
    assert np.array_equal(block.numpy().reshape(-1), expected)
    # row-major: flat index 2 lands in channel 0, row 1, column 0
    assert block[0, 1, 0] == 1


def test_pad_rejects_oversized_label():
    with pytest.raises(ValueError, match="exceeds"):
        pad_label_to_block(torch.ones(9), (2, 2, 2))


label_shapes = st.tuples(st.integers(1, 8), st.integers(1, 4), st.integers(1, 4))


@settings(max_examples=60)
@given(label_shapes, st.data())
def test_pad_roundtrip_and_sum(shape, data):
    size = shape[0] * shape[1] * shape[2]
    n = data.draw(st.integers(1, size))
    bits = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda b: sum(b) > 0))
    label = torch.tensor(bits, dtype=torch.float32)
    block = pad_label_to_block(label, shape)
    assert torch.equal(block.flatten()[:n], label)
    assert float(block.sum()) == float(label.sum())
    batched = pad_label_to_block(label.unsqueeze(0).repeat(3, 1), shape)
    assert batched.shape == (3, *shape)
    assert torch.equal(batched[1], block)
