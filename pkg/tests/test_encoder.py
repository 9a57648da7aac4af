import numpy as np
import pytest

from promptgeo.embedstore import ClassTable, DatasetHeader, write_dataset
from promptgeo.encoder import (
    MODE_FROZEN,
    MODE_SURROGATE,
    SurrogateEncoder,
    encode_all,
    encode_class,
    load_frozen,
)
from promptgeo.errors import DegenerateTextFeatureError
from promptgeo.subspace import PromptMatrix


def unit(v):
    return v / np.linalg.norm(v)


def test_zero_prompts_reduce_to_class_embedding():
    rng = np.random.default_rng(0)
    enc = SurrogateEncoder.surrogate(D=8, seed=3)
    pm = PromptMatrix(np.zeros((8, 2)))
    c = rng.standard_normal(8)
    np.testing.assert_allclose(encode_class(enc, pm, c), unit(c), rtol=0, atol=1e-15)


def test_identity_mix_single_prompt_equal_to_class():
    # A = I, M = 1, omega = c_k: g = normalize(2 c_k) = normalize(c_k)
    D = 6
    c = np.arange(1.0, D + 1.0)
    enc = SurrogateEncoder(mode=MODE_SURROGATE, mix=np.eye(D))
    pm = PromptMatrix(c.reshape(D, 1))
    np.testing.assert_allclose(encode_class(enc, pm, c), unit(c), rtol=0, atol=1e-15)


def test_output_is_unit_norm():
    rng = np.random.default_rng(1)
    enc = SurrogateEncoder.surrogate(D=16, seed=5)
    pm = PromptMatrix(rng.standard_normal((16, 4)))
    for _ in range(10):
        g = encode_class(enc, pm, rng.standard_normal(16))
        assert abs(np.linalg.norm(g) - 1.0) <= 1e-12


def test_same_seed_same_encoder():
    a = SurrogateEncoder.surrogate(D=12, seed=9)
    b = SurrogateEncoder.surrogate(D=12, seed=9)
    assert np.array_equal(a.mix, b.mix)
    c = SurrogateEncoder.surrogate(D=12, seed=10)
    assert not np.array_equal(a.mix, c.mix)


def test_encode_all_matches_per_class():
    rng = np.random.default_rng(2)
    enc = SurrogateEncoder.surrogate(D=10, seed=1)
    pm = PromptMatrix(rng.standard_normal((10, 3)))
    classes = ClassTable(rng.standard_normal((4, 10)))
    G = encode_all(enc, pm, classes)
    for k in range(4):
        np.testing.assert_array_equal(G[k], encode_class(enc, pm, classes.embeddings[k]))


def test_frozen_is_constant_in_prompts():
    rng = np.random.default_rng(3)
    feats = rng.standard_normal((3, 8))
    enc = SurrogateEncoder.frozen(feats)
    assert enc.mode == MODE_FROZEN
    assert not enc.differentiable
    classes = ClassTable(rng.standard_normal((3, 8)))
    g1 = encode_all(enc, PromptMatrix(rng.standard_normal((8, 2))), classes)
    g2 = encode_all(enc, PromptMatrix(rng.standard_normal((8, 2)) * 100), classes)
    assert np.array_equal(g1, g2)
    for k in range(3):
        np.testing.assert_allclose(g1[k], unit(feats[k]), rtol=0, atol=1e-15)


def test_frozen_requires_class_index():
    enc = SurrogateEncoder.frozen(np.eye(3, 5))
    with pytest.raises(ValueError, match="class index"):
        encode_class(enc, PromptMatrix(np.zeros((5, 2))), np.zeros(5))
    np.testing.assert_array_equal(
        encode_class(enc, PromptMatrix(np.zeros((5, 2))), np.zeros(5), k=1),
        np.array([0.0, 1.0, 0.0, 0.0, 0.0]),
    )


def test_frozen_rejects_zero_row():
    feats = np.eye(3, 6)
    feats[2] = 0.0
    with pytest.raises(DegenerateTextFeatureError, match="feature 2"):
        SurrogateEncoder.frozen(feats)


def test_degenerate_sum_raises():
    D = 4
    enc = SurrogateEncoder(mode=MODE_SURROGATE, mix=np.eye(D))
    c = np.array([1.0, 0.0, 0.0, 0.0])
    pm = PromptMatrix((-c).reshape(D, 1))  # shift exactly cancels c
    with pytest.raises(DegenerateTextFeatureError):
        encode_class(enc, pm, c)


def test_load_frozen_from_text_file(tmp_path):
    rng = np.random.default_rng(4)
    feats = rng.standard_normal((5, 7)).astype(np.float32).astype(np.float64)
    header = DatasetHeader(1, 7, 5, 0, 0, 0, 0)
    path = tmp_path / "text.sbcp"
    write_dataset(header, ClassTable(feats), [], path)
    enc = load_frozen(path)
    assert enc.mode == MODE_FROZEN
    for k in range(5):
        np.testing.assert_allclose(enc.frozen_features[k], unit(feats[k]), atol=1e-15)
