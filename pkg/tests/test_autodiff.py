"""Tests de la différentiation automatique et des ParamSet."""

import numpy as np
import pytest
from scipy import sparse

from models.run_config import FeaturizerConfig
from utils.autodiff import (
    GradSet,
    ParamSet,
    Tensor,
    as_tensor,
    evaluate,
    finite_diff,
    grad,
    load_params,
    save_params,
    sgd_step,
    softmax_cross_entropy,
)
from utils.errors import NumericError, StructuralError
from utils.featurizer import HashingFeaturizer
from utils.text_model import Batch, TextClassifier


H = 1e-4


def assert_close(analytic, numeric, where=""):
    """Erreur relative < 1e-4, ou absolue < 1e-6 près de zéro."""
    error = abs(analytic - numeric)
    assert error <= max(1e-4 * max(abs(analytic), abs(numeric)), 1e-6), (where, analytic, numeric)


def assert_gradients_match(loss, params):
    _, analytic = grad(loss, params)
    numeric = finite_diff(loss, params, h=H)
    for name in params:
        for index in np.ndindex(params[name].shape):
            assert_close(analytic[name][index], numeric[name][index], f"{name}{index}")


def relu_pattern(params, features):
    hidden = np.tanh(features @ params["encoder.weight"] + params["encoder.bias"])
    return hidden @ params["head1.weight"] + params["head1.bias"] > 0


def crosses_relu_kink(params, features, name, index):
    """Vrai si décaler l'entrée de ±h fait changer de côté une pré-activation relu."""
    if name.startswith("head2"):
        return False
    reference = relu_pattern(params, features)
    for step in (H, -H):
        shifted = {key: np.array(params[key]) for key in params}
        shifted[name][index] += step
        if not np.array_equal(relu_pattern(shifted, features), reference):
            return True
    return False


def square(tensors):
    theta = tensors["theta"]
    return theta @ theta


class TestGrad:

    def test_constant_loss_has_zero_gradients(self):
        params = ParamSet({"w": np.ones((2, 3)), "b": np.ones(3)})
        value, grads = grad(lambda tensors: as_tensor(3.0), params)
        assert value == 3.0
        assert set(grads) == {"b", "w"}
        assert all(not np.any(grads[name]) for name in grads)

    def test_square_of_scalar(self):
        params = ParamSet({"theta": [[3.0]]})
        value, grads = grad(square, params)
        assert value == 9.0
        assert grads["theta"][0, 0] == 6.0

    def test_shared_subexpression_accumulates(self):
        params = ParamSet({"theta": [[1.5]]})

        def loss(tensors):
            shifted = tensors["theta"] + Tensor([[-2.0]])
            return shifted @ shifted

        value, grads = grad(loss, params)
        assert value == pytest.approx(0.25)
        assert grads["theta"][0, 0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_classifier_gradient_matches_finite_differences(self, seed):
        model = TextClassifier(HashingFeaturizer(FeaturizerConfig(n_features=16)), hidden_size=3)
        rng = np.random.default_rng(seed)
        features = rng.normal(size=(5, 16))
        batch = Batch(sparse.csr_matrix(features), rng.integers(0, 2, size=5))
        params = model.init_params(seed)

        def loss(tensors):
            return model.loss(tensors, batch)

        _, analytic = grad(loss, params)
        numeric = finite_diff(loss, params, h=H)
        for name in params:
            for index in np.ndindex(params[name].shape):
                if crosses_relu_kink(params, features, name, index):
                    continue
                assert_close(analytic[name][index], numeric[name][index], f"{name}{index} (seed {seed})")

    def test_non_scalar_loss_is_rejected(self):
        params = ParamSet({"w": np.ones((2, 2))})
        with pytest.raises(StructuralError):
            grad(lambda tensors: tensors["w"] @ tensors["w"], params)

    def test_infinite_loss_raises_numeric_error(self):
        params = ParamSet({"theta": [[np.inf]]})
        with pytest.raises(NumericError):
            grad(square, params)

    def test_matmul_shape_mismatch(self):
        params = ParamSet({"a": np.ones((2, 3)), "b": np.ones((2, 3))})
        with pytest.raises(StructuralError, match="matmul shape mismatch"):
            evaluate(lambda tensors: (tensors["a"] @ tensors["b"]).mean(), params)

    def test_sparse_tensor_cannot_require_grad(self):
        with pytest.raises(StructuralError):
            Tensor(sparse.csr_matrix(np.eye(2)), requires_grad=True)


def nonzero(rng, shape, low=0.1):
    """Valeurs tirées loin de zéro (coude de relu)."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, 1.0, size=shape)


@pytest.mark.parametrize("seed", range(10))
class TestPrimitiveGradients:

    def test_matmul(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))})
        weights = Tensor(rng.normal(size=(2, 2)))
        assert_gradients_match(lambda t: ((t["a"] @ t["b"]) @ weights).mean(), params)

    def test_sparse_left_operand(self, seed):
        rng = np.random.default_rng(seed)
        features = sparse.random(4, 6, density=0.5, random_state=seed, format="csr")
        params = ParamSet({"w": rng.normal(size=(6, 3))})
        weights = Tensor(rng.normal(size=(3, 1)))
        assert_gradients_match(lambda t: ((Tensor(features) @ t["w"]) @ weights).mean(), params)

    def test_add_with_broadcast(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"x": rng.normal(size=(4, 3)), "b": rng.normal(size=3)})
        weights = Tensor(rng.normal(size=(3, 2)))
        assert_gradients_match(lambda t: ((t["x"] + t["b"]) @ weights).mean(), params)

    def test_tanh(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"x": rng.normal(size=(3, 3))})
        weights = Tensor(rng.normal(size=(3, 2)))
        assert_gradients_match(lambda t: (t["x"].tanh() @ weights).mean(), params)

    def test_relu(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"x": nonzero(rng, (3, 3))})
        weights = Tensor(rng.normal(size=(3, 2)))
        assert_gradients_match(lambda t: (t["x"].relu() @ weights).mean(), params)

    def test_softmax_cross_entropy(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"logits": rng.normal(scale=3.0, size=(5, 2))})
        labels = rng.integers(0, 2, size=5)
        assert_gradients_match(lambda t: softmax_cross_entropy(t["logits"], labels).mean(), params)

    def test_mean(self, seed):
        rng = np.random.default_rng(seed)
        params = ParamSet({"x": rng.normal(size=(2, 5))})
        _, analytic = grad(lambda t: t["x"].mean(), params)
        assert np.all(analytic["x"] == 0.1)
        assert_gradients_match(lambda t: t["x"].mean(), params)


class TestParamSet:

    def test_values_are_read_only(self):
        params = ParamSet({"w": np.zeros(3)})
        with pytest.raises(ValueError):
            params["w"][0] = 1.0

    def test_source_array_is_copied(self):
        source = np.zeros(3)
        params = ParamSet({"w": source})
        source[0] = 5.0
        assert params["w"][0] == 0.0

    def test_names_are_sorted(self):
        params = ParamSet({"z": [1.0], "a": [2.0]})
        assert list(params) == ["a", "z"]

    def test_zero_sized_parameter_rejected(self):
        with pytest.raises(StructuralError):
            ParamSet({"w": np.zeros((0, 2))})

    def test_gradset_sum_scale_and_norm(self):
        g = GradSet({"w": [3.0, 4.0]})
        assert g.norm() == 5.0
        doubled = g + g
        np.testing.assert_array_equal(doubled["w"], [6.0, 8.0])
        np.testing.assert_array_equal(g.scale(0.5)["w"], [1.5, 2.0])
        assert GradSet.zeros_like(g).norm() == 0.0

    def test_gradset_sum_requires_same_structure(self):
        with pytest.raises(StructuralError):
            GradSet({"w": [1.0]}) + GradSet({"v": [1.0]})
        with pytest.raises(StructuralError):
            GradSet({"w": [1.0]}) + GradSet({"w": [1.0, 2.0]})

    def test_digest_tracks_values(self):
        a = ParamSet({"w": [1.0, 2.0]})
        b = ParamSet({"w": [1.0, 2.0]})
        c = ParamSet({"w": [1.0, 2.5]})
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert a.equals(b) and not a.equals(c)


class TestSgdStep:

    def test_update_is_pure(self):
        params = ParamSet({"w": [1.0, 2.0]})
        grads = GradSet({"w": [0.5, -1.0]})
        updated = sgd_step(params, grads, 0.1)
        np.testing.assert_allclose(updated["w"], [0.95, 2.1])
        np.testing.assert_array_equal(params["w"], [1.0, 2.0])

    def test_zero_learning_rate_is_identity(self):
        params = ParamSet({"w": [1.0, 2.0]})
        assert sgd_step(params, GradSet({"w": [9.0, 9.0]}), 0.0).equals(params)

    def test_steps_compose_linearly(self):
        rng = np.random.default_rng(0)
        params = ParamSet({"w": rng.normal(size=(3, 2))})
        grads = GradSet({"w": rng.normal(size=(3, 2))})
        two_steps = sgd_step(sgd_step(params, grads, 0.1), grads, 0.2)
        one_step = sgd_step(params, grads, 0.3)
        np.testing.assert_allclose(two_steps["w"], one_step["w"], rtol=0, atol=1e-12)

    def test_negative_learning_rate_rejected(self):
        params = ParamSet({"w": [1.0]})
        with pytest.raises(ValueError):
            sgd_step(params, GradSet({"w": [1.0]}), -0.1)

    def test_incompatible_gradients_rejected(self):
        with pytest.raises(StructuralError):
            sgd_step(ParamSet({"w": [1.0]}), GradSet({"v": [1.0]}), 0.1)


class TestFiniteDiff:

    def test_matches_closed_form(self):
        params = ParamSet({"theta": [[2.0]]})
        estimate = finite_diff(square, params, h=1e-4)
        assert estimate["theta"][0, 0] == pytest.approx(4.0, abs=1e-8)

    @pytest.mark.parametrize("h", [0.0, -1e-4, 0.1])
    def test_step_out_of_range(self, h):
        with pytest.raises(ValueError):
            finite_diff(square, ParamSet({"theta": [[1.0]]}), h=h)


class TestSerialization:

    def test_save_then_load_is_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        params = ParamSet({
            "encoder.weight": rng.normal(size=(5, 3)),
            "encoder.bias": rng.normal(size=3) * 1e-9,
            "head.weight": np.array([[1 / 3, -2 / 7]]),
        })
        path = save_params(params, tmp_path / "model" / "params.txt")
        loaded = load_params(path)
        assert loaded.equals(params)
        assert loaded.digest() == params.digest()

    def test_truncated_file_raises(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("w 3 2\n1 2\n3 4\n", encoding="utf-8")
        with pytest.raises(StructuralError, match="truncated"):
            load_params(path)

    def test_wrong_value_count_raises(self, tmp_path):
        path = tmp_path / "params.txt"
        path.write_text("w 2 2\n1 2 3\n4 5\n", encoding="utf-8")
        with pytest.raises(StructuralError):
            load_params(path)
