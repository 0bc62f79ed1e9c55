"""
Classifieur de textes léger: projection linéaire des traits hachés puis
tête FFN à deux couches.

    logits = relu(tanh(X·W_enc + b_enc)·W_1 + b_1)·W_2 + b_2

Tous les paramètres sont dans un seul ParamSet et participent aux
méta-mises à jour.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np
from scipy import sparse

from models.run_config import FeaturizerConfig, ModelConfig
from utils.autodiff import ParamSet, Tensor, softmax, softmax_cross_entropy
from utils.errors import StructuralError
from utils.featurizer import HashingFeaturizer


logger = logging.getLogger(__name__)

N_CLASSES = 2


@dataclass(frozen=True)
class Batch:
    """Lot prêt pour la passe avant: traits CSR (B, F) et labels (B,)."""
    features: sparse.csr_matrix
    labels: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


class TextClassifier:
    """
    Réseau f_θ et sa featurisation.

    Le modèle lui-même est sans état: les paramètres sont toujours passés
    explicitement, ce qui permet l'adaptation interne sur des copies.
    """

    def __init__(self, featurizer: HashingFeaturizer, hidden_size: int = 64):
        self.featurizer = featurizer
        self.n_features = featurizer.n_features
        self.hidden_size = hidden_size

    @classmethod
    def from_config(cls, featurizer_config: FeaturizerConfig, model_config: ModelConfig) -> "TextClassifier":
        return cls(HashingFeaturizer(featurizer_config), model_config.hidden_size)

    @property
    def featurizer_config(self) -> FeaturizerConfig:
        return self.featurizer.config

    # --- Paramètres ---

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        F, H = self.n_features, self.hidden_size
        return {
            "encoder.weight": (F, H),
            "encoder.bias": (H,),
            "head1.weight": (H, H),
            "head1.bias": (H,),
            "head2.weight": (H, N_CLASSES),
            "head2.bias": (N_CLASSES,),
        }

    def fan_in(self, name: str) -> int:
        layer = name.split(".")[0]
        return self.n_features if layer == "encoder" else self.hidden_size

    def init_params(self, seed: int) -> ParamSet:
        """Uniforme dans [-1/sqrt(fan_in), 1/sqrt(fan_in)], tirages dans l'ordre des noms."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in sorted(self.param_shapes().items()):
            bound = 1.0 / np.sqrt(self.fan_in(name))
            params[name] = rng.uniform(-bound, bound, size=shape)
        return ParamSet(params)

    def zero_params(self) -> ParamSet:
        return ParamSet({name: np.zeros(shape) for name, shape in self.param_shapes().items()})

    def check_params(self, params: Mapping[str, np.ndarray]) -> None:
        expected = self.param_shapes()
        missing = sorted(set(expected) ^ set(params))
        if missing:
            raise StructuralError(f"classifier parameter '{missing[0]}' missing or unexpected")
        for name, shape in expected.items():
            if tuple(np.shape(params[name])) != shape:
                raise StructuralError(
                    f"classifier parameter '{name}' has shape {tuple(np.shape(params[name]))}, expected {shape}"
                )

    # --- Données ---

    def featurize(self, samples: Sequence) -> sparse.csr_matrix:
        return self.featurizer.transform_samples(samples)

    def make_batch(self, samples: Sequence) -> Batch:
        """Lot étiqueté (lit `label` sur chaque échantillon)."""
        labels = np.fromiter((sample.label for sample in samples), dtype=np.int64, count=len(samples))
        return Batch(self.featurize(samples), labels)

    # --- Passe avant ---

    def _check_features(self, features) -> None:
        if features.shape[0] == 0:
            raise StructuralError("empty batch")
        if features.shape[1] != self.n_features:
            raise StructuralError(
                f"feature dimension {features.shape[1]} does not match encoder.weight rows {self.n_features}"
            )

    def logits_graph(self, tensors: Mapping[str, Tensor], features) -> Tensor:
        self._check_features(features)
        hidden = (Tensor(features) @ tensors["encoder.weight"] + tensors["encoder.bias"]).tanh()
        hidden = (hidden @ tensors["head1.weight"] + tensors["head1.bias"]).relu()
        return hidden @ tensors["head2.weight"] + tensors["head2.bias"]

    def loss(self, tensors: Mapping[str, Tensor], batch: Batch) -> Tensor:
        """Entropie croisée moyenne sur le lot."""
        return softmax_cross_entropy(self.logits_graph(tensors, batch.features), batch.labels).mean()

    def forward(self, params: Mapping[str, np.ndarray], features) -> np.ndarray:
        """Logits (B, 2) hors graphe."""
        self.check_params(params)
        tensors = {name: Tensor(params[name], name=name) for name in params}
        return np.asarray(self.logits_graph(tensors, features).data)

    def predict(self, params: Mapping[str, np.ndarray], features) -> Tuple[np.ndarray, np.ndarray]:
        """
        Labels et confiances.

        label = argmax softmax (égalité -> 0), confiance = probabilité max.
        """
        probs = softmax(self.forward(params, features))
        labels = np.argmax(probs, axis=1).astype(np.int64)
        return labels, probs.max(axis=1)

    def predict_samples(self, params: Mapping[str, np.ndarray], samples: Sequence) -> Tuple[np.ndarray, np.ndarray]:
        return self.predict(params, self.featurize(samples))

    def describe(self) -> Dict[str, object]:
        return {"featurizer": self.featurizer_config, "hidden_size": self.hidden_size}

