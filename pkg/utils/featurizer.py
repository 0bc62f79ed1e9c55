"""
Featurisation des textes par hachage signé.

Chaque texte devient un sac de traits:
- unigrammes de mots en minuscules (préfixe "w:")
- n-grammes de caractères 3-5 en bornes de mots (préfixe "c:")

Les traits sont préfixés par la graine de hachage puis hachés dans
[0, F) par le FeatureHasher de scikit-learn (signe alterné). Les lignes
sont normalisées l2 par défaut. Même texte + même config -> même vecteur.
"""

import logging
from typing import Iterable, List, Sequence

from scipy import sparse
from sklearn.feature_extraction import FeatureHasher
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.preprocessing import normalize

from models.run_config import FeaturizerConfig


logger = logging.getLogger(__name__)

TOKEN_PATTERN = r"(?u)\b\w+\b"


class HashingFeaturizer:
    """Texte -> ligne creuse CSR de dimension F."""

    def __init__(self, config: FeaturizerConfig = None):
        self.config = config or FeaturizerConfig()
        self._word_analyzer = CountVectorizer(
            analyzer="word",
            token_pattern=TOKEN_PATTERN,
            lowercase=self.config.lowercase,
            ngram_range=tuple(self.config.word_ngram_range),
        ).build_analyzer()
        self._char_analyzer = CountVectorizer(
            analyzer="char_wb",
            lowercase=self.config.lowercase,
            ngram_range=tuple(self.config.char_ngram_range),
        ).build_analyzer()
        self._hasher = FeatureHasher(
            n_features=self.config.n_features,
            input_type="string",
            alternate_sign=True,
        )
        self._prefix = f"{self.config.hash_seed}:"

    @property
    def n_features(self) -> int:
        return self.config.n_features

    def features(self, text: str) -> List[str]:
        """Chaînes de traits (avant hachage) d'un texte."""
        words = [f"{self._prefix}w:{token}" for token in self._word_analyzer(text)]
        chars = [f"{self._prefix}c:{gram}" for gram in self._char_analyzer(text)]
        return words + chars

    def transform(self, texts: Iterable[str]) -> sparse.csr_matrix:
        """Matrice (n_textes, F) en float64."""
        matrix = self._hasher.transform(self.features(text) for text in texts)
        matrix = sparse.csr_matrix(matrix, dtype="float64")
        if self.config.norm == "l2":
            # les lignes nulles restent nulles
            matrix = normalize(matrix, norm="l2", copy=False)
        matrix.sort_indices()
        return matrix

    def featurize(self, text: str) -> sparse.csr_matrix:
        return self.transform([text])

    def transform_samples(self, samples: Sequence) -> sparse.csr_matrix:
        return self.transform(sample.text for sample in samples)

    def token_index(self, token: str) -> int:
        """Indice haché de l'unigramme `token` (déjà en minuscules)."""
        row = self._hasher.transform([[f"{self._prefix}w:{token}"]])
        return int(row.indices[0])
