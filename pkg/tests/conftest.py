"""Fixtures partagées des tests HateMAML-lab."""

import sys
from pathlib import Path
from typing import List

import pytest

# Ajouter la racine du projet au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.corpus_records import Sample, Split  # noqa: E402
from models.run_config import FeaturizerConfig, TrainingConfig  # noqa: E402
from models.synthetic_family import FamilySpec  # noqa: E402
from utils.featurizer import HashingFeaturizer  # noqa: E402
from utils.meta_trainer import finetune, train_base  # noqa: E402
from utils.synth_bench import gen_family  # noqa: E402
from utils.text_model import TextClassifier  # noqa: E402


def make_samples(language: str, split: str, n: int, start: int = 0, label_of=None) -> List[Sample]:
    """n échantillons étiquetés alternés 0/1 (ou selon `label_of(i)`)."""
    label_of = label_of or (lambda i: i % 2)
    return [
        Sample(
            id=f"{language}-{split}-{i}",
            text=f"texte {language} numero {i} " + ("haine" if label_of(i) else "neutre"),
            label=label_of(i),
            language=language,
            split=Split(split),
        )
        for i in range(start, start + n)
    ]


@pytest.fixture
def small_featurizer() -> HashingFeaturizer:
    return HashingFeaturizer(FeaturizerConfig(n_features=256))


@pytest.fixture
def tiny_model(small_featurizer) -> TextClassifier:
    return TextClassifier(small_featurizer, hidden_size=4)


@pytest.fixture
def tiny_family() -> FamilySpec:
    return FamilySpec(
        languages=["a", "b", "c"],
        vocab_size=100,
        relatedness={"a-b": 0.5},
        default_relatedness=0.1,
        marker_count=10,
        marker_density=0.3,
        min_length=5,
        max_length=12,
        train_size=40,
        validation_size=10,
        test_size=10,
        seed=3,
    )


# -----------------------------------------------------------------------------
# Calibration sur une petite famille apprenable (entraînements réels, partagés)
# -----------------------------------------------------------------------------

@pytest.fixture(scope="session")
def learnable_family() -> FamilySpec:
    """a et b proches, c sans aucun mot commun avec les deux autres."""
    return FamilySpec(
        languages=["a", "b", "c"],
        vocab_size=200,
        relatedness={"a-b": 0.8},
        default_relatedness=0.0,
        marker_count=20,
        marker_density=0.3,
        min_length=8,
        max_length=15,
        train_size=400,
        validation_size=50,
        test_size=100,
        seed=11,
    )


@pytest.fixture(scope="session")
def learnable_corpus(learnable_family):
    return gen_family(learnable_family)


@pytest.fixture(scope="session")
def calibration_model() -> TextClassifier:
    return TextClassifier(HashingFeaturizer(FeaturizerConfig(n_features=4096)), hidden_size=16)


@pytest.fixture(scope="session")
def source_base(calibration_model, learnable_corpus):
    """Modèle de base entraîné sur la seule langue a."""
    return train_base(
        calibration_model, calibration_model.init_params(0), learnable_corpus.select("a", Split.TRAIN),
        TrainingConfig(epochs=30, lr=0.5, batch_size=16), seed=0,
    )


@pytest.fixture(scope="session")
def pooled_model(calibration_model, learnable_corpus, source_base):
    """Fine-tuning standard sur l'union des trains des trois langues."""
    pooled = [sample for language in ("a", "b", "c") for sample in learnable_corpus.select(language, Split.TRAIN)]
    return finetune(calibration_model, source_base, pooled, TrainingConfig(epochs=10, lr=0.5, batch_size=16), seed=0)
