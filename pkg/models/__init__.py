"""
Package des modèles de données HateMAML-lab.
Contient les schémas Pydantic: corpus, configuration d'exécution, rapports, familles synthétiques.
"""

from models.corpus_records import (
    CORPUS_FIELDS,
    Sample,
    Split,
    UnlabeledSample,
)
from models.reports import EvalReport, LanguageScore, Provenance
from models.run_config import (
    DomainPoolPolicy,
    EpisodeConfig,
    ExperimentKind,
    FeaturizerConfig,
    GradAggregation,
    LanguageSelection,
    MetaConfig,
    ModelConfig,
    RunConfig,
    SelfTrainConfig,
    TrainingChoice,
    TrainingConfig,
    Variant,
)
from models.synthetic_family import FamilySpec

__all__ = [
    "CORPUS_FIELDS",
    "Sample",
    "Split",
    "UnlabeledSample",
    "EvalReport",
    "LanguageScore",
    "Provenance",
    "DomainPoolPolicy",
    "EpisodeConfig",
    "ExperimentKind",
    "FeaturizerConfig",
    "GradAggregation",
    "LanguageSelection",
    "MetaConfig",
    "ModelConfig",
    "RunConfig",
    "SelfTrainConfig",
    "TrainingChoice",
    "TrainingConfig",
    "Variant",
    "FamilySpec",
]
