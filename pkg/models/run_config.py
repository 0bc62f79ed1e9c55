"""
Configuration d'une exécution (fichier JSON/TOML unique validé par pydantic).

Toutes les valeurs par défaut vivent ici, dans les déclarations de champs.
"""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.synthetic_family import FamilySpec


AUXILIARY_MISSING_MESSAGE = (
    "meta-learning experiments are impossible due to the unavailability of the required auxiliary language"
)


# =============================================================================
# ENUMS
# =============================================================================

class Variant(str, Enum):
    """Méthodes d'entraînement comparées."""
    MAML = "maml"
    HATEMAML = "hatemaml"
    XMAML = "xmaml"
    FINETUNE = "finetune"


class TrainingChoice(str, Enum):
    """Branche de l'algorithme: sans (zero-shot) ou avec (few-shot) données cible."""
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"


class GradAggregation(str, Enum):
    SUM = "sum"
    MEAN = "mean"


class DomainPoolPolicy(str, Enum):
    """Origine du domain-query set Q′."""
    NON_SOURCE = "non_source"
    POOLED = "pooled"


class ExperimentKind(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    DOMAIN_ADAPTATION = "domain_adaptation"
    FULL = "full"


# =============================================================================
# SECTIONS
# =============================================================================

class FeaturizerConfig(BaseModel):
    """Hachage signé des unigrammes de mots et n-grammes de caractères."""

    model_config = ConfigDict(frozen=True)

    n_features: int = Field(32768, ge=2, description="Dimension F de l'espace haché")
    hash_seed: int = Field(0, ge=0, description="Graine préfixée à chaque trait avant hachage")
    word_ngram_range: Tuple[int, int] = Field((1, 1), description="n-grammes de mots")
    char_ngram_range: Tuple[int, int] = Field((3, 5), description="n-grammes de caractères")
    lowercase: bool = True
    norm: Literal["l2", "none"] = Field("l2", description="Normalisation des lignes")


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_size: int = Field(64, ge=1, description="Taille H des couches cachées")


class TrainingConfig(BaseModel):
    """Descente de gradient par mini-batch (modèle de base, fine-tuning)."""

    epochs: int = Field(10, ge=0)
    lr: float = Field(0.1, gt=0.0)
    batch_size: int = Field(32, ge=1)


class MetaConfig(BaseModel):
    """Hyperparamètres de la méta-optimisation."""

    alpha: float = Field(1e-2, gt=0.0, description="Pas interne (fast lr)")
    beta: float = Field(1e-3, gt=0.0, description="Pas du méta-apprenant (meta lr)")
    inner_steps: int = Field(1, ge=1)
    tasks_per_batch: int = Field(4, ge=1, description="m tâches par méta-étape")
    max_meta_steps: int = Field(200, ge=0, description="Nombre de méta-mises à jour, chacune sur un lot de m tâches (pas un nombre d'épisodes)")
    variant: Variant = Variant.HATEMAML
    training_choice: TrainingChoice = TrainingChoice.ZERO_SHOT
    grad_aggregation: GradAggregation = GradAggregation.SUM
    domain_weight: float = Field(0.5, ge=0.0, le=1.0, description="Poids de L_Q′ dans la perte combinée")
    seed: int = 0
    n_jobs: int = Field(1, ge=1, description="Tâches évaluées en parallèle (threads)")

    def digest(self) -> str:
        return _digest(self.model_dump(mode="json"))


class EpisodeConfig(BaseModel):
    k_shot: int = Field(32, ge=1, description="K exemples de support")
    l_shot: int = Field(32, ge=1, description="L exemples de query (et de domain query)")
    domain_pool: DomainPoolPolicy = DomainPoolPolicy.NON_SOURCE
    seed: int = 0


class SelfTrainConfig(BaseModel):
    threshold: float = Field(0.7, gt=0.5, le=1.0, description="Seuil de confiance τ")
    cap: int = Field(300, ge=2, description="Taille max du silver set par itération")
    iterations: int = Field(5, ge=1, description="N itérations de raffinement")
    include_source_gold: bool = True
    meta: Optional[MetaConfig] = Field(None, description="Méta-config des exécutions internes (défaut: section meta)")
    seed: int = 0


class LanguageSelection(BaseModel):
    source: Optional[str] = Field("en", description="Langue source (modèle de base)")
    auxiliary: List[str] = Field(default_factory=list)
    target: List[str] = Field(default_factory=list)
    training_languages: List[str] = Field(default_factory=list, description="domain_adaptation / full")
    eval_languages: List[str] = Field(default_factory=list, description="Vide = langues cibles ou toutes")


# =============================================================================
# CONFIG COMPLÈTE
# =============================================================================

class RunConfig(BaseModel):
    """Configuration complète d'une expérience."""

    experiment: ExperimentKind = ExperimentKind.ZERO_SHOT
    experiment_name: Optional[str] = None
    variant: Variant = Variant.HATEMAML
    languages: LanguageSelection = Field(default_factory=LanguageSelection)
    per_language_caps: List[Optional[int]] = Field(default_factory=lambda: [None])

    corpus_path: Optional[Path] = None
    corpus_format: Optional[Literal["jsonl", "csv", "tsv"]] = None

    featurizer: FeaturizerConfig = Field(default_factory=FeaturizerConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    base: TrainingConfig = Field(default_factory=TrainingConfig)
    finetune: TrainingConfig = Field(default_factory=lambda: TrainingConfig(epochs=5))
    meta: MetaConfig = Field(default_factory=MetaConfig)
    episodes: EpisodeConfig = Field(default_factory=EpisodeConfig)
    self_train: SelfTrainConfig = Field(default_factory=SelfTrainConfig)
    synth: Optional[FamilySpec] = None

    seeds: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5], min_length=1)
    output_dir: Optional[Path] = None
    base_model_dir: Optional[Path] = Field(None, description="Modèles de base par graine (défaut: <output_dir>/base)")
    n_jobs: int = Field(1, ge=1, description="Graines exécutées en parallèle")

    @property
    def name(self) -> str:
        return self.experiment_name or self.experiment.value

    def digest(self) -> str:
        return _digest(self.model_dump(mode="json", exclude={"output_dir", "base_model_dir", "seeds", "n_jobs"}))

    @model_validator(mode="after")
    def check_selection(self) -> "RunConfig":
        langs = self.languages
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        for cap in self.per_language_caps:
            if cap is not None and cap < 1:
                raise ValueError(f"per-language cap must be >= 1 or null, got {cap}")

        if self.experiment == ExperimentKind.ZERO_SHOT:
            if not langs.source:
                raise ValueError("zero_shot experiments require a source language")
            if not langs.target:
                raise ValueError("zero_shot experiments require at least one target language")
            if not langs.auxiliary:
                raise ValueError(AUXILIARY_MISSING_MESSAGE)
            if self.variant == Variant.XMAML and len(langs.auxiliary) != 1:
                raise ValueError("xmaml considers exactly one auxiliary language")
            overlap = set(langs.auxiliary) & set(langs.target)
            if overlap:
                raise ValueError(f"auxiliary and target languages overlap: {sorted(overlap)}")

        elif self.experiment == ExperimentKind.FEW_SHOT:
            if not langs.target:
                raise ValueError("few_shot experiments require at least one target language")
            if self.variant == Variant.XMAML:
                raise ValueError("xmaml is a zero-shot baseline; use experiment zero_shot")

        else:
            if self.variant == Variant.XMAML:
                raise ValueError(f"xmaml needs a single auxiliary language and cannot run '{self.experiment.value}'")
            if self.experiment == ExperimentKind.DOMAIN_ADAPTATION:
                if not langs.training_languages:
                    raise ValueError("domain_adaptation requires training_languages")
                if langs.eval_languages and not set(langs.eval_languages) - set(langs.training_languages):
                    raise ValueError("domain_adaptation requires a held-out evaluation language outside training_languages")
        return self


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
