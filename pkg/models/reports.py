"""
Schémas de provenance des modèles et des rapports d'évaluation.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from models.run_config import FeaturizerConfig


class Provenance(BaseModel):
    """Tout ce qu'il faut pour rejouer un entraînement à l'identique."""

    variant: str = Field(..., description="base | maml | hatemaml | xmaml | finetune | self_training")
    seed: int
    config_digest: str
    data_digest: str
    params_digest: str
    base_digest: Optional[str] = Field(None, description="Empreinte des paramètres de départ")
    featurizer: Optional[FeaturizerConfig] = None
    hidden_size: Optional[int] = None
    iteration: Optional[int] = Field(None, description="Itération d'auto-apprentissage")
    steps: int = Field(0, ge=0, description="Mises à jour effectuées")


class LanguageScore(BaseModel):
    mean: float = Field(..., ge=0.0, le=1.0)
    std: float = Field(0.0, ge=0.0)
    n_seeds: int = Field(..., ge=1)


class EvalReport(BaseModel):
    """Macro-F1 moyen et écart-type par langue sur plusieurs graines."""

    experiment: str
    variant: str
    scores: Dict[str, LanguageScore] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    single_seed: bool = False
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_single_seed(self) -> "EvalReport":
        if self.single_seed and any(score.std != 0.0 for score in self.scores.values()):
            raise ValueError("single-seed reports must carry std = 0")
        return self

    def average(self) -> Optional[float]:
        """Moyenne non pondérée sur les langues (colonne AVG)."""
        if not self.scores:
            return None
        return sum(score.mean for score in self.scores.values()) / len(self.scores)
