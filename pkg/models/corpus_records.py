"""
Schémas des enregistrements de corpus multilingues.

Un Sample est un texte étiqueté (0 = non haineux, 1 = haineux) avec sa
langue et son split. Les pools non étiquetés utilisés en auto-apprentissage
sont des UnlabeledSample: ils ne portent aucun champ label.
"""

from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field, field_validator


# =============================================================================
# ENUMS
# =============================================================================

class Split(str, Enum):
    """Splits d'un corpus."""
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


# =============================================================================
# ENREGISTREMENTS
# =============================================================================

class UnlabeledSample(BaseModel):
    """Texte sans étiquette (pool cible de l'auto-apprentissage)."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    id: str = Field(..., min_length=1, description="Identifiant unique dans le corpus")
    text: str = Field(..., description="Texte brut")
    language: str = Field(..., min_length=1, description="Code langue ISO-639-1 en minuscules")

    @field_validator("language")
    @classmethod
    def normalize_language(cls, v: str) -> str:
        v = v.strip().lower()
        if not v:
            raise ValueError("language must be non-empty")
        return v


class Sample(UnlabeledSample):
    """Texte étiqueté d'un corpus."""

    label: int = Field(..., ge=0, le=1, description="0 = non haineux, 1 = haineux")
    split: Split = Field(..., description="train | validation | test")

    def to_record(self) -> Dict[str, Any]:
        """Dictionnaire plat, ordre de colonnes stable."""
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "language": self.language,
            "split": self.split.value,
        }

    def unlabeled(self) -> UnlabeledSample:
        return UnlabeledSample(id=self.id, text=self.text, language=self.language)


CORPUS_FIELDS = ("id", "text", "label", "language", "split")
