"""
Hiérarchie d'exceptions de HateMAML-lab.

Chaque erreur porte le code de sortie utilisé par la CLI
(2 = configuration, 3 = données, 4 = exécution / numérique).
Les erreurs à arguments supplémentaires définissent __reduce__ pour
traverser les workers joblib.
"""

from typing import Dict, Optional


class HateMamlError(Exception):
    """Erreur générique du projet."""
    exit_code: int = 4


class ConfigurationError(HateMamlError):
    """Configuration requise absente ou invalide."""
    exit_code = 2


class CorpusError(HateMamlError):
    """Erreur de lecture ou de validation d'un corpus."""
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.raw_message = message
        if line is not None:
            location = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{location}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column

    def __reduce__(self):
        return (type(self), (self.raw_message, self.line, self.column))


class EpisodeError(HateMamlError):
    """Pas assez d'échantillons pour construire les épisodes."""
    exit_code = 3


class SilverLabelError(HateMamlError):
    """Aucun label silver ne survit au filtrage par confiance."""
    exit_code = 3

    def __init__(
        self,
        message: str,
        survivors: Optional[Dict[int, int]] = None,
        completed_iterations: Optional[int] = None,
    ):
        super().__init__(message)
        self.survivors = dict(survivors or {})
        self.completed_iterations = completed_iterations

    def __reduce__(self):
        return (type(self), (str(self), self.survivors, self.completed_iterations))


class StructuralError(HateMamlError):
    """Incompatibilité de noms ou de formes entre tenseurs / ParamSets."""
    exit_code = 4


class NumericError(HateMamlError):
    """Perte ou gradient non fini."""
    exit_code = 4


class SeedRunError(HateMamlError):
    """Échec d'une exécution pour une graine donnée."""

    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"run failed for seed {seed}: {cause}")
        self.seed = seed
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)

    def __reduce__(self):
        return (type(self), (self.seed, self.cause))


class ArtifactError(HateMamlError):
    """Fichier modèle absent ou illisible (modèle de base non entraîné, etc.)."""
    exit_code = 3
