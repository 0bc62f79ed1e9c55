"""
Spécification d'une famille de langues synthétiques.

La parenté ρ entre deux langues est la fraction de vocabulaire partagé.
Elle doit être ultramétrique (ρ(a,c) >= min(ρ(a,b), ρ(b,c))) pour être
réalisable exactement par des classes de cognats.
"""

from itertools import combinations, permutations
from typing import Dict, List

from pydantic import BaseModel, Field, model_validator


class FamilySpec(BaseModel):
    """Paramètres du générateur de corpus synthétiques."""

    languages: List[str] = Field(..., min_length=1, description="Codes langue")
    vocab_size: int = Field(2000, ge=10, description="Taille V du vocabulaire de chaque langue")
    relatedness: Dict[str, float] = Field(
        default_factory=dict, description="ρ par paire, clés 'a-b'"
    )
    default_relatedness: float = Field(0.0, description="ρ des paires non listées")

    # Modèle de signal
    marker_count: int = Field(40, ge=1, description="Nombre de concepts marqueurs de haine")
    marker_density: float = Field(0.15, ge=0.0, le=1.0, description="Fraction de marqueurs dans un texte haineux")
    marker_threshold: int = Field(0, ge=0, description="label 1 ssi nb marqueurs > seuil")
    noise_rate: float = Field(0.0, description="Taux d'inversion des labels, dans [0, 0.5)")
    positive_rate: float = Field(0.5, gt=0.0, lt=1.0, description="Proportion visée de textes haineux")
    min_length: int = Field(10, ge=1)
    max_length: int = Field(30, ge=1)

    # Tailles par langue et par split
    train_size: int = Field(3000, ge=0)
    validation_size: int = Field(500, ge=0)
    test_size: int = Field(500, ge=0)

    seed: int = Field(0, description="Graine de la famille")

    def relatedness_of(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        for key in (f"{a}-{b}", f"{b}-{a}"):
            if key in self.relatedness:
                return self.relatedness[key]
        return self.default_relatedness

    def relatedness_matrix(self) -> Dict[str, Dict[str, float]]:
        return {a: {b: self.relatedness_of(a, b) for b in self.languages} for a in self.languages}

    @model_validator(mode="after")
    def check_consistency(self) -> "FamilySpec":
        """Rassemble toutes les violations avant de lever l'erreur."""
        issues: List[str] = []

        if len(set(self.languages)) != len(self.languages):
            issues.append("languages must be unique")
        if any(code != code.strip().lower() or not code.strip() for code in self.languages):
            issues.append("language codes must be non-empty lowercase")
        if not 0.0 <= self.noise_rate < 0.5:
            issues.append(f"noise_rate must lie in [0, 0.5), got {self.noise_rate}")
        if not 0.0 <= self.default_relatedness <= 1.0:
            issues.append(f"default_relatedness must lie in [0, 1], got {self.default_relatedness}")
        if self.marker_count >= self.vocab_size:
            issues.append("marker tokens must be a strict subset of the vocabulary (marker_count < vocab_size)")
        if self.min_length > self.max_length:
            issues.append(f"min_length {self.min_length} exceeds max_length {self.max_length}")
        if self.marker_threshold >= self.min_length:
            issues.append("marker_threshold must be smaller than min_length so both labels are reachable")

        known = set(self.languages)
        for key, rho in self.relatedness.items():
            parts = key.split("-")
            if len(parts) != 2 or parts[0] == parts[1]:
                issues.append(f"relatedness key '{key}' must name two distinct languages as 'a-b'")
                continue
            unknown = [p for p in parts if p not in known]
            if unknown:
                issues.append(f"relatedness key '{key}' names unknown language(s) {unknown}")
            if not 0.0 <= rho <= 1.0:
                issues.append(f"relatedness '{key}' must lie in [0, 1], got {rho}")

        if not issues:
            for a, b, c in permutations(self.languages, 3):
                ab, bc, ac = self.relatedness_of(a, b), self.relatedness_of(b, c), self.relatedness_of(a, c)
                if ac < min(ab, bc):
                    issues.append(
                        f"relatedness is not ultrametric: rho({a},{c})={ac} < min(rho({a},{b})={ab}, rho({b},{c})={bc})"
                    )
                    break

        if issues:
            raise ValueError("; ".join(issues))
        return self

    @classmethod
    def default(cls, seed: int = 0, **overrides) -> "FamilySpec":
        """
        Famille par défaut de huit langues en arbre:
        groupe germanique {en, da, de}, roman {es, it}, groupe tenu à l'écart {ar, tr, hi}.
        """
        germanic, romance, held_out = ["en", "da", "de"], ["es", "it"], ["ar", "tr", "hi"]
        relatedness: Dict[str, float] = {}
        for group, rho in ((germanic, 0.6), (romance, 0.6), (held_out, 0.7)):
            for a, b in combinations(group, 2):
                relatedness[f"{a}-{b}"] = rho
        for a in germanic:
            for b in romance:
                relatedness[f"{a}-{b}"] = 0.3
        params = dict(
            languages=germanic + romance + held_out,
            relatedness=relatedness,
            default_relatedness=0.1,
            seed=seed,
        )
        params.update(overrides)
        return cls(**params)
