"""
Auto-apprentissage par labels silver.

À chaque itération: prédire sur le pool cible non étiqueté, garder les
prédictions de confiance >= τ, équilibrer les classes prédites, plafonner,
puis méta-entraîner (branche few-shot) sur le silver set (et la validation
source si demandée). Le modèle obtenu remplace la base.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.corpus_records import Sample, Split, UnlabeledSample
from models.run_config import EpisodeConfig, MetaConfig, SelfTrainConfig, TrainingChoice, Variant
from utils.corpus import TrainingData
from utils.errors import CorpusError, SilverLabelError
from utils.jsonUtils import JsonUtils
from utils.meta_trainer import TrainedModel, meta_train


logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class SilverSet:
    """Échantillons pseudo-étiquetés retenus à une itération."""
    samples: Tuple[Sample, ...]
    confidences: Tuple[float, ...]
    iteration: int
    survivors: Dict[int, int] = field(default_factory=dict)
    histogram: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> Dict[int, int]:
        counts = {0: 0, 1: 0}
        for sample in self.samples:
            counts[sample.label] += 1
        return counts


def confidence_histogram(confidences: np.ndarray) -> List[int]:
    """Effectifs des confiances par décile de [0.5, 1.0]."""
    counts, _ = np.histogram(confidences, bins=HISTOGRAM_BINS, range=(0.5, 1.0))
    return counts.tolist()


def generate_silver(
    model,
    params,
    pool: Sequence[UnlabeledSample],
    config: SelfTrainConfig,
    iteration: int = 0,
) -> SilverSet:
    """
    Labels silver: seuil de confiance, équilibrage par sous-échantillonnage
    seedé de la classe majoritaire, puis plafond réparti entre les classes.

    Raises:
        SilverLabelError: aucun survivant dans l'une des classes ("threshold too strict")
    """
    if not pool:
        raise SilverLabelError("unlabeled pool is empty")
    labels, confidences = model.predict_samples(params, pool)
    keep = confidences >= config.threshold
    by_class = {c: np.flatnonzero(keep & (labels == c)) for c in (0, 1)}
    survivors = {c: int(len(indices)) for c, indices in by_class.items()}
    if min(survivors.values()) == 0:
        raise SilverLabelError(
            f"threshold too strict: tau = {config.threshold} leaves survivors per class {survivors}",
            survivors=survivors,
        )

    rng = np.random.default_rng([config.seed, iteration])
    per_class = min(survivors.values())
    quotas = {0: per_class, 1: per_class}
    if 2 * per_class > config.cap:
        quotas = {0: config.cap // 2, 1: config.cap // 2}
        if config.cap % 2:
            quotas[int(rng.integers(2))] += 1

    chosen: List[int] = []
    for c in (0, 1):
        indices = by_class[c]
        if len(indices) > quotas[c]:
            indices = rng.choice(indices, size=quotas[c], replace=False)
        chosen.extend(int(i) for i in indices)
    chosen.sort()

    samples = tuple(
        Sample(id=pool[i].id, text=pool[i].text, language=pool[i].language, label=int(labels[i]), split=Split.TRAIN)
        for i in chosen
    )
    silver = SilverSet(
        samples=samples,
        confidences=tuple(float(confidences[i]) for i in chosen),
        iteration=iteration,
        survivors=survivors,
        histogram=tuple(confidence_histogram(confidences)),
    )
    logger.info(
        f"[SelfTraining] iteration {iteration}: survivors {survivors}, kept {silver.class_counts()} (cap {config.cap})"
    )
    return silver


@dataclass
class SelfTrainingResult:
    model: TrainedModel
    audit: List[Dict[str, Any]]


def _inner_meta_config(config: SelfTrainConfig, meta_config: MetaConfig) -> MetaConfig:
    meta = config.meta or meta_config
    return meta.model_copy(update={"training_choice": TrainingChoice.FEW_SHOT, "variant": Variant.HATEMAML})


def self_train_loop(
    model,
    base: TrainedModel,
    pool: Sequence[UnlabeledSample],
    source_validation: Sequence[Sample],
    config: SelfTrainConfig,
    meta_config: MetaConfig,
    episode_config: EpisodeConfig,
    audit_path: Optional[Union[str, Path]] = None,
    on_iteration: Optional[Callable[[int, TrainedModel], None]] = None,
) -> SelfTrainingResult:
    """
    N itérations silver -> méta-entraînement few-shot -> remplacement de la base.

    Le pool ne porte aucun label: seules les prédictions du modèle courant
    sont utilisées. `on_iteration(i, modèle)` est appelé après chaque itération.

    Raises:
        SilverLabelError: avec le nombre d'itérations terminées
    """
    if not pool:
        raise SilverLabelError("unlabeled pool is empty", completed_iterations=0)
    source_language = None
    if config.include_source_gold:
        if not source_validation:
            raise CorpusError("include_source_gold is set but the source validation set is empty")
        source_language = source_validation[0].language

    inner_meta = _inner_meta_config(config, meta_config)
    current = base
    audit: List[Dict[str, Any]] = []
    for iteration in range(config.iterations):
        try:
            silver = generate_silver(model, current.params, pool, config, iteration)
        except SilverLabelError as exc:
            raise SilverLabelError(
                f"{exc} (self-training aborted after {iteration} completed iteration(s))",
                survivors=exc.survivors,
                completed_iterations=iteration,
            ) from exc

        gold = tuple(source_validation) if config.include_source_gold else ()
        data = TrainingData(
            samples=gold + silver.samples,
            source=source_language,
            partners=tuple(sorted({sample.language for sample in silver.samples})),
            choice=TrainingChoice.FEW_SHOT,
        )
        trained = meta_train(
            model,
            current,
            data,
            inner_meta.model_copy(update={"seed": inner_meta.seed + iteration}),
            episode_config.model_copy(update={"seed": episode_config.seed + iteration}),
            iteration=iteration,
        )
        audit.append({
            "iteration": iteration,
            "survivors": {str(c): n for c, n in silver.survivors.items()},
            "kept": {str(c): n for c, n in silver.class_counts().items()},
            "kept_ids": [sample.id for sample in silver.samples],
            "confidence_histogram": list(silver.histogram),
            "include_source_gold": config.include_source_gold,
            "gold_samples": len(gold),
            "base_digest": current.params.digest(),
            "params_digest": trained.params.digest(),
        })
        current = trained
        if on_iteration is not None:
            on_iteration(iteration, current)

    if audit_path is not None:
        JsonUtils(audit_path).write_records(audit)
    return SelfTrainingResult(current, audit)
