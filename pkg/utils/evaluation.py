"""
Évaluation: macro-F1, exécution multi-graines et tableaux de rapport
(lignes = variantes, colonnes = langues + AVG, cellules moyenne±écart-type).
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import precision_recall_fscore_support

from models.reports import EvalReport, LanguageScore
from utils.errors import CorpusError, SeedRunError
from utils.jsonUtils import JsonUtils


logger = logging.getLogger(__name__)

LABELS = (0, 1)
REPORT_FORMATS = ("csv", "markdown")


# =============================================================================
# MÉTRIQUE
# =============================================================================

def macro_f1(predictions: Sequence[int], golds: Sequence[int]) -> float:
    """
    Moyenne des F1 par classe sur {0, 1}; F1 = 0 quand P + R = 0.
    Une classe absente des prédictions et des golds compte 0 (avec un warning).
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if predictions.shape != golds.shape:
        raise ValueError(f"length mismatch: {predictions.size} predictions for {golds.size} gold labels")
    if predictions.size == 0:
        raise ValueError("macro_f1 needs at least one prediction")
    for label in LABELS:
        if not np.any(predictions == label) and not np.any(golds == label):
            logger.warning(f"[Evaluation] class {label} absent from predictions and golds; its F1 counts as 0")
    _, _, f1, _ = precision_recall_fscore_support(
        golds, predictions, labels=list(LABELS), average=None, zero_division=0
    )
    return float(np.mean(f1))


def evaluate_languages(model, params, corpus, languages: Iterable[str], split="test") -> Dict[str, float]:
    """Macro-F1 par langue sur un split (le test n'est lu qu'ici)."""
    scores: Dict[str, float] = {}
    for language in languages:
        samples = corpus.select(language, split)
        if not samples:
            raise CorpusError(f"language '{language}' has no '{split}' split to evaluate on")
        predicted, _ = model.predict_samples(params, samples)
        scores[language] = macro_f1(predicted, [sample.label for sample in samples])
    return scores


# =============================================================================
# MULTI-GRAINES
# =============================================================================

def _guarded(run_fn: Callable[[int], Mapping[str, float]], seed: int) -> Dict[str, float]:
    try:
        return dict(run_fn(seed))
    except SeedRunError:
        raise
    except Exception as exc:
        raise SeedRunError(seed, exc) from exc


def aggregate_scores(
    experiment: str,
    variant: str,
    per_seed: Mapping[int, Mapping[str, float]],
    seeds: Optional[Sequence[int]] = None,
    metadata: Optional[Dict] = None,
) -> EvalReport:
    """
    Moyenne et écart-type échantillon (n - 1) par langue.

    Les valeurs sont triées avant agrégation: le résultat ne dépend pas
    de l'ordre des graines.
    """
    seeds = list(seeds) if seeds is not None else sorted(per_seed)
    values: Dict[str, List[float]] = {}
    for seed in seeds:
        for language, score in per_seed[seed].items():
            values.setdefault(language, []).append(float(score))

    scores: Dict[str, LanguageScore] = {}
    for language in sorted(values):
        ordered = sorted(values[language])
        mean = math.fsum(ordered) / len(ordered)
        std = 0.0 if ordered[0] == ordered[-1] else float(np.std(ordered, ddof=1))
        scores[language] = LanguageScore(mean=min(max(mean, 0.0), 1.0), std=std, n_seeds=len(ordered))
    return EvalReport(
        experiment=experiment,
        variant=variant,
        scores=scores,
        seeds=seeds,
        single_seed=len(seeds) == 1,
        metadata=dict(metadata or {}),
    )


def metrics_records(experiment: str, variant: str, per_seed: Mapping[int, Mapping[str, float]], seeds: Sequence[int]) -> List[Dict]:
    return [
        {"experiment": experiment, "variant": variant, "seed": seed, "language": language, "macro_f1": per_seed[seed][language]}
        for seed in seeds
        for language in sorted(per_seed[seed])
    ]


def run_multi_seed(
    run_fn: Callable[[int], Mapping[str, float]],
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
    experiment: str = "experiment",
    variant: str = "hatemaml",
    n_jobs: int = 1,
    metrics_path: Optional[Union[str, Path]] = None,
    metadata: Optional[Dict] = None,
) -> EvalReport:
    """
    Exécute `run_fn(seed) -> {langue: macro-F1}` pour chaque graine puis agrège.

    Les graines peuvent tourner en parallèle (joblib); la réduction se fait
    dans l'ordre des graines. Toute erreur est renvoyée comme SeedRunError.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    if n_jobs > 1 and len(seeds) > 1:
        results = Parallel(n_jobs=n_jobs)(delayed(_guarded)(run_fn, seed) for seed in seeds)
    else:
        results = [_guarded(run_fn, seed) for seed in seeds]
    per_seed = dict(zip(seeds, results))

    if metrics_path is not None:
        JsonUtils(metrics_path).write_records(metrics_records(experiment, variant, per_seed, seeds))
    report = aggregate_scores(experiment, variant, per_seed, seeds, metadata)
    logger.info(
        f"[Evaluation] {experiment}/{variant} over {len(seeds)} seed(s): "
        + ", ".join(f"{lang} {score.mean:.3f}" for lang, score in report.scores.items())
    )
    return report


def reports_from_metrics(records: Iterable[Mapping]) -> List[EvalReport]:
    """Regroupe des enregistrements de métriques par (expérience, variante)."""
    grouped: Dict[tuple, Dict[int, Dict[str, float]]] = {}
    for record in records:
        key = (record["experiment"], record["variant"])
        grouped.setdefault(key, {}).setdefault(int(record["seed"]), {})[record["language"]] = float(record["macro_f1"])
    return [aggregate_scores(experiment, variant, per_seed) for (experiment, variant), per_seed in sorted(grouped.items())]


# =============================================================================
# RENDU
# =============================================================================

def format_cell(score: LanguageScore) -> str:
    return f"{score.mean:.3f}±{score.std:.3f}"


def report_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    languages = sorted({language for report in reports for language in report.scores})
    columns = ["experiment", "variant", *languages, "AVG"]
    rows = []
    for report in reports:
        row = {"experiment": report.experiment, "variant": report.variant}
        for language in languages:
            score = report.scores.get(language)
            row[language] = format_cell(score) if score is not None else ""
        average = report.average()
        row["AVG"] = f"{average:.3f}" if average is not None else ""
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def render_frame(frame: pd.DataFrame, fmt: str) -> str:
    if fmt == "csv":
        return frame.to_csv(index=False, lineterminator="\n")
    if fmt == "markdown":
        return frame.to_markdown(index=False, disable_numparse=True) + "\n"
    raise ValueError(f"unknown report format '{fmt}' (expected one of {', '.join(REPORT_FORMATS)})")


def render_report(reports: Sequence[EvalReport], fmt: str = "markdown") -> str:
    """Tableau déterministe: experiment, variant, langues triées, AVG."""
    return render_frame(report_frame(reports), fmt)


def render_matrix(matrix: Mapping[str, Mapping[str, LanguageScore]], fmt: str = "markdown") -> str:
    """Matrice de transfert: lignes = langue auxiliaire, colonnes = langue cible."""
    targets = sorted({target for row in matrix.values() for target in row})
    rows = []
    for auxiliary in sorted(matrix):
        row = {"auxiliary": auxiliary}
        for target in targets:
            score = matrix[auxiliary].get(target)
            row[target] = format_cell(score) if score is not None else ""
        rows.append(row)
    return render_frame(pd.DataFrame(rows, columns=["auxiliary", *targets]), fmt)


def write_reports(reports: Sequence[EvalReport], directory: Union[str, Path], stem: str = "report") -> Dict[str, Path]:
    """report.csv, report.md et reports.jsonl dans `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"csv": directory / f"{stem}.csv", "markdown": directory / f"{stem}.md"}
    for fmt, path in paths.items():
        path.write_text(render_report(reports, fmt), encoding="utf-8")
    paths["jsonl"] = directory / f"{stem}s.jsonl"
    JsonUtils(paths["jsonl"]).write_records(report.model_dump(mode="json") for report in reports)
    return paths
