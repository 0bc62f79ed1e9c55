"""
Orchestration des expériences (partagée par la CLI).

Une expérience = une fonction par graine qui entraîne puis évalue, passée
à run_multi_seed. Les sorties vivent sous output_dir:

    base/seed_<s>/                 modèle de base (params.txt + provenance.json)
    seed_<s>/<expérience>/          modèle final, journal d'entraînement, épisodes, audits
    metrics/<exp>__<var>.metrics.jsonl
    report.csv / report.md / reports.jsonl
    run.json                        provenance de l'exécution
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from models.corpus_records import Split
from models.reports import EvalReport, LanguageScore
from models.run_config import (
    EpisodeConfig,
    ExperimentKind,
    MetaConfig,
    RunConfig,
    TrainingChoice,
    Variant,
)
from utils.corpus import Corpus, assemble_training_data, cap, load, unlabeled_pool
from utils.errors import ConfigurationError, CorpusError
from utils.evaluation import (
    evaluate_languages,
    macro_f1,
    render_matrix,
    render_report,
    reports_from_metrics,
    run_multi_seed,
    write_reports,
)
from utils.jsonUtils import JsonUtils
from utils.meta_trainer import (
    TrainedModel,
    config_digest,
    finetune,
    load_model,
    run_algorithm1,
    save_model,
    train_base,
)
from utils.self_training import self_train_loop
from utils.synth_bench import gen_family, write_family
from utils.text_model import TextClassifier


logger = logging.getLogger(__name__)

METRICS_DIR = "metrics"
METRICS_SUFFIX = ".metrics.jsonl"


@dataclass
class Experiment:
    """Configuration validée + corpus + modèle, partagés par toutes les graines."""
    config: RunConfig
    corpus: Corpus
    model: TextClassifier

    @property
    def output_dir(self) -> Path:
        return Path(self.config.output_dir or "runs")

    @property
    def base_dir(self) -> Path:
        return Path(self.config.base_model_dir) if self.config.base_model_dir else self.output_dir / "base"

    def seed_dir(self, seed: int, name: str) -> Path:
        return self.output_dir / f"seed_{seed}" / name

    def metrics_path(self, experiment: str, variant: str) -> Path:
        return self.output_dir / METRICS_DIR / f"{experiment}__{variant}{METRICS_SUFFIX}"


# =============================================================================
# PRÉPARATION
# =============================================================================

def prepare_corpus(run_config: RunConfig) -> Corpus:
    if run_config.corpus_path is not None:
        return load(run_config.corpus_path, run_config.corpus_format)
    if run_config.synth is not None:
        return gen_family(run_config.synth, n_jobs=run_config.n_jobs)
    raise ConfigurationError("corpus_path: either corpus_path or a synth section is required")


def prepare(run_config: RunConfig, corpus: Optional[Corpus] = None) -> Experiment:
    corpus = corpus if corpus is not None else prepare_corpus(run_config)
    model = TextClassifier.from_config(run_config.featurizer, run_config.model)
    return Experiment(run_config, corpus, model)


def write_run_record(experiment: Experiment, command: str) -> Path:
    """Provenance de l'exécution: config, empreintes, graines."""
    path = experiment.output_dir / "run.json"
    JsonUtils(path).write_document({
        "command": command,
        "config": experiment.config.model_dump(mode="json"),
        "config_digest": experiment.config.digest(),
        "corpus_digest": experiment.corpus.digest(),
        "seeds": experiment.config.seeds,
    })
    return path


def seeded_configs(run_config: RunConfig, seed: int, choice: TrainingChoice) -> Tuple[MetaConfig, EpisodeConfig]:
    """La graine d'exécution pilote l'initialisation, les mélanges et les épisodes."""
    meta = run_config.meta.model_copy(update={
        "seed": seed,
        "variant": run_config.variant,
        "training_choice": choice,
    })
    episodes = run_config.episodes.model_copy(update={"seed": seed})
    return meta, episodes


def _require_language(corpus: Corpus, language: str, split: Split, role: str) -> None:
    if language not in corpus.languages:
        raise CorpusError(f"{role} language '{language}' not found in corpus (available: {', '.join(corpus.languages)})")
    if not corpus.has(language, split):
        raise CorpusError(f"{role} language '{language}' has no '{split.value}' split")


def load_base_model(experiment: Experiment, seed: int) -> TrainedModel:
    base = load_model(experiment.base_dir / f"seed_{seed}")
    provenance = base.provenance
    if provenance.featurizer != experiment.config.featurizer or provenance.hidden_size != experiment.config.model.hidden_size:
        raise ConfigurationError(
            f"base model in {experiment.base_dir} was trained with a different featurizer/model configuration"
        )
    return base


def eval_languages(experiment: Experiment, default: Sequence[str]) -> List[str]:
    languages = list(experiment.config.languages.eval_languages or default)
    for language in languages:
        _require_language(experiment.corpus, language, Split.TEST, "evaluation")
    return languages


def _finish(experiment: Experiment, reports: List[EvalReport], command: str) -> List[EvalReport]:
    write_reports(reports, experiment.output_dir)
    write_run_record(experiment, command)
    return reports


# =============================================================================
# TRAIN-BASE
# =============================================================================

def train_base_for_seed(experiment: Experiment, seed: int) -> TrainedModel:
    run_config = experiment.config
    source = run_config.languages.source
    if not source:
        raise ConfigurationError("languages.source: a source language is required to train the base model")
    _require_language(experiment.corpus, source, Split.TRAIN, "source")
    train = experiment.corpus.select(source, Split.TRAIN)
    init = experiment.model.init_params(seed)
    digest = config_digest(run_config.featurizer, run_config.model, run_config.base)
    return train_base(experiment.model, init, train, run_config.base, seed=seed, digest_of_config=digest)


def run_train_base(experiment: Experiment) -> List[EvalReport]:
    """Entraîne un modèle de base par graine et l'évalue (ligne `base` du zéro-shot)."""
    run_config = experiment.config
    source = run_config.languages.source
    if not source:
        raise ConfigurationError("languages.source: a source language is required to train the base model")
    _require_language(experiment.corpus, source, Split.TRAIN, "source")
    languages = eval_languages(experiment, [source, *[t for t in run_config.languages.target if t != source]])

    def run(seed: int) -> Dict[str, float]:
        trained = train_base_for_seed(experiment, seed)
        save_model(trained, experiment.base_dir / f"seed_{seed}")
        return evaluate_languages(experiment.model, trained.params, experiment.corpus, languages)

    report = run_multi_seed(
        run, run_config.seeds, experiment=run_config.name, variant="base", n_jobs=run_config.n_jobs,
        metrics_path=experiment.metrics_path(run_config.name, "base"),
    )
    return _finish(experiment, [report], "train-base")


# =============================================================================
# META-TRAIN
# =============================================================================

def _train_variant(
    experiment: Experiment,
    base: TrainedModel,
    seed: int,
    choice: TrainingChoice,
    source: Optional[str],
    partners: Sequence[str],
    corpus: Corpus,
    workdir: Path,
) -> TrainedModel:
    run_config = experiment.config
    if run_config.variant == Variant.FINETUNE:
        data = assemble_training_data(corpus, choice, source, partners)
        return finetune(experiment.model, base, list(data.samples), run_config.finetune, seed=seed)
    meta, episodes = seeded_configs(run_config, seed, choice)
    return run_algorithm1(
        experiment.model, base, corpus, meta, episodes, source, partners,
        log_path=workdir / "training_log.jsonl", episodes_path=workdir / "episodes.jsonl",
    )


def _meta_train_cell(
    experiment: Experiment,
    name: str,
    choice: TrainingChoice,
    source: Optional[str],
    partners: Sequence[str],
    languages: Sequence[str],
    per_language_cap: Optional[int] = None,
) -> EvalReport:
    run_config = experiment.config
    variant = run_config.variant.value

    def run(seed: int) -> Dict[str, float]:
        corpus = cap(experiment.corpus, per_language_cap, seed=seed)
        base = load_base_model(experiment, seed)
        workdir = experiment.seed_dir(seed, f"{name}__{variant}")
        trained = _train_variant(experiment, base, seed, choice, source, partners, corpus, workdir)
        save_model(trained, workdir / "model")
        return evaluate_languages(experiment.model, trained.params, experiment.corpus, languages)

    return run_multi_seed(
        run, run_config.seeds, experiment=name, variant=variant, n_jobs=run_config.n_jobs,
        metrics_path=experiment.metrics_path(name, variant),
        metadata={"cap": per_language_cap, "partners": list(partners), "source": source},
    )


def run_meta_train(experiment: Experiment) -> List[EvalReport]:
    """Dispatch selon le type d'expérience et la variante; une ligne de rapport par plafond."""
    run_config = experiment.config
    langs = run_config.languages
    kind = run_config.experiment

    if kind == ExperimentKind.ZERO_SHOT:
        for language in langs.auxiliary:
            _require_language(experiment.corpus, language, Split.TRAIN, "auxiliary")
        reports = [_meta_train_cell(
            experiment, run_config.name, TrainingChoice.ZERO_SHOT, langs.source, langs.auxiliary,
            eval_languages(experiment, langs.target),
        )]
    elif kind == ExperimentKind.FEW_SHOT:
        reports = [_meta_train_cell(
            experiment, run_config.name, TrainingChoice.FEW_SHOT, langs.source, langs.target,
            eval_languages(experiment, langs.target),
        )]
    else:
        if kind == ExperimentKind.DOMAIN_ADAPTATION:
            training = list(langs.training_languages)
        else:
            training = list(langs.training_languages or experiment.corpus.languages)
        for language in training:
            _require_language(experiment.corpus, language, Split.TRAIN, "training")
        evaluation = eval_languages(experiment, experiment.corpus.languages)
        if kind == ExperimentKind.DOMAIN_ADAPTATION and not set(evaluation) - set(training):
            raise ConfigurationError("languages.eval_languages: domain adaptation needs a held-out language to evaluate on")
        reports = []
        for per_language_cap in run_config.per_language_caps:
            suffix = f"cap{per_language_cap}" if per_language_cap is not None else "uncapped"
            reports.append(_meta_train_cell(
                experiment, f"{run_config.name}-{suffix}", TrainingChoice.FEW_SHOT, None, training,
                evaluation, per_language_cap,
            ))
    return _finish(experiment, reports, "meta-train")


# =============================================================================
# SELF-TRAIN
# =============================================================================

def plot_self_training_curve(scores: Sequence[float], language: str, path: Path) -> Path:
    """Macro-F1 de validation cible par itération (0 = modèle de base)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(scores)), scores, marker="o", color="tab:blue", label=f"{language} validation")
    ax.set_xlabel("Itération")
    ax.set_ylabel("Macro-F1")
    ax.set_title(f"Auto-apprentissage ({language})")
    ax.set_xticks(range(len(scores)))
    ax.grid(True)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def run_self_train(experiment: Experiment) -> List[EvalReport]:
    run_config = experiment.config
    langs = run_config.languages
    corpus = experiment.corpus
    if not langs.target:
        raise ConfigurationError("languages.target: self-training needs at least one target language")
    if run_config.self_train.include_source_gold:
        _require_language(corpus, langs.source, Split.VALIDATION, "source")
    targets = eval_languages(experiment, langs.target)
    variant = "self_training"

    def run(seed: int) -> Dict[str, float]:
        base = load_base_model(experiment, seed)
        meta, episodes = seeded_configs(run_config, seed, TrainingChoice.FEW_SHOT)
        self_config = run_config.self_train.model_copy(update={"seed": seed})
        if self_config.meta is not None:
            self_config = self_config.model_copy(update={"meta": self_config.meta.model_copy(update={"seed": seed})})
        gold = corpus.select(langs.source, Split.VALIDATION) if self_config.include_source_gold else []

        scores: Dict[str, float] = {}
        for target in targets:
            workdir = experiment.seed_dir(seed, f"{run_config.name}__{target}")
            pool = unlabeled_pool(corpus, target, Split.TRAIN)
            validation = corpus.select(target, Split.VALIDATION)
            curve: List[float] = []

            def track(_: int, model: TrainedModel) -> None:
                predicted, _ = experiment.model.predict_samples(model.params, validation)
                curve.append(macro_f1(predicted, [sample.label for sample in validation]))

            if validation:
                track(-1, base)
            result = self_train_loop(
                experiment.model, base, pool, gold, self_config, meta, episodes,
                audit_path=workdir / "audit.jsonl",
                on_iteration=track if validation else None,
            )
            if curve:
                plot_self_training_curve(curve, target, workdir / "self_training_curve.png")
            save_model(result.model, workdir / "model")
            scores.update(evaluate_languages(experiment.model, result.model.params, corpus, [target]))
        return scores

    report = run_multi_seed(
        run, run_config.seeds, experiment=run_config.name, variant=variant, n_jobs=run_config.n_jobs,
        metrics_path=experiment.metrics_path(run_config.name, variant),
        metadata={"include_source_gold": run_config.self_train.include_source_gold},
    )
    return _finish(experiment, [report], "self-train")


# =============================================================================
# TRANSFER MATRIX
# =============================================================================

def run_transfer_matrix(experiment: Experiment) -> Tuple[List[EvalReport], Dict[str, Dict[str, LanguageScore]]]:
    """Méta-entraînement zéro-shot pour chaque couple (auxiliaire, cible)."""
    run_config = experiment.config
    langs = run_config.languages
    if run_config.variant == Variant.FINETUNE:
        raise ConfigurationError("variant: the transfer matrix compares meta-learning variants only")
    reports: List[EvalReport] = []
    matrix: Dict[str, Dict[str, LanguageScore]] = {}
    for auxiliary in langs.auxiliary:
        _require_language(experiment.corpus, auxiliary, Split.TRAIN, "auxiliary")
        targets = [target for target in langs.target if target != auxiliary]
        if not targets:
            continue
        for target in targets:
            _require_language(experiment.corpus, target, Split.TEST, "target")
        report = _meta_train_cell(
            experiment, f"{run_config.name}-aux-{auxiliary}", TrainingChoice.ZERO_SHOT,
            langs.source, [auxiliary], targets,
        )
        reports.append(report)
        matrix[auxiliary] = dict(report.scores)

    _finish(experiment, reports, "transfer-matrix")
    for fmt, suffix in (("csv", "csv"), ("markdown", "md")):
        (experiment.output_dir / f"transfer_matrix.{suffix}").write_text(render_matrix(matrix, fmt), encoding="utf-8")
    return reports, matrix


# =============================================================================
# SYNTH / REPORT
# =============================================================================

def run_synth(run_config: RunConfig) -> Tuple[Path, Path]:
    if run_config.synth is None:
        raise ConfigurationError("synth: a synth section is required to generate a family")
    return write_family(run_config.synth, Path(run_config.output_dir or "runs"), n_jobs=run_config.n_jobs)


def collect_reports(directory: Path) -> List[EvalReport]:
    """Agrège tous les fichiers *.metrics.jsonl trouvés sous `directory`."""
    records: List[Dict] = []
    if directory.exists():
        for path in sorted(directory.rglob(f"*{METRICS_SUFFIX}")):
            records.extend(JsonUtils(path).read_records())
    return reports_from_metrics(records)


def run_report(directory: Path, formats: Sequence[str] = ("csv", "markdown")) -> Dict[str, str]:
    reports = collect_reports(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rendered = {}
    for fmt in formats:
        text = render_report(reports, fmt)
        (directory / f"summary.{'md' if fmt == 'markdown' else fmt}").write_text(text, encoding="utf-8")
        rendered[fmt] = text
    return rendered


COMMANDS: Dict[str, Callable[[Experiment], object]] = {
    "train-base": run_train_base,
    "meta-train": run_meta_train,
    "self-train": run_self_train,
    "transfer-matrix": run_transfer_matrix,
}
