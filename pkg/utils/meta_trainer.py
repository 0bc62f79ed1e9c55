"""
Méta-optimisation du premier ordre (MAML / HateMAML / X-MAML) et
baselines par descente de gradient (modèle de base, fine-tuning).

Boucle interne: θ′ = θ − α ∇L_S(θ), répétée inner_steps fois.
Boucle externe: θ ← θ − β Σ_i g_i, avec g_i le gradient de la perte
de query évaluée en θ′_i (premier ordre, pas de dérivée à travers la
boucle interne). Pour HateMAML, g_i = (1 − w) ∇L_Q + w ∇L_Q′.

Les fonctions sont agnostiques au modèle: il suffit d'exposer
`make_batch(samples)` et `loss(tensors, batch) -> Tensor`.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from models.reports import Provenance
from models.run_config import (
    DomainPoolPolicy,
    EpisodeConfig,
    GradAggregation,
    MetaConfig,
    TrainingConfig,
    Variant,
)
from utils.autodiff import GradSet, ParamSet, Tensor, grad, load_params, save_params, sgd_step
from utils.corpus import Corpus, TrainingData, assemble_training_data, samples_digest
from utils.episodes import Episode, build_episode_stream, dump_episodes, iter_task_batches
from utils.errors import ArtifactError, ConfigurationError, CorpusError, EpisodeError
from utils.jsonUtils import JsonUtils


logger = logging.getLogger(__name__)

PARAMS_FILE = "params.txt"
PROVENANCE_FILE = "provenance.json"


class MetaModel(Protocol):
    def make_batch(self, samples: Sequence) -> Any: ...

    def loss(self, tensors: Dict[str, Tensor], batch: Any) -> Tensor: ...


# =============================================================================
# MODÈLES ENTRAÎNÉS
# =============================================================================

@dataclass(frozen=True)
class TrainedModel:
    params: ParamSet
    provenance: Provenance


def save_model(trained: TrainedModel, directory: Union[str, Path]) -> Path:
    """params.txt (valeurs exactes) + provenance.json."""
    directory = Path(directory)
    save_params(trained.params, directory / PARAMS_FILE)
    JsonUtils(directory / PROVENANCE_FILE).write_document(trained.provenance.model_dump(mode="json"))
    return directory


def load_model(directory: Union[str, Path]) -> TrainedModel:
    directory = Path(directory)
    params_path, provenance_path = directory / PARAMS_FILE, directory / PROVENANCE_FILE
    if not params_path.exists() or not provenance_path.exists():
        raise ArtifactError(f"no trained model in {directory} (expected {PARAMS_FILE} and {PROVENANCE_FILE})")
    params = load_params(params_path)
    provenance = Provenance.model_validate(JsonUtils(provenance_path).read_document())
    if provenance.params_digest != params.digest():
        raise ArtifactError(f"{params_path}: parameters do not match the digest recorded in {PROVENANCE_FILE}")
    return TrainedModel(params, provenance)


def config_digest(*sections: Any) -> str:
    payload = [section.model_dump(mode="json") if hasattr(section, "model_dump") else section for section in sections]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def make_provenance(
    model: MetaModel,
    params: ParamSet,
    variant: str,
    seed: int,
    digest_of_config: str,
    data_digest: str,
    base: Optional[TrainedModel] = None,
    steps: int = 0,
    iteration: Optional[int] = None,
) -> Provenance:
    description = model.describe() if hasattr(model, "describe") else {}
    return Provenance(
        variant=variant,
        seed=seed,
        config_digest=digest_of_config,
        data_digest=data_digest,
        params_digest=params.digest(),
        base_digest=base.params.digest() if base is not None else None,
        featurizer=description.get("featurizer"),
        hidden_size=description.get("hidden_size"),
        iteration=iteration,
        steps=steps,
    )


# =============================================================================
# DESCENTE DE GRADIENT PAR MINI-BATCH
# =============================================================================

def _minibatch_descent(
    model: MetaModel,
    params: ParamSet,
    samples: Sequence,
    config: TrainingConfig,
    seed: int,
    tag: str,
) -> Tuple[ParamSet, int]:
    if len(samples) == 0:
        raise CorpusError(f"{tag}: training set is empty")
    rng = np.random.default_rng(seed)
    steps = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for start in range(0, len(samples), config.batch_size):
            chosen = order[start:start + config.batch_size]
            batch = model.make_batch([samples[i] for i in chosen])
            loss, grads = grad(lambda tensors: model.loss(tensors, batch), params)
            params = sgd_step(params, grads, config.lr)
            total += loss * len(chosen)
            steps += 1
        logger.debug(f"[{tag}] epoch {epoch + 1}/{config.epochs} mean loss {total / len(samples):.4f}")
    return params, steps


def train_base(
    model: MetaModel,
    init_params: ParamSet,
    samples: Sequence,
    config: TrainingConfig,
    seed: int = 0,
    digest_of_config: str = "",
) -> TrainedModel:
    """Modèle de base: descente par mini-batch sur la langue source, mélanges seedés."""
    params, steps = _minibatch_descent(model, init_params, samples, config, seed, "BaseTraining")
    logger.info(f"[BaseTraining] {config.epochs} epochs, {steps} updates on {len(samples)} samples")
    return TrainedModel(
        params,
        make_provenance(model, params, "base", seed, digest_of_config or config_digest(config),
                        samples_digest(samples), steps=steps),
    )


def finetune(
    model: MetaModel,
    base: TrainedModel,
    samples: Sequence,
    config: TrainingConfig,
    seed: int = 0,
    digest_of_config: str = "",
) -> TrainedModel:
    """Baseline de fine-tuning standard à partir du modèle de base."""
    params, steps = _minibatch_descent(model, base.params, samples, config, seed, "FineTune")
    logger.info(f"[FineTune] {config.epochs} epochs, {steps} updates on {len(samples)} samples")
    return TrainedModel(
        params,
        make_provenance(model, params, Variant.FINETUNE.value, seed, digest_of_config or config_digest(config),
                        samples_digest(samples), base=base, steps=steps),
    )


# =============================================================================
# BOUCLES INTERNE / EXTERNE
# =============================================================================

class MetaGradient(NamedTuple):
    grads: GradSet
    query_loss: float
    domain_loss: Optional[float]


def inner_adapt(
    model: MetaModel,
    theta: ParamSet,
    support: Any,
    alpha: float,
    inner_steps: int = 1,
) -> Tuple[ParamSet, float]:
    """
    θ′ après inner_steps pas de gradient plein-lot sur S (θ n'est pas modifié).

    Returns:
        (θ′, perte de support au point de départ)
    """
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    theta_prime = theta
    first_loss = None
    for _ in range(inner_steps):
        loss, grads = grad(lambda tensors: model.loss(tensors, support), theta_prime)
        first_loss = loss if first_loss is None else first_loss
        theta_prime = sgd_step(theta_prime, grads, alpha)
    return theta_prime, first_loss


def task_meta_grad(
    model: MetaModel,
    theta_prime: ParamSet,
    query: Any,
    domain_query: Optional[Any],
    variant: Variant,
    domain_weight: float = 0.5,
) -> MetaGradient:
    """
    Contribution d'une tâche au méta-gradient, évaluée en θ′.

    maml / xmaml: ∇L_Q(θ′). hatemaml: (1 − w)∇L_Q(θ′) + w∇L_Q′(θ′),
    identique à maml quand Q′ = Q et w = 0.5.
    """
    variant = Variant(variant)
    if variant == Variant.FINETUNE:
        raise ConfigurationError("finetune has no meta-gradient")
    query_loss, query_grads = grad(lambda tensors: model.loss(tensors, query), theta_prime)
    if variant != Variant.HATEMAML:
        return MetaGradient(query_grads, query_loss, None)

    if domain_query is None:
        raise EpisodeError("hatemaml requires a domain-query set Q′ for every task")
    domain_loss, domain_grads = grad(lambda tensors: model.loss(tensors, domain_query), theta_prime)
    combined = query_grads.scale(1.0 - domain_weight) + domain_grads.scale(domain_weight)
    return MetaGradient(combined, query_loss, domain_loss)


def _run_task(model: MetaModel, theta: ParamSet, episode: Episode, config: MetaConfig) -> Tuple[MetaGradient, float]:
    support = model.make_batch(episode.support)
    query = model.make_batch(episode.query)
    domain_query = None
    if config.variant == Variant.HATEMAML and episode.domain_query is not None:
        domain_query = model.make_batch(episode.domain_query)
    theta_prime, support_loss = inner_adapt(model, theta, support, config.alpha, config.inner_steps)
    meta = task_meta_grad(model, theta_prime, query, domain_query, config.variant, config.domain_weight)
    return meta, support_loss


def meta_step(
    model: MetaModel,
    theta: ParamSet,
    task_batch: Sequence[Episode],
    config: MetaConfig,
    step: int = 0,
) -> Tuple[ParamSet, Dict[str, Any]]:
    """
    Une méta-mise à jour θ_new = θ − β · agrégat des gradients de tâches.

    Les tâches peuvent être évaluées en parallèle (threads joblib);
    l'agrégation se fait toujours dans l'ordre du lot.

    Returns:
        (θ_new, enregistrement du journal d'entraînement)
    """
    if not task_batch:
        raise EpisodeError("empty task batch")

    if config.n_jobs > 1 and len(task_batch) > 1:
        results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_run_task)(model, theta, episode, config) for episode in task_batch
        )
    else:
        results = [_run_task(model, theta, episode, config) for episode in task_batch]

    aggregate = results[0][0].grads
    for meta, _ in results[1:]:
        aggregate = aggregate + meta.grads
    if config.grad_aggregation == GradAggregation.MEAN:
        aggregate = aggregate.scale(1.0 / len(results))

    theta_new = sgd_step(theta, aggregate, config.beta)
    record = {
        "step": step,
        "grad_norm": aggregate.norm(),
        "tasks": [
            {
                "episode": episode.index,
                "support_loss": support_loss,
                "query_loss": meta.query_loss,
                "domain_loss": meta.domain_loss,
            }
            for episode, (meta, support_loss) in zip(task_batch, results)
        ],
    }
    logger.debug(
        f"[MetaTrainer] step {step}: {len(task_batch)} tasks, "
        f"query loss {np.mean([meta.query_loss for meta, _ in results]):.4f}, grad norm {record['grad_norm']:.4f}"
    )
    return theta_new, record


# =============================================================================
# ORCHESTRATION
# =============================================================================

def meta_train(
    model: MetaModel,
    base: TrainedModel,
    data: TrainingData,
    meta_config: MetaConfig,
    episode_config: EpisodeConfig,
    log_path: Optional[Union[str, Path]] = None,
    iteration: Optional[int] = None,
    episodes_path: Optional[Union[str, Path]] = None,
) -> TrainedModel:
    """
    Méta-entraînement à partir du modèle de base sur des données déjà assemblées.

    Le flux d'épisodes est retiré (graine (seed, passe)) tant que
    max_meta_steps mises à jour (lots de m tâches) n'ont pas été faites.
    `episodes_path` reçoit chaque flux tiré, passe par passe.
    """
    variant = Variant(meta_config.variant)
    if variant == Variant.FINETUNE:
        raise ConfigurationError("finetune is not a meta-learning variant")
    if meta_config.max_meta_steps == 0:
        logger.info("[MetaTrainer] max_meta_steps = 0, returning the base model unchanged")
        return base

    D: List = list(data.samples)
    if variant == Variant.XMAML:
        if len(data.partners) != 1:
            raise ConfigurationError("xmaml considers exactly one auxiliary language")
        D = [sample for sample in D if sample.language == data.partners[0]]

    domain_pool = None
    if variant == Variant.HATEMAML:
        domain_pool = data.domain_pool if episode_config.domain_pool == DomainPoolPolicy.NON_SOURCE else list(D)

    theta = base.params
    records: List[Dict[str, Any]] = []
    steps, pass_index = 0, 0
    while steps < meta_config.max_meta_steps:
        seed = episode_config.seed if pass_index == 0 else [episode_config.seed, pass_index]
        stream = build_episode_stream(D, domain_pool, episode_config, seed=seed)
        if episodes_path is not None:
            dump_episodes(stream, episodes_path, pass_index=pass_index, append=pass_index > 0)
        for task_batch in iter_task_batches(stream, meta_config.tasks_per_batch):
            theta, record = meta_step(model, theta, task_batch, meta_config, step=steps)
            record["pass"] = pass_index
            records.append(record)
            steps += 1
            if steps >= meta_config.max_meta_steps:
                break
        pass_index += 1

    if log_path is not None:
        JsonUtils(log_path).write_records(records)
    logger.info(
        f"[MetaTrainer] {variant.value}: {steps} meta-steps over {pass_index} pass(es), |D| = {len(D)}"
    )
    provenance = make_provenance(
        model, theta, variant.value, meta_config.seed,
        config_digest(meta_config, episode_config), samples_digest(D),
        base=base, steps=steps, iteration=iteration,
    )
    return TrainedModel(theta, provenance)


def run_algorithm1(
    model: MetaModel,
    base: TrainedModel,
    corpus: Corpus,
    meta_config: MetaConfig,
    episode_config: EpisodeConfig,
    source: Optional[str],
    partners: Union[str, Sequence[str]],
    log_path: Optional[Union[str, Path]] = None,
    episodes_path: Optional[Union[str, Path]] = None,
) -> TrainedModel:
    """
    Algorithme complet: θ initialisé depuis la base, données assemblées
    selon training_choice, puis boucle lot de tâches -> mises à jour
    interne / externe. L'évaluation est à la charge de l'appelant.
    """
    if meta_config.max_meta_steps == 0:
        logger.info("[MetaTrainer] max_meta_steps = 0, returning the base model unchanged")
        return base
    data = assemble_training_data(corpus, meta_config.training_choice, source, partners)
    return meta_train(model, base, data, meta_config, episode_config, log_path=log_path, episodes_path=episodes_path)
