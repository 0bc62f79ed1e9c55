"""
Corpus multilingues: chargement, validation, plafonnement et assemblage
des pools D_src / D_aux / D_tgt consommés par la méta-optimisation.

Formats: JSONL (un objet par ligne) ou CSV/TSV avec en-tête
id,text,label,language,split (UTF-8, labels entiers 0/1).
"""

import hashlib
import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from models.corpus_records import CORPUS_FIELDS, Sample, Split, UnlabeledSample
from models.run_config import AUXILIARY_MISSING_MESSAGE, TrainingChoice
from utils.errors import CorpusError
from utils.jsonUtils import JsonUtils, dumps_record


logger = logging.getLogger(__name__)

FORMATS = ("jsonl", "csv", "tsv")


# =============================================================================
# CORPUS
# =============================================================================

class Corpus:
    """Collection immuable de Sample avec index par langue."""

    def __init__(self, samples: Iterable[Sample] = ()):
        self._samples: Tuple[Sample, ...] = tuple(samples)
        index: Dict[str, List[int]] = {}
        seen = set()
        for position, sample in enumerate(self._samples):
            if sample.id in seen:
                raise CorpusError(f"duplicate id '{sample.id}'")
            seen.add(sample.id)
            index.setdefault(sample.language, []).append(position)
        self._index = {language: tuple(positions) for language, positions in index.items()}

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self._samples == other._samples

    def __repr__(self) -> str:
        return f"Corpus({len(self)} samples, languages={self.languages})"

    @property
    def samples(self) -> Tuple[Sample, ...]:
        return self._samples

    @property
    def languages(self) -> List[str]:
        return sorted(self._index)

    def select(self, language: Optional[str] = None, split: Optional[Split] = None) -> List[Sample]:
        """Échantillons d'une langue et/ou d'un split, dans l'ordre du corpus."""
        if language is not None:
            candidates = (self._samples[i] for i in self._index.get(language, ()))
        else:
            candidates = iter(self._samples)
        if split is None:
            return list(candidates)
        split = Split(split)
        return [sample for sample in candidates if sample.split == split]

    def has(self, language: str, split: Split) -> bool:
        return any(True for _ in self.select(language, split))

    def counts(self) -> Dict[str, Dict[str, int]]:
        """Nombre d'échantillons par langue et par split."""
        table: Dict[str, Dict[str, int]] = {}
        for sample in self._samples:
            row = table.setdefault(sample.language, {split.value: 0 for split in Split})
            row[sample.split.value] += 1
        return {language: table[language] for language in sorted(table)}

    def digest(self) -> str:
        return samples_digest(self._samples)


def samples_digest(samples: Iterable) -> str:
    """SHA-256 des enregistrements (ou des seuls textes pour les pools non étiquetés)."""
    sha = hashlib.sha256()
    for sample in samples:
        record = sample.to_record() if isinstance(sample, Sample) else sample.model_dump()
        sha.update(dumps_record(record).encode("utf-8"))
        sha.update(b"\n")
    return sha.hexdigest()


# =============================================================================
# LECTURE / ÉCRITURE
# =============================================================================

def _infer_format(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        fmt = "jsonl"
    if fmt not in FORMATS:
        raise CorpusError(f"unsupported corpus format '{fmt}' for {path} (expected one of {', '.join(FORMATS)})")
    return fmt


def _parse_label(raw) -> int:
    if isinstance(raw, bool):
        raise ValueError
    if isinstance(raw, str):
        raw = raw.strip()
        if raw not in ("0", "1"):
            raise ValueError
        return int(raw)
    if isinstance(raw, (int, np.integer)) and raw in (0, 1):
        return int(raw)
    if isinstance(raw, float) and raw in (0.0, 1.0):
        return int(raw)
    raise ValueError


def _build_sample(record: Dict, line: int) -> Sample:
    missing = [field for field in CORPUS_FIELDS if field not in record]
    if missing:
        raise CorpusError(f"missing required field(s) {missing}", line=line)
    record = dict(record)
    try:
        record["label"] = _parse_label(record["label"])
    except ValueError:
        raise CorpusError(f"invalid label value {record['label']!r} (expected 0 or 1)", line=line)
    try:
        return Sample.model_validate(record)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise CorpusError(f"invalid field '{field}': {first['msg']}", line=line) from exc


def _iter_jsonl(path: Path) -> Iterator[Tuple[int, Dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"parse error: {exc.msg}", line=number, column=exc.colno) from exc
            if not isinstance(record, dict):
                raise CorpusError("record must be a JSON object", line=number, column=1)
            yield number, record


def _iter_delimited(path: Path, sep: str) -> Iterator[Tuple[int, Dict]]:
    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return
    except pd.errors.ParserError as exc:
        raise CorpusError(f"parse error in {path.name}: {exc}") from exc
    missing = [field for field in CORPUS_FIELDS if field not in frame.columns]
    if missing:
        raise CorpusError(f"header is missing column(s) {missing}", line=1)
    for position, record in enumerate(frame.to_dict(orient="records")):
        # ligne 1 = en-tête
        yield position + 2, record


def load(path: Union[str, Path], fmt: Optional[str] = None) -> Corpus:
    """
    Charge et valide un corpus.

    Raises:
        CorpusError: erreur de parsing (ligne, colonne), id dupliqué, label invalide
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    fmt = _infer_format(path, fmt)
    records = _iter_jsonl(path) if fmt == "jsonl" else _iter_delimited(path, "," if fmt == "csv" else "\t")

    samples: List[Sample] = []
    seen: Dict[str, int] = {}
    for line, record in records:
        sample = _build_sample(record, line)
        if sample.id in seen:
            raise CorpusError(f"duplicate id '{sample.id}' (first seen on line {seen[sample.id]})", line=line)
        seen[sample.id] = line
        samples.append(sample)

    corpus = Corpus(samples)
    logger.info(f"[Corpus] Loaded {len(corpus)} samples from {path.name} ({', '.join(corpus.languages) or 'empty'})")
    return corpus


def save(corpus: Corpus, path: Union[str, Path], fmt: Optional[str] = None) -> Path:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    records = [sample.to_record() for sample in corpus]
    if fmt == "jsonl":
        JsonUtils(path).write_records(records)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(records, columns=list(CORPUS_FIELDS))
        frame.to_csv(path, sep="," if fmt == "csv" else "\t", index=False, encoding="utf-8", lineterminator="\n")
    return path


# =============================================================================
# PLAFONNEMENT
# =============================================================================

def language_seed(seed: int, language: str) -> List[int]:
    """Sous-graine stable d'une langue (indépendante de PYTHONHASHSEED)."""
    return [seed, zlib.crc32(language.encode("utf-8"))]


def cap(corpus: Corpus, n: Optional[int], seed: int = 0) -> Corpus:
    """
    Garde au plus n échantillons d'entraînement par langue (tirage uniforme
    sans remise, graine par langue). Les autres splits sont intacts et
    l'ordre d'origine est conservé, ce qui rend l'opération idempotente.
    """
    if n is None:
        return corpus
    if n < 1:
        raise CorpusError(f"per-language cap must be >= 1, got {n}")

    dropped = set()
    for language in corpus.languages:
        train = corpus.select(language, Split.TRAIN)
        if len(train) <= n:
            continue
        rng = np.random.default_rng(language_seed(seed, language))
        keep = set(rng.choice(len(train), size=n, replace=False).tolist())
        dropped.update(sample.id for position, sample in enumerate(train) if position not in keep)
        logger.debug(f"[Corpus] Cap {language}: {len(train)} -> {n} training samples")
    return Corpus(sample for sample in corpus if sample.id not in dropped)


# =============================================================================
# ASSEMBLAGE DES DONNÉES D'ENTRAÎNEMENT
# =============================================================================

@dataclass(frozen=True)
class TrainingData:
    """
    Ensemble poolé D avec la provenance de chaque échantillon.

    `source` est la langue dont seul le split de validation est versé;
    le pool de domaine (Q′) est la partie non-source de D.
    """
    samples: Tuple[Sample, ...]
    source: Optional[str]
    partners: Tuple[str, ...]
    choice: TrainingChoice

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def domain_pool(self) -> List[Sample]:
        return [sample for sample in self.samples if sample.language != self.source]

    @property
    def source_samples(self) -> List[Sample]:
        return [sample for sample in self.samples if sample.language == self.source]

    def sizes(self) -> Dict[str, int]:
        sizes: Dict[str, int] = {}
        for sample in self.samples:
            sizes[sample.language] = sizes.get(sample.language, 0) + 1
        return sizes

    def digest(self) -> str:
        return samples_digest(self.samples)


def assemble_training_data(
    corpus: Corpus,
    choice: TrainingChoice,
    source: Optional[str],
    aux_or_target: Union[str, Sequence[str]],
) -> TrainingData:
    """
    D = validation source ∪ entraînement des langues partenaires.

    zero_shot: partenaires = langues auxiliaires; few_shot: langues cibles.
    `source` peut être None (entraînement multi-langues sans source).

    Raises:
        CorpusError: langue ou split absent
    """
    choice = TrainingChoice(choice)
    partners = [aux_or_target] if isinstance(aux_or_target, str) else list(aux_or_target)
    if not partners and source is None:
        raise CorpusError("no training language selected")

    pooled: List[Sample] = []
    if source is not None:
        source_validation = corpus.select(source, Split.VALIDATION)
        if not source_validation:
            raise CorpusError(f"source language '{source}' has no validation split in the corpus")
        pooled.extend(source_validation)

    for language in partners:
        if language == source:
            raise CorpusError(f"language '{language}' cannot be both source and training partner")
        train = corpus.select(language, Split.TRAIN)
        if not train:
            if choice == TrainingChoice.ZERO_SHOT:
                raise CorpusError(f"auxiliary language '{language}' has no training split: {AUXILIARY_MISSING_MESSAGE}")
            raise CorpusError(f"target language '{language}' has no training split for few-shot training")
        pooled.extend(train)

    data = TrainingData(tuple(pooled), source, tuple(partners), choice)
    logger.info(f"[Corpus] Assembled {choice.value} training data: {data.sizes()} (|D| = {len(data)})")
    return data


def unlabeled_pool(corpus: Corpus, language: str, split: Split = Split.TRAIN) -> List[UnlabeledSample]:
    """Textes d'une langue sans leur label."""
    pool = [sample.unlabeled() for sample in corpus.select(language, split)]
    if not pool:
        raise CorpusError(f"language '{language}' has no '{Split(split).value}' split to draw unlabeled text from")
    return pool
