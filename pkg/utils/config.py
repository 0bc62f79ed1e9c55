"""
Module de configuration centralisé pour HateMAML-lab.

- variables d'environnement (.env) via le singleton Config
- fichier de configuration d'exécution (JSON ou TOML) validé en RunConfig
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import ValidationError

from models.run_config import RunConfig
from utils.errors import ConfigurationError


LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Config:
    """
    Gestionnaire de configuration centralisé.
    Charge les variables depuis .env et valide leur valeur.
    """

    _instance: Optional['Config'] = None
    _loaded: bool = False

    def __new__(cls) -> 'Config':
        """Singleton pattern pour éviter les rechargements multiples."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self) -> None:
        if not Config._loaded:
            self._load_environment()
            Config._loaded = True

    def _load_environment(self) -> None:
        """Charge le fichier .env depuis la racine du projet."""
        project_root = Path(__file__).parent.parent
        env_path = project_root / '.env'

        if env_path.exists():
            load_dotenv(env_path)
        else:
            load_dotenv()

    @staticmethod
    def _get_optional(key: str, default: str = '') -> str:
        """Récupère une variable d'environnement optionnelle."""
        value = os.getenv(key)
        if value is None or value.strip() == '':
            return default
        return value.strip()

    @property
    def log_level(self) -> str:
        """Niveau de logging."""
        level = self._get_optional('HATEMAML_LOG_LEVEL', 'INFO').upper()
        if level not in LOG_LEVELS:
            raise ConfigurationError(
                f"HATEMAML_LOG_LEVEL: invalid level '{level}', expected one of {', '.join(LOG_LEVELS)}"
            )
        return level

    @property
    def output_dir(self) -> Path:
        """Répertoire racine des sorties quand la config n'en donne pas."""
        return Path(self._get_optional('HATEMAML_OUTPUT_DIR', 'runs'))

    @property
    def n_jobs(self) -> int:
        """Nombre de workers joblib par défaut."""
        raw = self._get_optional('HATEMAML_N_JOBS', '1')
        try:
            value = int(raw)
        except ValueError:
            raise ConfigurationError(f"HATEMAML_N_JOBS: expected an integer, got '{raw}'")
        if value < 1:
            raise ConfigurationError(f"HATEMAML_N_JOBS: must be >= 1, got {value}")
        return value


# =============================================================================
# FICHIER DE CONFIGURATION D'EXÉCUTION
# =============================================================================

def _read_config_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            import tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        # tomllib.TOMLDecodeError hérite de ValueError
        raise ConfigurationError(f"{path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigurationError(f"{path}: top-level value must be an object")
    return payload


def format_validation_error(exc: ValidationError) -> str:
    """Une ligne `champ.chemin: message` par erreur pydantic."""
    lines = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{location}: {error['msg']}")
    return "\n".join(lines)


def parse_run_config(payload: Dict[str, Any], source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration {source}:\n{format_validation_error(exc)}") from exc


def load_run_config(
    path: Union[str, Path],
    seed_override: Optional[int] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """
    Lit et valide un fichier de configuration d'exécution.

    Args:
        path: fichier .json ou .toml
        seed_override: remplace la liste de graines par cette seule graine
        output_dir: remplace output_dir (sinon config, sinon HATEMAML_OUTPUT_DIR)

    Raises:
        ConfigurationError: fichier illisible ou invalide (chemins de champs inclus)
    """
    path = Path(path)
    payload = _read_config_file(path)
    if seed_override is not None:
        payload["seeds"] = [seed_override]
    if output_dir is not None:
        payload["output_dir"] = str(output_dir)
    run_config = parse_run_config(payload, str(path))

    if run_config.output_dir is None:
        run_config = run_config.model_copy(update={"output_dir": config.output_dir / run_config.name})
    if "n_jobs" not in run_config.model_fields_set:
        run_config = run_config.model_copy(update={"n_jobs": config.n_jobs})
    corpus_path = run_config.corpus_path
    if corpus_path is not None and not corpus_path.is_absolute() and not corpus_path.exists():
        # chemin relatif au fichier de configuration
        run_config = run_config.model_copy(update={"corpus_path": path.parent / corpus_path})
    return run_config


# Instance globale pour import facile
config = Config()
