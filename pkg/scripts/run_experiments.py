#!/usr/bin/env python3
"""
🧪 RUN EXPERIMENTS - HateMAML-lab
=================================

Lance les expériences décrites par un fichier de configuration :
- train-base      : modèle de base sur la langue source (+ ligne "base")
- meta-train      : HateMAML / MAML / X-MAML / fine-tuning (zéro-shot, few-shot,
                    adaptation de domaine, entraînement complet)
- self-train      : boucle d'auto-apprentissage par labels silver
- transfer-matrix : matrice auxiliaire -> cible
- synth           : génération d'une famille de langues synthétiques
- report          : agrégation des métriques d'un répertoire en tableaux

Usage:
    python -m scripts.run_experiments meta-train --config configs/zero_shot_hatemaml.json

Codes de sortie: 0 succès, 2 configuration invalide, 3 données, 4 exécution.

Auteur: HateMAML-lab Team
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Ajouter le répertoire parent au path
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils.config import config, load_run_config
from utils.errors import HateMamlError
from utils.evaluation import render_report
from utils.experiments import COMMANDS, prepare, run_report, run_synth


logger = logging.getLogger("hatemaml")

SUBCOMMANDS = ("train-base", "meta-train", "self-train", "transfer-matrix", "synth", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="HateMAML-lab - méta-apprentissage pour la détection de haine multilingue")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=f"Sous-commande {name}")
        sub.add_argument("--config", type=Path, required=True, help="Fichier de configuration (.json ou .toml)")
        sub.add_argument("--seed-override", type=int, default=None, help="Remplace la liste de graines par une seule")
        sub.add_argument("--out", type=Path, default=None, help="Répertoire de sortie")
    return parser


def _banner(title: str) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)


def execute(command: str, config_path: Path, seed_override: Optional[int] = None, out: Optional[Path] = None) -> int:
    """Exécute une sous-commande; lève les erreurs HateMamlError."""
    run_config = load_run_config(config_path, seed_override=seed_override, output_dir=out)
    logger.info(f"[CLI] {command} '{run_config.name}' -> {run_config.output_dir} (seeds {run_config.seeds})")

    if command == "synth":
        corpus_path, manifest_path = run_synth(run_config)
        print(f"✅ Corpus: {corpus_path}")
        print(f"✅ Manifeste: {manifest_path}")
        return 0

    if command == "report":
        rendered = run_report(Path(run_config.output_dir))
        print(rendered["markdown"])
        return 0

    experiment = prepare(run_config)
    result = COMMANDS[command](experiment)
    reports = result[0] if command == "transfer-matrix" else result
    print(render_report(reports, "markdown"))
    print(f"📂 Sorties: {experiment.output_dir}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        level = config.log_level
    except HateMamlError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=getattr(logging, level), format='%(asctime)s - %(levelname)s - %(message)s')

    _banner(f"🧪 HateMAML-lab - {args.command}")
    try:
        return execute(args.command, args.config, args.seed_override, args.out)
    except HateMamlError as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return exc.exit_code
    except Exception as exc:
        logger.exception(f"❌ Erreur inattendue: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
