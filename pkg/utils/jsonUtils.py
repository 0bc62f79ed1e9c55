import json
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Union

import numpy as np


def _default(value: Any) -> Any:
    # types numpy -> types JSON natifs
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"object of type {type(value).__name__} is not JSON serializable")


def dumps_record(record: Dict[str, Any]) -> str:
    """Une ligne JSON à clés triées, identique octet pour octet d'une exécution à l'autre."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, default=_default)


class JsonUtils():

    def __init__(self, file: Union[str, Path]):
        self.file = Path(file)

    #écrit une liste d'objets, un par ligne (écrase le fichier)
    def write_records(self, records: Iterable[Dict[str, Any]]) -> int:
        self.file.parent.mkdir(parents=True, exist_ok=True)
        count = 0
        with open(self.file, "w", encoding="utf-8", newline="\n") as fh:
            for record in records:
                fh.write(dumps_record(record) + "\n")
                count += 1
        return count

    #ajoute un objet en fin de fichier
    def append_record(self, record: Dict[str, Any]) -> None:
        self.file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.file, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps_record(record) + "\n")

    def iter_records(self) -> Iterator[Dict[str, Any]]:
        with open(self.file, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield json.loads(line)

    def read_records(self) -> List[Dict[str, Any]]:
        if not self.file.exists():
            return []
        return list(self.iter_records())

    def count_json_objects(self) -> int:
        if not self.file.exists():
            return 0
        return sum(1 for _ in self.iter_records())

    def write_document(self, document: Any) -> None:
        """Écrit un seul document JSON indenté (manifestes, provenance)."""
        self.file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.file, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(document, fh, ensure_ascii=False, indent=4, sort_keys=True, default=_default)
            fh.write("\n")

    def read_document(self) -> Any:
        with open(self.file, "r", encoding="utf-8") as fh:
            return json.load(fh)
