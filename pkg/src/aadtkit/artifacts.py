"""Model and report artifacts: deterministic JSON on disk.

Documents are serialized with sorted keys and full-precision floats (the
shortest round-tripping decimal form), so identical runs produce identical
bytes and a load reproduces predictions exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .ann import AnnModel
from .errors import DataError
from .evaluation import EvalReport
from .factor import FactorTable
from .ols import OlsModel
from .svr import SvrModel

__all__ = [
    "dump_json",
    "load_json",
    "save_model",
    "load_model",
    "save_report",
    "load_report",
    "sha256_file",
]

_MODEL_KINDS = {
    "svr": SvrModel,
    "ann": AnnModel,
    "ols": OlsModel,
    "factor": FactorTable,
}


def dump_json(path, doc: dict) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def save_model(path, model) -> None:
    dump_json(path, model.to_dict())


def load_model(path):
    doc = load_json(path)
    kind = doc.get("kind")
    cls = _MODEL_KINDS.get(kind)
    if cls is None:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    return cls.from_dict(doc)


def save_report(path, report: EvalReport) -> None:
    dump_json(path, report.to_dict())


def load_report(path) -> EvalReport:
    return EvalReport.from_dict(load_json(path))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
