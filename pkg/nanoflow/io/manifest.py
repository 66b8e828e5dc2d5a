"""
Манифест расчёта: перечень записанных файлов с контрольными суммами,
статус завершения и итоговый баланс масс.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_FILE = "manifest.json"
FAILED_STEP_FILE = "failed_step.json"


def file_checksum(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ManifestEntry:
    path: str
    step: int | None
    time_s: float | None
    pvi: float | None
    sha256: str

    def to_dict(self) -> dict:
        return {"path": self.path, "step": self.step, "time_s": self.time_s, "pvi": self.pvi, "sha256": self.sha256}


@dataclass
class OutputManifest:
    run_id: str
    output_dir: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    status: str = "running"
    ledger: dict | None = None
    config: dict | None = None
    error: str | None = None

    def add(self, path: str | Path, step: int | None = None, time_s: float | None = None, pvi: float | None = None):
        """Регистрирует файл; путь хранится относительно каталога вывода."""
        path = Path(path)
        try:
            relative = path.relative_to(self.output_dir).as_posix()
        except ValueError:
            relative = path.as_posix()
        if any(entry.path == relative for entry in self.entries):
            raise ValueError(f"Файл уже внесён в манифест: {relative}")
        entry = ManifestEntry(relative, step, time_s, pvi, file_checksum(self.output_dir / relative))
        self.entries.append(entry)
        return entry

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "output_dir": str(self.output_dir),
            "status": self.status,
            "error": self.error,
            "files": [entry.to_dict() for entry in self.entries],
            "ledger": self.ledger,
            "config": self.config,
        }

    def write(self) -> Path:
        path = self.output_dir / MANIFEST_FILE
        path.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path

    def checksums(self) -> dict[str, str]:
        return {entry.path: entry.sha256 for entry in self.entries}


def write_failed_step(report, directory: str | Path, error: str | None = None) -> Path:
    """Сохраняет отчёт о шаге, на котором расчёт прервался."""
    path = Path(directory) / FAILED_STEP_FILE
    data = {"error": error, "report": None if report is None else report.to_dict()}
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False, default=float) + "\n", encoding="utf-8")
    return path
