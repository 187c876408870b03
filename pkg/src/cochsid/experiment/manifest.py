"""Dataset manifests: CSV ``speaker_id,utterance_id,wav_path,split`` plus a JSON sidecar."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

FIELDS = ["speaker_id", "utterance_id", "wav_path", "split"]
SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    speaker_id: str
    utterance_id: str
    wav_path: Path
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    corpus: str = "unnamed"
    sample_rate: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.entries:
            raise ManifestError("manifest has no entries")
        seen = set()
        for e in self.entries:
            if e.split not in SPLITS:
                raise ManifestError(f"bad split {e.split!r} for {e.utterance_id}")
            key = (e.speaker_id, e.utterance_id)
            if key in seen:
                raise ManifestError(f"duplicate (speaker, utterance) pair {key}")
            seen.add(key)
        for split in SPLITS:
            missing = set(self.speakers) - {e.speaker_id for e in self.entries if e.split == split}
            if missing:
                raise ManifestError(f"speakers missing from {split} split: {sorted(missing)}")

    @property
    def speakers(self) -> list[str]:
        return sorted({e.speaker_id for e in self.entries})

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)

    def speaker_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.speakers)}

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Write the CSV (paths relative to its directory when possible) and the metadata sidecar."""
    path = Path(path)
    root = path.parent.resolve()
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FIELDS)
        for e in manifest.entries:
            p = Path(e.wav_path)
            try:
                p = p.resolve().relative_to(root)
            except ValueError:
                pass
            w.writerow([e.speaker_id, e.utterance_id, p.as_posix(), e.split])
    meta = {"corpus": manifest.corpus, "sample_rate": manifest.sample_rate}
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> DatasetManifest:
    """Read a manifest CSV; relative WAV paths resolve against the CSV's directory."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != FIELDS:
            raise ManifestError(f"manifest header must be {','.join(FIELDS)}")
        entries = []
        for row in reader:
            p = Path(row["wav_path"].strip())
            if not p.is_absolute():
                p = path.parent / p
            entries.append(ManifestEntry(row["speaker_id"].strip(), row["utterance_id"].strip(),
                                         p, row["split"].strip()))
    meta = {}
    if _meta_path(path).exists():
        meta = json.loads(_meta_path(path).read_text())
    return DatasetManifest(entries, meta.get("corpus", path.stem), meta.get("sample_rate"))
