"""Append-only snapshot store.

Layout: one tab-separated file per calendar month of observation dates
(``2025-07.tsv``), each line ``date<TAB>model_id<TAB>cumulative_downloads``,
plus a ``manifest.json`` holding a sha256 and line count per data file.
Data files are append-only; a single writer is enforced with an advisory
lock, readers need no lock.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import DomainError, StoreIntegrityError, StoreLockedError
from .series import DownloadSeries

MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".lock"


@dataclass(frozen=True)
class SnapshotPoint:
    model_id: str
    observed_at: date
    cumulative_downloads: int

    def __post_init__(self):
        if not self.model_id or "\t" in self.model_id or "\n" in self.model_id:
            raise DomainError(f"bad model_id for snapshot: {self.model_id!r}")
        if self.cumulative_downloads < 0:
            raise DomainError(
                f"{self.model_id}: cumulative downloads must be non-negative, "
                f"got {self.cumulative_downloads}"
            )


@dataclass
class AppendResult:
    added: int = 0
    skipped: int = 0
    conflicts: list[tuple[str, date, int, int]] = field(default_factory=list)


def _file_for(observed_at: date) -> str:
    return f"{observed_at.year:04d}-{observed_at.month:02d}.tsv"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class SnapshotStore:
    """Filesystem-backed store of daily snapshot points."""

    def __init__(self, root: str | Path, create: bool = True, verify: bool = True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not self.root.is_dir():
            raise StoreIntegrityError(f"store directory does not exist: {self.root}")
        if verify:
            self.verify_manifest()

    # -- reading -------------------------------------------------------

    def data_files(self) -> list[Path]:
        return sorted(self.root.glob("*.tsv"))

    def verify_manifest(self) -> None:
        """Check data files against the recorded checksums."""
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.exists():
            return
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise StoreIntegrityError(f"{manifest_path}: unreadable manifest: {err}") from None
        for name, meta in manifest.get("files", {}).items():
            path = self.root / name
            if not path.exists():
                raise StoreIntegrityError(f"{name}: listed in manifest but missing from store")
            actual = _sha256(path)
            if actual != meta.get("sha256"):
                raise StoreIntegrityError(
                    f"{name}: checksum mismatch (manifest {meta.get('sha256')}, actual {actual})"
                )

    def _iter_file(self, path: Path):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise StoreIntegrityError(
                        f"{path.name}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                    )
                raw_date, model_id, raw_count = parts
                try:
                    observed = date.fromisoformat(raw_date)
                except ValueError:
                    raise StoreIntegrityError(
                        f"{path.name}:{lineno}: unparsable date {raw_date!r}"
                    ) from None
                try:
                    count = int(raw_count)
                except ValueError:
                    raise StoreIntegrityError(
                        f"{path.name}:{lineno}: unparsable count {raw_count!r}"
                    ) from None
                if count < 0:
                    raise StoreIntegrityError(f"{path.name}:{lineno}: negative count {count}")
                yield observed, model_id, count, f"{path.name}:{lineno}"

    def _collect(self, wanted: str | None = None) -> dict[str, list[tuple[date, int, str]]]:
        rows: dict[str, list[tuple[date, int, str]]] = {}
        for path in self.data_files():
            for observed, model_id, count, where in self._iter_file(path):
                if wanted is not None and model_id != wanted:
                    continue
                rows.setdefault(model_id, []).append((observed, count, where))
        for model_id, pts in rows.items():
            pts.sort(key=lambda p: p[0])
            for a, b in zip(pts, pts[1:]):
                if a[0] == b[0]:
                    raise StoreIntegrityError(
                        f"{b[2]}: duplicate snapshot for {model_id} on {b[0]}"
                    )
        return rows

    def model_ids(self) -> list[str]:
        return sorted(self._collect())

    def load_series(self, model_id: str) -> DownloadSeries:
        rows = self._collect(wanted=model_id).get(model_id, [])
        return DownloadSeries(model_id, tuple((d, v) for d, v, _ in rows))

    def load_all(self) -> dict[str, DownloadSeries]:
        return {
            model_id: DownloadSeries(model_id, tuple((d, v) for d, v, _ in pts))
            for model_id, pts in sorted(self._collect().items())
        }

    # -- writing -------------------------------------------------------

    def append(self, points) -> AppendResult:
        """Append new snapshot points, skipping already-stored duplicates.

        A point whose ``(model_id, observed_at)`` pair exists with the
        same value is skipped (re-imports are idempotent); a differing
        value is reported as a conflict and not written.
        """
        points = list(points)
        result = AppendResult()
        lock_path = self.root / LOCK_NAME
        with open(lock_path, "w") as lock:
            try:
                fcntl.flock(lock, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError:
                raise StoreLockedError(f"another writer holds the store lock at {lock_path}") from None
            try:
                existing: dict[tuple[str, date], int] = {}
                for model_id, pts in self._collect().items():
                    for observed, count, _ in pts:
                        existing[(model_id, observed)] = count
                by_file: dict[str, list[SnapshotPoint]] = {}
                staged: set[tuple[str, date]] = set()
                for point in sorted(points, key=lambda p: (p.observed_at, p.model_id)):
                    key = (point.model_id, point.observed_at)
                    if key in existing:
                        if existing[key] == point.cumulative_downloads:
                            result.skipped += 1
                        else:
                            result.conflicts.append(
                                (point.model_id, point.observed_at, existing[key], point.cumulative_downloads)
                            )
                        continue
                    if key in staged:
                        result.skipped += 1
                        continue
                    staged.add(key)
                    by_file.setdefault(_file_for(point.observed_at), []).append(point)
                for name, file_points in sorted(by_file.items()):
                    with open(self.root / name, "a", encoding="utf-8") as fh:
                        for p in file_points:
                            fh.write(
                                f"{p.observed_at.isoformat()}\t{p.model_id}\t{p.cumulative_downloads}\n"
                            )
                            result.added += 1
                self._write_manifest()
            finally:
                fcntl.flock(lock, fcntl.LOCK_UN)
        return result

    def _write_manifest(self) -> None:
        files = {}
        for path in self.data_files():
            with open(path, encoding="utf-8") as fh:
                lines = sum(1 for _ in fh)
            files[path.name] = {"sha256": _sha256(path), "lines": lines}
        manifest = {"format": 1, "files": files}
        (self.root / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


class InMemoryStore:
    """Duck-typed stand-in for :class:`SnapshotStore` used in pipelines and tests."""

    def __init__(self):
        self._points: dict[str, dict[date, int]] = {}

    def append(self, points) -> AppendResult:
        result = AppendResult()
        for point in points:
            per_model = self._points.setdefault(point.model_id, {})
            if point.observed_at in per_model:
                if per_model[point.observed_at] == point.cumulative_downloads:
                    result.skipped += 1
                else:
                    result.conflicts.append(
                        (
                            point.model_id,
                            point.observed_at,
                            per_model[point.observed_at],
                            point.cumulative_downloads,
                        )
                    )
                continue
            per_model[point.observed_at] = point.cumulative_downloads
            result.added += 1
        return result

    def add_series(self, series: DownloadSeries) -> None:
        per_model = self._points.setdefault(series.model_id, {})
        for d, v in series.points:
            per_model[d] = v

    def model_ids(self) -> list[str]:
        return sorted(self._points)

    def load_series(self, model_id: str) -> DownloadSeries:
        pts = sorted(self._points.get(model_id, {}).items())
        return DownloadSeries(model_id, tuple(pts))

    def load_all(self) -> dict[str, DownloadSeries]:
        return {model_id: self.load_series(model_id) for model_id in self.model_ids()}
