"""Artifact emission: plot-ready data files, text reports, run manifests.

Every run writes into one output directory. Data files are plain columnar
text with self-describing headers; reports are structured text whose header
embeds the tool version, the seed and the config hash, so two runs with the
same inputs are byte-identical. Wall-clock time appears only in the
manifest, which lists a SHA-256 per artifact.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
from pathlib import Path

from . import __version__


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class OutputDir:
    """Collects artifacts under one directory and finalizes a manifest."""

    def __init__(self, root, command: str, seed: int, config: dict):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = seed
        self.config = dict(config)
        self.cfg_hash = config_hash({"command": command, "seed": seed, **self.config})
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def header_lines(self, title: str) -> list:
        return [
            f"# {title}",
            f"# tool: auctionlab {__version__}",
            f"# command: {self.command}",
            f"# seed: {self.seed}",
            f"# config: {self.cfg_hash}",
        ]

    def write_report(self, name: str, title: str, lines) -> Path:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.header_lines(title) + list(lines):
                fh.write(line + "\n")
        return p

    def write_columns(self, name: str, columns: dict, fmt: str = "{:.10g}") -> Path:
        """Self-describing columnar file: header row, one line per record."""
        p = self.path(name)
        names = list(columns)
        rows = zip(*[columns[c] for c in names])
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(names) + "\n")
            for row in rows:
                fh.write(",".join(
                    v if isinstance(v, str) else fmt.format(v) for v in row) + "\n")
        return p

    def write_matrix(self, name: str, matrix, row_labels, col_labels,
                     corner: str = "") -> Path:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([corner] + list(col_labels))
            for label, row in zip(row_labels, matrix):
                writer.writerow([label] + [f"{v:.10g}" for v in row])
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p

    def finalize(self) -> Path:
        manifest = {
            "tool": "auctionlab",
            "version": __version__,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.cfg_hash,
            "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "files": {
                name: sha256_file(self.root / name) for name in sorted(self.files)
            },
        }
        p = self.root / "manifest.json"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def load_manifest(root) -> dict:
    with open(Path(root) / "manifest.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_ecdf_file(out: OutputDir, name: str, curve) -> Path:
    return out.write_columns(name, {"x": curve.support, "F": curve.heights})


def qq_pairs(sample) -> tuple:
    """Theoretical vs sample normal quantile pairs for Q-Q plotting."""
    import numpy as np
    from scipy import stats

    sample = np.sort(np.asarray(sample, dtype=float))
    n = sample.size
    probs = (np.arange(1, n + 1) - 0.5) / n
    return stats.norm.ppf(probs), sample


def format_table(headers, rows, precision: int = 6) -> list:
    """Fixed-width text table lines."""
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.{precision}g}"
        return str(v)

    str_rows = [[fmt(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in str_rows)) if str_rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in str_rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return lines
