"""Batch manifests: one ``clean, target, output[, key=value ...]`` record per line.

Blank lines and ``#`` comments are ignored. Relative paths resolve against the
manifest's directory. Trailing ``key=value`` fields override schedule/attack
config keys for that pair only.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from praf.config import PAIR_KEYS, ConfigFileError, parse_value


@dataclass(frozen=True)
class PairRecord:
    clean_path: str
    target_path: str
    output_path: str
    overrides: dict = field(default_factory=dict)
    lineno: int = 0

    @property
    def stem(self):
        return os.path.splitext(self.output_path)[0]

    @property
    def trace_path(self):
        return self.stem + ".trace.jsonl"

    @property
    def stages_path(self):
        return self.stem + ".stages.jsonl"


def parse_manifest(text, path=None, base_dir=None):
    base_dir = base_dir if base_dir is not None else (os.path.dirname(path) if path else "")
    records, outputs = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) < 3:
            raise ConfigFileError("expected 'clean, target, output[, key=value ...]'", path, lineno)
        paths = fields[:3]
        if any(not p for p in paths):
            raise ConfigFileError("empty path", path, lineno)
        clean, target, output = (p if os.path.isabs(p) else os.path.join(base_dir, p) for p in paths)
        overrides = {}
        for item in fields[3:]:
            if "=" not in item:
                raise ConfigFileError(f"override {item!r} is not key=value", path, lineno)
            key, value = (s.strip() for s in item.split("=", 1))
            if key not in PAIR_KEYS:
                raise ConfigFileError(f"key {key!r} cannot be overridden per pair", path, lineno)
            try:
                overrides[key] = parse_value(key, value)
            except ValueError as exc:
                raise ConfigFileError(f"{key}: {exc}", path, lineno) from None
        norm = os.path.normpath(os.path.abspath(output))
        if norm in outputs:
            raise ConfigFileError(
                f"duplicate output path {output!r} (first on line {outputs[norm]})", path, lineno)
        outputs[norm] = lineno
        records.append(PairRecord(clean, target, output, overrides, lineno))
    return records


def load_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read manifest ({exc.strerror})", path) from None
    return parse_manifest(text, path)
