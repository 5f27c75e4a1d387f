"""Run configuration: a flat ``key = value`` file with four sections.

::

    [ensemble]
    image_size = 64
    patch_sizes = 8, 16, 8
    ...
    [schedule]
    [attack]
    [judge]

Every key has a default except ``judge.model``. Keys are unique across
sections, which lets each one double as a CLI flag. Errors carry the
offending line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from praf.alignment import LossWeights
from praf.attack import AttackConfig
from praf.errors import ConfigError
from praf.surrogate import EncoderConfig


class ConfigFileError(ConfigError):
    def __init__(self, message, path=None, lineno=None):
        where = f"{path or '<config>'}" + (f":{lineno}" if lineno else "")
        super().__init__(f"{where}: {message}")
        self.lineno = lineno


def _real(text):
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(conv):
    def parse(text):
        text = text.strip()
        return tuple(conv(p) for p in text.split(",") if p.strip()) if text else ()

    return parse


def _opt(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)

    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "ensemble": {
        "image_size": (int, 64),
        "patch_sizes": (_list(int), (8, 16, 8)),
        "depths": (_list(int), (4, 4, 6)),
        "embed_dim": (int, 64),
        "num_heads": (int, 4),
        "seeds": (_list(int), (101, 202, 303)),
    },
    "schedule": {
        "T": (int, 300),
        "M": (int, 3),
        "resolutions": (_opt(_list(int)), None),
    },
    "attack": {
        "epsilon": (_real, 16 / 255),
        "eta": (_real, 1 / 255),
        "ranks": (_list(int), (1, 3, 5)),
        "gamma": (_real, 0.6),
        "lambda_cls": (_real, 0.5),
        "lambda_patch": (_real, 1.5),
        "crop_enabled": (_bool, True),
        "crop_scale_min": (_real, 0.5),
        "crop_scale_max": (_real, 1.0),
        "sign_mode": (str, "descent"),
        "interp_down": (str, "nearest"),
        "interp_up": (str, "nearest"),
        "patch_mode": (str, "top"),
        "seed": (_opt(int), None),
        "workers": (int, 1),
    },
    "judge": {
        "model": (_opt(str), None),
        "endpoint": (str, "http://localhost:8000/v1"),
        "thresholds": (_list(_real), (0.5, 0.6, 0.7, 0.8, 0.9)),
        "strict": (_bool, True),
        "concurrency": (int, 4),
        "timeout": (_real, 30.0),
        "max_retries": (int, 3),
        "backoff": (_real, 1.0),
    },
}

KEY_SECTION = {key: sec for sec, keys in SCHEMA.items() for key in keys}
# keys a manifest line may override per pair
PAIR_KEYS = set(SCHEMA["schedule"]) | set(SCHEMA["attack"]) - {"workers"}

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*[=:]\s*(.*)$")


def parse_value(key, text):
    parser = SCHEMA[KEY_SECTION[key]][key][0]
    return parser(text)


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls):
        return cls({k: v[1] for sec in SCHEMA.values() for k, v in sec.items()})

    def __getitem__(self, key):
        return self.values[key]

    def override(self, key, value, source="override"):
        """Set ``key``; string values are parsed with the key's type."""
        if key not in KEY_SECTION:
            raise ConfigFileError(f"unknown key {key!r}", source)
        if isinstance(value, str):
            try:
                value = parse_value(key, value)
            except ValueError as exc:
                raise ConfigFileError(f"{key}: {exc}", source) from None
        self.values[key] = value

    def copy(self):
        return RunConfig(dict(self.values))

    def encoder_configs(self):
        v = self.values
        ps, ds, seeds = v["patch_sizes"], v["depths"], v["seeds"]
        if not (len(ps) == len(ds) == len(seeds)) or not ps:
            raise ConfigError("patch_sizes, depths and seeds must have the same non-zero length")
        return [EncoderConfig(v["image_size"], p, d, v["embed_dim"], v["num_heads"], s)
                for p, d, s in zip(ps, ds, seeds)]

    def attack_config(self):
        v = self.values
        if v["seed"] is None:
            raise ConfigError("an attack seed is required (--seed)")
        return AttackConfig(
            epsilon=v["epsilon"], eta=v["eta"], T=v["T"], M=v["M"],
            resolutions=v["resolutions"], ranks=v["ranks"], gamma=v["gamma"],
            weights=LossWeights(v["lambda_cls"], v["lambda_patch"]),
            crop_enabled=v["crop_enabled"],
            crop_scale_range=(v["crop_scale_min"], v["crop_scale_max"]),
            seed=v["seed"], sign_mode=v["sign_mode"], interp_down=v["interp_down"],
            interp_up=v["interp_up"], patch_mode=v["patch_mode"],
        )


def parse_config(text, path=None):
    cfg = RunConfig.defaults()
    section = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            if section not in SCHEMA:
                raise ConfigFileError(f"unknown section [{section}]", path, lineno)
            continue
        m = _ENTRY.match(line)
        if not m:
            raise ConfigFileError(f"expected 'key = value', got {raw!r}", path, lineno)
        if section is None:
            raise ConfigFileError("entry before any [section] header", path, lineno)
        key, value = m.group(1), m.group(2).split("#", 1)[0].strip()
        if key not in SCHEMA[section]:
            raise ConfigFileError(f"unknown key {key!r} in [{section}]", path, lineno)
        if key in seen:
            raise ConfigFileError(f"duplicate key {key!r}", path, lineno)
        seen.add(key)
        try:
            cfg.values[key] = parse_value(key, value)
        except ValueError as exc:
            raise ConfigFileError(f"{key}: {exc}", path, lineno) from None
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config ({exc.strerror})", path) from None
    return parse_config(text, path)


def render_config(cfg):
    """Serialise ``cfg`` back to the file format (round-trips through parse_config)."""
    def fmt(v):
        if v is None:
            return "none"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (tuple, list)):
            return ", ".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {fmt(cfg.values[k])}" for k in keys)
        lines.append("")
    return "\n".join(lines)
