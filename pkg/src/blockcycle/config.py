"""Flat ``key = value`` campaign configuration files.

One setting per line, ``#`` starts a comment, lists are comma separated and
``length_sets`` groups are separated by ``;``::

    experiment = fig1a
    seed       = 20240601
    lengths    = 200            # blocks per cycle
    d_values   = 250, 500       # neurons per block
    p_values   = 0.1, 0.3       # flip probability
    trials     = 50
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .experiments import CampaignConfig, ConfigError, config_from_mapping


def parse_config_text(text: str, source: str = "<config>") -> CampaignConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        raw[key] = value.strip()
    return config_from_mapping(raw, source)


def load_config(path: str | Path) -> tuple[CampaignConfig, str]:
    """Parse a config file; also return the sha256 digest of its bytes."""
    data = Path(path).read_bytes()
    return parse_config_text(data.decode("utf-8"), str(path)), hashlib.sha256(data).hexdigest()


def dump_config(cfg: CampaignConfig) -> str:
    """Render a config back into the file format (round-trips through ``parse_config_text``)."""
    lines = []
    for key, val in cfg.as_dict().items():
        if val is None:
            continue
        if key == "length_sets":
            text = "; ".join(",".join(map(str, grp)) for grp in val)
        elif isinstance(val, (tuple, list)):
            text = ", ".join(map(str, val))
        else:
            text = str(val)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
