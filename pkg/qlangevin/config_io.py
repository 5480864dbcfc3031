"""Flat `key = value` configuration files, environment overrides and the figure presets."""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from schemas.config import RunConfig

from .errors import ConfigError

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).parent.parent
DEFAULT_PRESETS_DIR = PROJECT_ROOT / "presets"
PRESET_SUFFIX = ".cfg"


def _split_lines(text: str) -> Tuple[Dict[str, str], Dict[str, int]]:
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=number)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=number)
        values[key] = value
        lines[key] = number
    return values, lines


def _nest(values: Dict[str, str], lines: Dict[str, int]) -> Dict[str, Any]:
    tree: Dict[str, Any] = {}
    for key, value in values.items():
        node = tree
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("key is both a value and a section", key=key, line=lines[key])
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError("key is both a value and a section", key=key, line=lines[key])
        node[leaf] = value
    return tree


def _line_for(loc: str, lines: Dict[str, int]) -> Optional[int]:
    if loc in lines:
        return lines[loc]
    matches = [n for key, n in lines.items() if key.startswith(loc + ".")]
    return min(matches) if matches else None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config; every error names the offending key and its line."""
    values, lines = _split_lines(text)
    try:
        return RunConfig.model_validate(_nest(values, lines))
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        if first["type"] == "extra_forbidden":
            message = "unknown key"
        else:
            message = first["msg"]
            if "input" in first and not isinstance(first["input"], dict):
                message += f" (got {first['input']!r})"
        raise ConfigError(message, key=loc or None, line=_line_for(loc, lines)) from exc


def _flatten(prefix: str, data: Dict[str, Any], out: List[str]) -> None:
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            _flatten(name + ".", value, out)
        elif isinstance(value, bool):
            out.append(f"{name} = {'true' if value else 'false'}")
        elif isinstance(value, float):
            out.append(f"{name} = {value!r}")
        else:
            out.append(f"{name} = {value}")


def serialize_config(config: RunConfig) -> str:
    """Inverse of parse_config: every set value as a `key = value` line."""
    out: List[str] = []
    _flatten("", config.model_dump(exclude_none=True), out)
    return "\n".join(out) + "\n"


def env_truthy(name: str, default: str = "0") -> bool:
    return os.getenv(name, default) not in {"0", "false", "False", "no", "NO"}


def apply_env_overrides(config: RunConfig) -> RunConfig:
    """QLANGEVIN_SEED and QLANGEVIN_WORKERS take precedence over the file."""
    update: Dict[str, Any] = {}
    for env, key in (("QLANGEVIN_SEED", "seed"), ("QLANGEVIN_WORKERS", "workers")):
        raw = os.getenv(env)
        if raw is None or not raw.strip():
            continue
        update[key] = raw.strip()
    if not update:
        return config
    merged = {**config.run.model_dump(exclude_none=True), **update}
    try:
        run = type(config.run).model_validate(merged)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"{first['msg']} (from environment)", key=f"run.{first['loc'][0]}") from exc
    logger.info("environment overrides: %s", ", ".join(f"run.{k}={v}" for k, v in update.items()))
    return config.model_copy(update={"run": run})


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def presets_dir() -> Path:
    override = os.getenv("QLANGEVIN_PRESETS_DIR")
    if override:
        path = Path(override)
        return path if path.is_absolute() else PROJECT_ROOT / path
    return DEFAULT_PRESETS_DIR


def load_presets_with_manifest(directory: Optional[Path] = None) -> Tuple[Dict[str, RunConfig], Dict[str, Any]]:
    """Parse every preset file; the manifest records which ones loaded and why others did not."""
    directory = Path(directory) if directory is not None else presets_dir()
    manifest: Dict[str, Any] = {"directory": str(directory), "files": [], "loaded": 0}
    presets: Dict[str, RunConfig] = {}
    if not directory.exists():
        return presets, manifest

    for cfg_file in sorted(directory.glob(f"*{PRESET_SUFFIX}")):
        entry: Dict[str, Any] = {"file": cfg_file.name, "name": cfg_file.stem, "status": "loaded"}
        try:
            presets[cfg_file.stem] = parse_config(cfg_file.read_text(encoding="utf-8"))
            entry["mode"] = presets[cfg_file.stem].mode
        except (ConfigError, OSError) as exc:
            entry["status"] = "error"
            entry["error"] = str(exc)
            logger.warning("preset %s failed to load: %s", cfg_file.name, exc)
        manifest["files"].append(entry)
    manifest["loaded"] = len(presets)
    return presets, manifest


def list_presets(directory: Optional[Path] = None) -> List[str]:
    presets, _ = load_presets_with_manifest(directory)
    return sorted(presets, key=_preset_sort_key)


def _preset_sort_key(name: str):
    head, _, tail = name.partition(".")
    return (head, int(tail) if tail.isdigit() else tail)


def preset(name: str, directory: Optional[Path] = None) -> RunConfig:
    presets, _ = load_presets_with_manifest(directory)
    if name not in presets:
        available = ", ".join(sorted(presets, key=_preset_sort_key)) or "(none found)"
        raise ConfigError(f"unknown preset; available: {available}", key=name)
    return presets[name]


def format_presets_manifest(manifest: Dict[str, Any]) -> str:
    lines = [f'Presets directory: {manifest.get("directory")}', f'Loaded: {manifest.get("loaded")}', "", "Files:"]
    for f in manifest.get("files", []):
        if f.get("status") == "error":
            lines.append(f"- {f.get('file')}: ERROR ({f.get('error')})")
        else:
            lines.append(f"- {f.get('name')}: {f.get('mode')}")
    return "\n".join(lines)
