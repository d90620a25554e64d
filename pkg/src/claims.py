"""
宣告開關與上限 (Claim Toggles and Ceilings)

Reads config/claims.json (which claims run by default) and
config/ceilings.json (the golden ceiling per claim). A claim missing from the
toggle file is treated as disabled.
"""

import json
import os

from container import dump_json, write_text_atomic
from errors import InvalidConfig
from utils.log import add_log

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")
DEFAULT_CLAIMS_FILE = os.path.join(CONFIG_DIR, "claims.json")
DEFAULT_CEILINGS_FILE = os.path.join(CONFIG_DIR, "ceilings.json")
DEFAULT_UNIFORMITY = 2.0
FROZEN_PREFIX = "frozen from config"


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        add_log("warning", f"config file not found: {path}", "system")
        return None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path} must hold a JSON object")
    return data


# ===== 宣告開關 (Claim toggles) =====

def load_toggles(path=None):
    return _read_json(path or DEFAULT_CLAIMS_FILE) or {}


def is_claim_enabled(name, toggles=None):
    toggles = load_toggles() if toggles is None else toggles
    # missing means disabled
    return toggles.get(name, False) is True


def select_claims(registry, requested=None, toggles_path=None):
    """
    The claims to run, in registry order. An explicit ``requested`` list
    overrides the toggle file; unknown names are a config error.
    """
    if requested:
        names = [n.strip() for n in requested if n and n.strip()]
        unknown = sorted(set(names) - set(registry))
        if unknown:
            raise InvalidConfig(f"unknown claims: {', '.join(unknown)}", unknown=unknown)
        return [n for n in registry if n in names]
    toggles = load_toggles(toggles_path)
    return [n for n in registry if is_claim_enabled(n, toggles)]


# ===== 黃金上限 (Golden ceilings) =====

def load_ceilings(path=None):
    """(ceilings by claim, uniformity factor); an absent file means registry defaults."""
    data = _read_json(path or DEFAULT_CEILINGS_FILE) or {}
    raw = data.get("ceilings", {})
    if not isinstance(raw, dict):
        raise InvalidConfig("'ceilings' must map claim names to numbers")
    try:
        ceilings = {str(k): float(v) for k, v in raw.items()}
        factor = float(data.get("uniformity_factor", DEFAULT_UNIFORMITY))
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"ceiling values must be numbers: {exc}") from exc
    return ceilings, factor


def apply_overrides(ceilings, factor, overrides, registry):
    """Apply ``name=value`` tolerance overrides; ``uniformity`` sets the factor."""
    ceilings = dict(ceilings)
    for item in overrides or ():
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep:
            raise InvalidConfig(f"tolerance override must be name=value, got {item!r}")
        try:
            number = float(value)
        except ValueError as exc:
            raise InvalidConfig(f"tolerance {name} is not a number: {value!r}") from exc
        if name == "uniformity":
            factor = number
        elif name in registry:
            ceilings[name] = number
        else:
            raise InvalidConfig(f"unknown tolerance name {name!r}", name=name)
    return ceilings, factor


def write_ceilings(path, ceilings, factor, provenance):
    payload = {
        "ceilings": dict(sorted(ceilings.items())),
        "uniformity_factor": factor,
        "provenance": provenance,
    }
    write_text_atomic(path, dump_json(payload))
    add_log("success", f"froze {len(ceilings)} ceilings to {path}", "io")


def load_provenance(path=None):
    data = _read_json(path or DEFAULT_CEILINGS_FILE) or {}
    return str(data.get("provenance", ""))


def is_frozen(provenance):
    return provenance.startswith(FROZEN_PREFIX)


def freeze_into(path, frozen, factor, config_hash):
    """
    Write frozen ceilings to ``path``. An earlier freeze in the same file is
    merged by taking the larger ceiling, so d=1 and d=2 reference runs combine.
    """
    previous, _ = load_ceilings(path)
    prior = load_provenance(path)
    merged = dict(previous)
    if is_frozen(prior):
        for name, value in frozen.items():
            merged[name] = max(value, previous.get(name, 0.0))
        provenance = f"{prior}, {config_hash}"
    else:
        merged.update(frozen)
        provenance = f"{FROZEN_PREFIX} {config_hash}"
    write_ceilings(path, merged, factor, provenance)
    return merged
