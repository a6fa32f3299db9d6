"""
Run manifests for coincert outputs.

Every file the CLI writes either embeds its manifest (JSON outputs) or gets a
`<file>.manifest.json` sidecar (CSV outputs). The manifest holds the command,
the resolved parameter set including the seed, the config file and the tool
version, plus the command line that re-runs it. Manifests carry no timestamps
so reruns are byte-identical.
"""

from __future__ import annotations

import json
import logging
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

logger = logging.getLogger(__name__)

TOOL_NAME = "coincert"
TOOL_VERSION = "0.1.0"


def _plain(value: Any) -> Any:
    """Coerce Paths, enums, tuples and numpy scalars into JSON-friendly values."""
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if hasattr(value, "tolist"):
        return value.tolist()
    return value


@dataclass
class RunManifest:
    """
    Provenance of one CLI run.

    Attributes:
        command: Subcommand name (e.g. "simulate").
        params: Every command-line parameter after defaults and config were
            applied, keyed by argparse destination.
        seed: Effective seed.
        version: Tool version that produced the outputs.
        outputs: Files written by the run.
        positionals: Keys of `params` that are positional arguments, in order.
        config: Parameter file the run was configured from, if any.
        settings: Resolved values that come only from the parameter file.
    """
    command: str
    params: Dict[str, Any]
    seed: Optional[int] = None
    version: str = TOOL_VERSION
    outputs: List[str] = field(default_factory=list)
    positionals: Tuple[str, ...] = ()
    config: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict)

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs.append(str(path))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": TOOL_NAME,
            "version": self.version,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "params": _plain(dict(sorted(self.params.items()))),
            "settings": _plain(dict(sorted(self.settings.items()))),
            "outputs": list(self.outputs),
            "rerun": self.rerun_command(),
        }

    def rerun_command(self) -> str:
        """Shell command line that reproduces the run."""
        parts = ["python", "scripts/coincert.py"]
        if self.config:
            parts += ["--config", shlex.quote(self.config)]
        parts.append(self.command)
        parts += [shlex.quote(str(_plain(self.params[key]))) for key in self.positionals]
        for key, value in sorted(self.params.items()):
            if key in self.positionals or value is None or value is False:
                continue
            flag = "--" + key.replace("_", "-")
            if value is True:
                parts.append(flag)
            elif isinstance(value, (list, tuple)):
                parts += [flag] + [shlex.quote(str(v)) for v in _plain(value)]
            else:
                parts += [flag, shlex.quote(str(_plain(value)))]
        return " ".join(parts)


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + ".manifest.json")


def write_manifest_sidecar(output_path: Union[str, Path], manifest: RunManifest) -> Path:
    """Write `<output>.manifest.json` next to a CSV output."""
    target = sidecar_path(output_path)
    with open(target, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
        f.write("\n")
    logger.debug(f"Wrote manifest sidecar {target}")
    return target


def write_json_with_manifest(path: Union[str, Path], payload: Dict[str, Any], manifest: RunManifest) -> Path:
    """Write a JSON output with its manifest embedded under "manifest"."""
    path = Path(path)
    manifest.add_output(path)
    data = dict(_plain(payload))
    data["manifest"] = manifest.to_dict()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    logger.info(f"Wrote {path}")
    return path
