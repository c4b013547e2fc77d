"""Run identifiers and metadata sidecars."""
from __future__ import annotations

import json
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict

import numpy as np
import scipy

from .config import APP_VERSION


def generate_operation_id(prefix: str = "run") -> str:
    """Generate a sortable operation identifier."""

    ts = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S-%f")
    return f"{prefix}-{ts}"


def environment_info() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def sidecar_path(csv_path: Path) -> Path:
    """``results.csv`` -> ``results.meta.json``."""

    return csv_path.with_suffix(".meta.json")


def write_manifest(csv_path: Path, operation_id: str, payload: Dict[str, Any]) -> Path:
    """Persist the metadata record that sits next to a results CSV."""

    manifest_path = sidecar_path(csv_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "op_id": operation_id,
        "app_version": APP_VERSION,
        "written_at": datetime.now(timezone.utc).isoformat(),
        "results_file": csv_path.name,
        "environment": environment_info(),
        **payload,
    }
    manifest_path.write_text(json.dumps(document, indent=2, ensure_ascii=False, default=str), encoding="utf-8")
    return manifest_path
