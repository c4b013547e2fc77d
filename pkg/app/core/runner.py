"""High level sweep orchestration: run, persist, describe."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import RunConfig
from .device import DeviceParams, derive
from .experiments import (
    ExperimentSettings,
    heatmap_points,
    run_cat_sweep,
    run_gate_heatmap,
    run_gate_sweep,
    validate_effective,
)
from .logging_util import log_event
from .results import SCHEMAS, plot_rows, to_rows, write_csv
from .versioning import generate_operation_id, write_manifest

RESULT_NAMES: Dict[str, str] = {
    "gate": "gate_sweep",
    "heatmap": "gate_heatmap",
    "cat": "cat_sweep",
    "validate": "validate_effective",
}


@dataclass(frozen=True)
class RunOutcome:
    operation_id: str
    experiment: str
    csv_path: Path
    manifest_path: Path
    plot_path: Optional[Path]
    rows: List[Dict[str, object]]
    failed_rows: int
    wall_seconds: float
    extra: Dict[str, object]

    @property
    def ok(self) -> bool:
        return self.failed_rows == 0


class SweepRunner:
    """Coordinate one experiment run: sweep, CSV, metadata sidecar, optional figure."""

    def __init__(
        self,
        config: RunConfig,
        *,
        out_dir: Path,
        workers: int = 1,
        plot: bool = False,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.config = config
        self.out_dir = out_dir
        self.workers = workers
        self.plot = plot
        self.logger = logger or logging.getLogger("qutrit_kerr.runner")
        self._extra: Dict[str, object] = {}

    # ------------------------------------------------------------------
    # Utility helpers
    # ------------------------------------------------------------------
    @property
    def settings(self) -> ExperimentSettings:
        return ExperimentSettings(
            dim_a=self.config.dim_a,
            dim_b=self.config.dim_b,
            dim_cat=self.config.dim_cat,
            dt_us=self.config.dt_us,
            monitor_every=self.config.monitor_every,
        )

    def csv_path(self, experiment: str) -> Path:
        return self.out_dir / f"{RESULT_NAMES[experiment]}.csv"

    def _persist_manifest(self, csv_path: Path, operation_id: str, payload: Dict[str, object]) -> Path:
        manifest_path = write_manifest(csv_path, operation_id, payload)
        self.logger.info("Manifest written to %s", manifest_path)
        return manifest_path

    def _base_params(self, *, lossy: bool = True) -> DeviceParams:
        return self.config.device_params(lossy=lossy)

    def _warn_regime(self, operation_id: str) -> None:
        for message in derive(self._base_params(lossy=False)).warnings:
            self.logger.warning("Regime check: %s", message)
            log_event(self.logger, "regime_warning", operation_id=operation_id, message=message)

    # ------------------------------------------------------------------
    # Experiments
    # ------------------------------------------------------------------
    def _gate(self) -> Sequence[object]:
        return run_gate_sweep(
            self._base_params(), self.config.delta_b_list_ghz, settings=self.settings, workers=self.workers
        )

    def _heatmap(self) -> Sequence[object]:
        points = heatmap_points(self.config.gamma_list_us or None, self.config.eta_list_us or None)
        return run_gate_heatmap(
            self._base_params(),
            points,
            delta_b=self.config.delta_b_ghz,
            settings=self.settings,
            workers=self.workers,
        )

    def _cat(self) -> Sequence[object]:
        return run_cat_sweep(
            self._base_params(),
            self.config.d_list or None,
            self.config.m_list,
            alpha_a=self.config.alpha_a,
            beta_b=self.config.beta_b,
            settings=self.settings,
            workers=self.workers,
        )

    def _validate(self) -> Sequence[object]:
        report = validate_effective(
            self._base_params(lossy=False),
            sector=self.config.sector,
            scales=self.config.scales,
            settings=self.settings,
        )
        self._extra = {
            "window_us": report.window_us,
            "kerr_reference_deviation": report.kerr_reference_deviation,
        }
        return report.rows

    def run(self, experiment: str) -> RunOutcome:
        """Run ``experiment`` and persist its CSV; failed points stay in the table."""

        operation_id = generate_operation_id(experiment)
        csv_path = self.csv_path(experiment)
        self._extra = {}
        started = time.perf_counter()
        log_event(
            self.logger,
            "run_started",
            operation_id=operation_id,
            experiment=experiment,
            workers=self.workers,
            out_dir=str(self.out_dir),
        )

        try:
            self._warn_regime(operation_id)
            records = {
                "gate": self._gate,
                "heatmap": self._heatmap,
                "cat": self._cat,
                "validate": self._validate,
            }[experiment]()
        except Exception as exc:
            manifest = self._persist_manifest(
                csv_path,
                operation_id,
                {
                    "experiment": experiment,
                    "config": self.config.as_dict(),
                    "status": "error",
                    "error": str(exc),
                    "wall_seconds": time.perf_counter() - started,
                },
            )
            log_event(
                self.logger,
                "run_failed",
                operation_id=operation_id,
                error=str(exc),
                manifest=str(manifest),
            )
            raise

        rows = to_rows(experiment, records)
        failed = 0
        for row in rows:
            status = str(row.get("status", "ok"))
            if status != "ok":
                failed += 1
                log_event(self.logger, "sweep_point_failed", operation_id=operation_id, **row)
            elif experiment != "validate":
                log_event(self.logger, "sweep_point_completed", operation_id=operation_id, **row)

        columns, _ = SCHEMAS[experiment]
        write_csv(csv_path, columns, rows)
        log_event(self.logger, "csv_written", operation_id=operation_id, path=str(csv_path), rows=len(rows))

        plot_path = None
        if self.plot:
            plot_path = plot_rows(experiment, rows, csv_path.with_suffix(".svg"))
            if plot_path is not None:
                log_event(self.logger, "plot_written", operation_id=operation_id, path=str(plot_path))

        wall = time.perf_counter() - started
        manifest = self._persist_manifest(
            csv_path,
            operation_id,
            {
                "experiment": experiment,
                "config": self.config.as_dict(),
                "workers": self.workers,
                "status": "ok" if failed == 0 else "failed_rows",
                "rows": len(rows),
                "failed_rows": failed,
                "wall_seconds": wall,
                **self._extra,
            },
        )
        log_event(
            self.logger,
            "run_completed",
            operation_id=operation_id,
            experiment=experiment,
            rows=len(rows),
            failed_rows=failed,
            wall_seconds=wall,
            manifest=str(manifest),
        )
        return RunOutcome(
            operation_id=operation_id,
            experiment=experiment,
            csv_path=csv_path,
            manifest_path=manifest,
            plot_path=plot_path,
            rows=rows,
            failed_rows=failed,
            wall_seconds=wall,
            extra=dict(self._extra),
        )
