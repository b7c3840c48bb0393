"""Turn negative customer reviews into ranked, judged business advice."""

from __future__ import annotations

from .config import RunConfig, load_config
from .orchestrator import RunReport, compare_runs, resume, run_pipeline

__version__ = "0.1.0"

__all__ = ["RunConfig", "RunReport", "compare_runs", "load_config", "resume", "run_pipeline", "__version__"]
