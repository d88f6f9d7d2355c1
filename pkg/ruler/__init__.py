"""
RULER: representation-level verification of machine unlearning.

Audits an unlearned classifier through its penultimate-layer embeddings:

- Lens 1 compares forget-set embeddings with a retrained oracle (M1, M2, M3)
- Lens 2 ranks each forgotten record's nearest-retain similarity (M4)
- Output metrics (threshold MIA, accuracies) give the conventional view

Results are pooled across datasets with a random-intercept mixed model and
the Wilcoxon signed-rank test.
"""

from ruler.core.config import RulerConfig
from ruler.core.errors import RulerError
from ruler.pipeline.aggregate import StatReport
from ruler.pipeline.cells import MetricRecord
from ruler.pipeline.runner import run_pipeline
from ruler.pipeline.verify import verify_embeddings, verify_external

__version__ = "1.0.0"
__author__ = "RULER Team"

__all__ = [
    "RulerConfig",
    "RulerError",
    "StatReport",
    "MetricRecord",
    "run_pipeline",
    "verify_embeddings",
    "verify_external",
]
