from .pipeline import (
    POLICIES,
    CycleReport,
    PipelineConfig,
    arrival_cycles,
    schedule,
    verify_hazard_safety,
)
from .resources import REPORTED_FPGA, LayerResources, ResourceEstimate, estimate_resources

__all__ = [
    "POLICIES", "CycleReport", "PipelineConfig", "arrival_cycles", "schedule",
    "verify_hazard_safety", "REPORTED_FPGA", "LayerResources", "ResourceEstimate",
    "estimate_resources",
]
