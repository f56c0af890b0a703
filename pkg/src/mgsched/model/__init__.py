from .build import (BuildConfig, BuildResult, Schedule, ScheduleError,
                    ambiguity_from_case, assemble, coverage_report,
                    extract_schedule, linearize_bilinear, write_manifest,
                    COVERAGE_TAGS)
from .index import DecisionIndex

__all__ = [
    "BuildConfig", "BuildResult", "Schedule", "ScheduleError",
    "ambiguity_from_case", "assemble", "coverage_report",
    "extract_schedule", "linearize_bilinear", "write_manifest",
    "COVERAGE_TAGS", "DecisionIndex",
]
