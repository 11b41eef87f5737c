"""Patient trajectories: data model, CSV ingestion, windowing pipeline, synthetic cohorts."""
from .ingest import IngestReport, RawRecord, Schema, ingest_csv
from .model import (
    FORMAT_VERSION,
    Cohort,
    Episode,
    Step,
    make_steps,
    read_cohort,
    validate_cohort,
    validate_episode,
    write_cohort,
)
from .pipeline import (
    DEFAULT_MAX_LEN,
    PatientGrid,
    build_cohort,
    exclude_and_assemble,
    impute,
    impute_series,
    segment_long,
    split,
    windowize,
)
from .synth import GroundTruthPolicy, SynthParams, synth_cohort

__all__ = [
    "FORMAT_VERSION", "Cohort", "Episode", "Step", "RawRecord", "Schema", "IngestReport",
    "PatientGrid", "GroundTruthPolicy", "SynthParams", "DEFAULT_MAX_LEN",
    "ingest_csv", "windowize", "impute", "impute_series", "exclude_and_assemble",
    "segment_long", "split", "build_cohort", "synth_cohort", "make_steps",
    "read_cohort", "write_cohort", "validate_cohort", "validate_episode",
]
