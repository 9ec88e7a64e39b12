from .records import (
    EegRecord,
    PartRange,
    RecordParts,
    Segment,
    PART_ORDER,
    load_record,
    resample_to_256,
    partition,
    windows,
)
from .splits import SplitPlan, FoldSpec, split_patients
from .synth import SynthParams, generate_corpus, generate_record

__all__ = [
    "EegRecord",
    "PartRange",
    "RecordParts",
    "Segment",
    "PART_ORDER",
    "load_record",
    "resample_to_256",
    "partition",
    "windows",
    "SplitPlan",
    "FoldSpec",
    "split_patients",
    "SynthParams",
    "generate_corpus",
    "generate_record",
]
