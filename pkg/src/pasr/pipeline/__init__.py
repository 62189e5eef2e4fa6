from .dataset import (CheckIn, CheckInDataset, DatasetError, filter_dataset, format_summary,
                      ingest, parse_lines, write_checkins)
from .sequences import EvalSplit, Prepared, TrainingSequences, build_sequences
from .synthetic import SyntheticSpec, generate_synthetic
from .training import SequenceBatch, TrainingDiverged, TrainResult, train

__all__ = [
    "CheckIn", "CheckInDataset", "DatasetError", "EvalSplit", "Prepared", "SequenceBatch",
    "SyntheticSpec", "TrainResult", "TrainingDiverged", "TrainingSequences", "build_sequences",
    "filter_dataset", "format_summary", "generate_synthetic", "ingest", "parse_lines", "train",
    "write_checkins",
]
