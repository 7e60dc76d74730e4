"""Video object segmentation with motion as an optional input."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (Sample, TrainingBatch, VideoSequence, load_sod_dataset,
                   load_vos_dataset, resize_sample, sample_training_batch)
from .flow import FlowField, corrupt_flow, flow_to_rgb, pair_frames, read_flo, write_flo
from .metrics import EvalReport, boundary_f, evaluate_dataset, jaccard
from .network import MotionOptionNet, NetworkConfig, fuse
from .selection import (PredictionOutput, SelectionLog, confidence_map,
                        confidence_score, foreground_map, fuse_baseline,
                        infer_sequence, quantize, select_output, tta_infer)
from .synthetic import SynthConfig, generate_synthetic_dataset
from .training import TrainConfig, cross_entropy_loss, freeze_normalization, train, train_step

__version__ = "0.1.0"

__all__ = [
    "FlowField", "pair_frames", "read_flo", "write_flo", "flow_to_rgb", "corrupt_flow",
    "Sample", "VideoSequence", "TrainingBatch", "load_vos_dataset", "load_sod_dataset",
    "resize_sample", "sample_training_batch",
    "SynthConfig", "generate_synthetic_dataset",
    "MotionOptionNet", "NetworkConfig", "fuse",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "train", "train_step", "cross_entropy_loss", "freeze_normalization",
    "PredictionOutput", "SelectionLog", "foreground_map", "confidence_map",
    "confidence_score", "quantize", "select_output", "fuse_baseline", "tta_infer",
    "infer_sequence",
    "jaccard", "boundary_f", "evaluate_dataset", "EvalReport",
]
