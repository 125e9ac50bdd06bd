"""Printed math expression recognition with a dual-branch encoder and dynamic soft targets."""
from .checkpoint import load_model, save_model
from .data import ExprSample, default_vocabulary, generate, load_dataset
from .metrics import corpus_report
from .model import DBN, ModelConfig
from .segmentation import segment
from .trainer import TrainConfig, Trainer, evaluate, run_ablation

__version__ = "0.1.0"

__all__ = [
    "DBN", "ExprSample", "ModelConfig", "TrainConfig", "Trainer", "corpus_report",
    "default_vocabulary", "evaluate", "generate", "load_dataset", "load_model",
    "run_ablation", "save_model", "segment",
]
