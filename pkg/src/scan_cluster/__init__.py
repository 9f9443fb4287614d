"""Semantic clustering of precomputed embeddings.

Mine nearest neighbors in embedding space, train a softmax clustering head
that makes neighbors agree while keeping clusters balanced, then refine it
on its own confident predictions.
"""

from .core import EmbeddingDataset, EvalReport, NeighborIndex, OptimizerConfig, TrainConfig, seed_rng, softmax
from .embio import (SynthConfig, generate_synthetic, preset, read_dataset, read_neighbors,
                    write_dataset, write_neighbors)
from .head import ClusterHead
from .kmeans import kmeans
from .knn import inject_neighbor_noise, mine_neighbors, neighbor_purity, remove_false_positives
from .metrics import accuracy, ari, confusion_matrix, hungarian, nmi
from .pipeline import run_pipeline, run_sweep
from .reports import evaluate, low_confidence_report, prototypes
from .selflabel import SelfLabelConfig, select_confident, self_label_train, weighted_ce_loss
from .state import TrainState, read_state, write_state
from .trainer import LossBreakdown, ScanBatch, scan_loss, scan_loss_grad, train_clustering

__version__ = "0.1.0"
