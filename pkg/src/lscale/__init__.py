"""Latent-space clustering active learning for node classification."""
from .classifier import (ClassifierModel, TrainConfig, forward, gradients, init_model,
                         load_model, loss, objective, predict_labels, save_model, train)
from .cluster import ClusteringResult, incremental_kmedoids, incremental_search, kmedoids
from .features import FeatureProvider, load_embeddings, normalized_adjacency, propagate_features
from .graph import (DataSplit, DatasetError, Graph, LabelSet, load_dataset, make_split,
                    read_matrix, write_dataset, write_matrix)
from .harness import (ExperimentConfig, ExperimentReport, LabelOracle, Record, ReportError,
                      StateError, aggregate, evaluate_accuracy, read_report, resume,
                      run_experiment, write_report)
from .latent import (LatentSpace, alpha_schedule, build_latent_space, distance,
                     l2_normalize_rows, pairwise_distances)
from .strategies import PoolState, SelectionContext, Strategy, entropy, select

__version__ = "0.1.0"
