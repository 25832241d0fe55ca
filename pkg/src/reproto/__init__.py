"""Repulsive class prototypes for adversarial robustness, at desk scale."""
from .geometry import (Metric, clamp_domain, distance, distance_gradient,
                       pairwise_distances, project_ball)
from .prototypes import (PrototypeSet, SeparationStats, build_prototypes, init_prototypes,
                         load_prototypes, optimize_prototypes, repulsion_objective,
                         save_prototypes, separation_stats)
from .model import (GradientBundle, LossMode, Mlp, backward, classify_prototype,
                    classify_softmax, forward, load_model, mixed_loss, proto_loss,
                    save_model, softmax_xent)
from .attacks import AdvResult, AttackConfig, Init, Surrogate, fgsm, pgd, surrogate_loss
from .data import Dataset, augment, gen_gaussians, gen_spirals, load_csv_dataset, save_csv_dataset, split
from .training import (AdversarialTraining, Constant, Cyclical, EarlyStop, MultiStep, Repulsive,
                       Softmax, TrainConfig, TrainHistory, evaluate_robust_checkpoint, lr_at, train)
from .evaluation import (ConfusionMatrix, EnclosureStats, RobustnessCurve, accuracy,
                         adv_confusion, confusion_matrix, enclosure_stats, misclass_overlap,
                         nearest_in_predicted_class, robust_accuracy, robustness_curve,
                         top_m_agreement, transfer_eval)

__version__ = "0.1.0"
