"""Stacked multichannel autoencoder for bridging the gap between synthetic
and real feature distributions, with a synthetic-digit generator and the
evaluation harness for the handwritten-digit and photo/sketch experiments."""

__version__ = "0.1.0"

from .channel import (ChannelParams, SparsityConfig, channel_gradient,
                      channel_objective, decode, encode, kl_sparsity,
                      mean_activations, sigmoid, weight_decay)
from .hog import FeatureScaler, HogConfig, hog, hog_length, hog_stack, resize
from .metrics import MetricReport, f1_score, rank1, roc_and_auc, roc_curve, vr_at_far
from .model import (SMCAE, SmcaeConfig, SmcaeLayer, SmcaeModel, Variant,
                    build_variant, fine_tune, load_model, save_model,
                    smcae_gradient, smcae_objective, train_layer, train_stack,
                    transform, unrolled_objective)
from .optim import (LbfgsOptions, MinimizeResult, NonFiniteError, check_gradient,
                    finite_diff, minimize)
from .shapes import (MatchResult, ShapeDistribution, ShapeModel, binarize,
                     build_prototype, distance_transform, extract_control_points,
                     fit_mvn, iou, match_synthetic, optimize_control_points,
                     rasterize, sample_shapes, shape_from_text, shape_to_text,
                     trace_contours)
from .svm import (RbfSvm, SvmModel, cross_validate, max_kkt_violation, rbf_kernel,
                  svm_predict, svm_train)

__all__ = [name for name in dir() if not name.startswith("_")]
