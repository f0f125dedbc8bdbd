"""Adversarial attacks and robustness evaluation for dense networks."""

from .archive import AdversarialArchive, load_archive, save_archive
from .attacks import (
    ATTACK_NAMES,
    AttackConfig,
    AttackOutcome,
    bim,
    cw,
    default_config,
    eotpgd,
    ffgsm,
    fgsm,
    finalize_return,
    mifgsm,
    pgd_l2,
    pgd_linf,
    resolve_targets,
    rfgsm,
    run_attack,
    tpgd,
)
from .data import DatasetSource, generate_blobs, load_idx
from .errors import FileFormatError
from .evaluate import RobustnessReport, evaluate
from .model import (
    CrossEntropyLoss,
    CWObjective,
    DenseNetwork,
    KLVsReference,
    Layer,
    RandomizedModel,
    finite_difference_check,
    forward,
    init_network,
    input_gradient,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_sgd,
)
from .multiattack import MultiAttackPlan, multi_attack
from .ops import AdamState, ExampleBatch, LabelBatch, finite_difference_gradient

__all__ = [
    "ATTACK_NAMES",
    "AdamState",
    "AdversarialArchive",
    "AttackConfig",
    "AttackOutcome",
    "CWObjective",
    "CrossEntropyLoss",
    "DatasetSource",
    "DenseNetwork",
    "ExampleBatch",
    "FileFormatError",
    "KLVsReference",
    "LabelBatch",
    "Layer",
    "MultiAttackPlan",
    "RandomizedModel",
    "RobustnessReport",
    "bim",
    "cw",
    "default_config",
    "eotpgd",
    "evaluate",
    "ffgsm",
    "fgsm",
    "finalize_return",
    "finite_difference_check",
    "finite_difference_gradient",
    "forward",
    "generate_blobs",
    "init_network",
    "input_gradient",
    "load_archive",
    "load_checkpoint",
    "load_idx",
    "mifgsm",
    "multi_attack",
    "pgd_l2",
    "pgd_linf",
    "predict",
    "resolve_targets",
    "rfgsm",
    "run_attack",
    "save_archive",
    "save_checkpoint",
    "tpgd",
    "train_sgd",
]

__version__ = "0.1.0"
