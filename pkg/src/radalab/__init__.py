"""Desk-scale adversarial domain adaptation laboratory.

Trains a feature extractor against a domain discriminator on synthetic
domain-shifted data, with the RADA strategy: once the discriminator's
mean prediction entropy plateaus, target samples it can no longer tell
apart from source are relabeled as source on the fly, re-energizing the
adversarial game. Ships its own reverse-mode autodiff core, full
instrumentation (domain entropy, MMD, target accuracy) and a
deterministic, resumable training harness.
"""

from .autodiff import SgdMomentum, Tensor, backward, grad_reverse, no_grad
from .datasets import (
    SOURCE, TARGET, Batch, Dataset, generate_blobs, generate_moons,
    make_batches, read_dataset, write_dataset,
)
from .diagnostics import (
    MetricsRow, MmdConfig, extract_features, mean_domain_entropy, mmd,
    target_accuracy,
)
from .harness import (
    Checkpoint, RunConfig, RunResult, format_config, load_checkpoint,
    parse_config, parse_config_text, run_training, save_checkpoint,
)
from .losses import (
    LossConfig, adversarial_loss, classification_loss, object_entropy,
    sample_weights,
)
from .models import (
    ModelBundle, cdan_condition, classify, discriminate, feature_extract,
)
from .rada import (
    MixupResult, RadaConfig, RadaState, RelabelDecision, controller_step,
    domain_entropy, mixup_features, relabel_batch, select_relabels,
)

__version__ = "0.1.0"
