"""Cloth-changing person re-identification with masked attribute descriptions.

The pipeline: detected person attributes are encoded as binary vectors,
garment-related positions are masked (with optional calibrated noise), and the
masked description is fused as extra tokens into the middle stages of a vision
transformer. Training combines identity cross-entropy with batch-hard triplet
loss; retrieval uses image-only embeddings. A deterministic synthetic
benchmark with controllable identities, outfits, cameras, and attribute
retention makes the mechanism testable end to end.
"""

from .attributes import (
    AttributeVector,
    AttributeVocabulary,
    cloth_indices,
    decode,
    default_vocabulary,
    encode,
    load_vocabulary,
)
from .errors import MaskedReidError, RuntimeFailure, ValidationError
from .evalproto import EvalEntry, MetricsRecord, cmc_and_map, rank_list, valid_gallery
from .losses import LossConfig, batch_hard_triplet, id_loss, total_loss, triplet_loss
from .masking import (
    AttributeSource,
    DictAttributeSource,
    FileAttributeSource,
    MaskedDescription,
    build_description,
    inject_noise,
    mask_cloth,
)
from .model import (
    DescriptionFusionModel,
    ForwardOutput,
    ModelConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .synthdata import (
    DatasetManifest,
    GenConfig,
    SampleRecord,
    analytic_retention,
    generate,
    load_manifest,
    render,
)
from .trainer import TrainConfig, augment, lr_at, pk_sample, train

__version__ = "0.1.0"
