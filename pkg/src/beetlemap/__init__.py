"""Few-shot contrastive abundance mapping for bark-beetle disturbance.

A 1-D convolutional encoder is pretrained on unlabeled pixel spectra
with a paired-view contrastive objective, its projection head is tuned
on a handful of labeled pixels, and per-class support vector regressors
turn embeddings into sub-pixel abundance fractions of healthy, affected,
and dead trees.  Synthetic linear-mixture scenes with known ground truth
provide the verification bench.
"""

from .contrastive import (
    AugmentationConfig,
    FinetuneConfig,
    PretrainConfig,
    cosine_sim,
    finetune,
    finetune_loss,
    magnitude_warp,
    pretrain,
    simclr_loss,
)
from .cubeio import (
    load_abundance_map,
    load_cube,
    load_mask,
    save_abundance_map,
    save_cube,
    save_mask,
)
from .data import (
    CLASS_NAMES,
    AbundanceVector,
    Dataset,
    FoldPlan,
    LabeledSample,
    load_labeled_csv,
    make_folds,
    rmse,
    save_labeled_csv,
    train_val_split,
)
from .nn import AdamW, EncoderModel, load_encoder, save_encoder
from .pipeline import (
    METHOD_AGGREGATED,
    METHOD_FLOOR,
    METHOD_PROPOSED,
    METHOD_RAW,
    CrossValResult,
    PipelineModel,
    embed,
    load_pipeline,
    predict_abundance,
    predict_batch,
    predict_map,
    run_cross_validation,
    save_pipeline,
    simplex_normalize,
    train_pipeline,
)
from .svr import SvrConfig, SvrModel, grid_search, svr_fit, svr_predict
from .synth import (
    BandAggregation,
    Scene,
    SceneConfig,
    aggregate_matrix,
    aggregate_spectrum,
    default_aggregation,
    generate_scene,
    make_endmembers,
    sample_labeled,
)

__version__ = "0.1.0"
