"""Unsupervised fusion of low-resolution hyperspectral and high-resolution
multispectral image pairs via cycle-consistent domain transformations."""

__version__ = "0.1.0"

from .config import ExperimentConfig, config_from_dict, parse_config, serialize_config
from .cube import HsiCube, export_band_image, load_cube, save_cube
from .degradation import (
    PsfKernel,
    SrfMatrix,
    load_psf_csv,
    load_srf_csv,
    make_block_average_kernel,
    make_gaussian_srf,
    random_blob_cube,
    simulate_pair,
    spatial_degrade,
    spectral_degrade,
)
from .losses import (
    LossBreakdown,
    l1_mean,
    loss_cycle,
    loss_identity,
    loss_marginal,
    loss_pretrain,
    loss_total,
)
from .metrics import MetricsReport, ergas, evaluate, psnr, rmse_per_band, sam, ssim
from .networks import (
    FusionModel,
    bicubic_baseline,
    bicubic_upsample_2x,
    cube_to_tensor,
    fuse_pair,
    init_params,
    inject_degradation,
    load_checkpoint,
    save_checkpoint,
    tensor_to_cube,
)
from .training import (
    TrainConfig,
    TrainHistory,
    derive_seed,
    lr_at,
    pretrain,
    run_fusion,
    train,
)
