"""megre: accelerated multi-echo gradient-echo MRI at desk scale.

Simulation of the multi-coil multi-echo acquisition, learnable k-space
sampling patterns, fan-beam acquisition ordering, unrolled ADMM
reconstruction with a recurrent temporal-feature-fusion denoiser, and the
quantitative-map / metric evaluation pipeline.
"""

from .admm import AdmmConfig, admm_reconstruct, data_consistency_cg, zero_filled_init
from .autodiff import NumericError
from .encoding import add_noise, adjoint, encode
from .fourier import fft_centered, ifft_centered
from .llr import llr_denoise
from .metf import MetfError, read_archive, read_tensor, write_archive, write_tensor
from .metrics import Metrics, compute_metrics, psnr, roi_stats, sharpness
from .network import TffWeights, init_weights, load_weights, save_weights, tff_ablated_forward, tff_forward
from .optim import AdamState, adam_init, adam_step
from .ordering import (
    AcquisitionSchedule,
    build_schedule,
    encoding_jump_metric,
    order_within_segment,
    read_schedule,
    segment_locations,
    write_schedule,
)
from .patterns import (
    PatternWeights,
    apply_calibration,
    build_prob_pattern,
    manual_vd_pattern,
    sample_binary,
    straight_through_grad,
    zero_weights,
)
from .phantom import (
    Ellipse,
    MultiEchoImage,
    PhantomSpec,
    generate_coils,
    generate_phantom,
    load_phantom_spec,
    random_phantom_spec,
    save_phantom_spec,
)
from .qmaps import QuantMaps, echo_combine, fit_field, fit_r2star, quant_maps
from .rng import make_rng, split_seeds
from .ssim import ssim_map
from .training import (
    GradCheckReport,
    TrainConfig,
    TrainSample,
    evaluate_recon,
    gradient_check,
    loss_and_grad,
    make_synthetic_dataset,
    sigma_for_snr,
    train_phase1,
    train_phase2,
)

__version__ = "0.1.0"
