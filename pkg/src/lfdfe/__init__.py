"""Limited-feedback precoding for zero-forcing decision feedback equalizers.

The package designs MSE-equalizing precoders for ZF-DFE MIMO links, builds
Grassmannian codebooks for quantized feedback, selects codebook entries at
the receiver and simulates the resulting links.
"""

from .channel import ChannelMatrix, SystemConfig, derive_rng, eig_basis, generate_channel
from .codebook import (Codebook, build_grassmann_codebook, build_permutation_codebook,
                       dist_fs, dist_proj2, min_pairwise_distance)
from .errors import (AllInfeasible, CampaignInfeasible, DomainError, LengthMismatch, LfdfeError,
                     MissingDensity, RankDeficient, ShapeMismatch, TooFewEntries, TooLarge)
from .gmd import equal_diag_rotation
from .objectives import Objective, eval_objective, majorizes, qam_ber, qam_ber_exact
from .selection import (estimate_distortion, evaluate_distortion_bound, select_ordering_greedy,
                        select_ordering_norm, select_precoder)
from .simkit import CampaignResult, Scheme, qam_modulate, qam_slice, run_ber_campaign, run_mi_campaign
from .zfdfe import (Precoder, design_receiver, linear_receiver, mse_analysis, optimal_precoder)

__version__ = "0.1.0"
