"""Frame-based image deblurring with structured preconditioners and boundary conditions."""
from .blurop import BlurOperator, estimate_norm
from .boundary import BoundaryCondition, FovMask, mask_select, pad, zero_insert
from .framelet import FrameOperator, soft_threshold
from .imgcore import (NoiseSpec, Psf, add_gaussian_noise, delta_psf, gaussian_psf,
                      is_quadrantally_symmetric, motion_psf, psnr, symmetrize_psf)
from .pgm import read_pgm, write_pgm
from .solvers import (AlphaSolveError, DivergenceError, IterInfo, IterState, NsConfig,
                      SolverConfig, SolverError, Strategy, check_discrepancy, run_alg4ns,
                      run_lba, run_mlba, solve_alpha)
from .spectral import (SpectralOperator, TransformKind, apply_filtered, build_spectral,
                       phi_alpha, solve_shifted)

__version__ = "0.1.0"
