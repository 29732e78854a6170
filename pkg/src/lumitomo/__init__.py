"""Simulation and reconstruction toolkit for modulated luminescent tomography.

Photon transport from focused- or line-excited luminescent sources is
modeled by a diffusion equation with Robin boundary conditions; boundary
flux averages reduce to weighted cone or X-ray transforms of the source
concentration, which are inverted by explicit Fourier-multiplier division,
filtered backprojection, or LSQR.
"""

from .errors import (ConfigError, EmptyMaskError, InvalidArgumentError,
                     InvalidOperatorError, LumitomoError,
                     SolverFailureError, StabilityViolationError,
                     UndefinedDirectionError, WeightDegeneracyWarning)
from .fields import (Grid, OpticalMedium, PhantomSpec, ScalarField,
                     build_phantom, derived_optics, make_grid,
                     robin_coefficient)
from .bessel import bessel_i0, bessel_i1, bessel_k0
from .diffusion import (BoundaryField, DiscreteOperator, assemble_operator,
                        boundary_flux, boundary_functional, greens_3d,
                        null_space_defect, radial_ode_solve,
                        radial_weight_ball, radial_weight_disk,
                        reciprocity_residual, solve_adjoint_weight,
                        solve_forward)
from .excitation import (Aperture, ConeScanData, Sinogram, aperture_eval,
                         cone_intensity, cone_transform,
                         simulate_boundary_scan, xray_transform)
from .multiplier import (MarginReport, RoiReconstruction, ellipticity_margin,
                         invert_multiplier, multiplier_symbol,
                         parametrix_weights, roi_reconstruct,
                         visible_direction)
from .fbp import FbpFilter, divide_by_weight, fbp
from .algebraic import (LinearMap, NoiseModel, apply_noise, lsqr,
                        relative_error, scan_linear_map)

__version__ = "0.1.0"
