"""Numerical construction of asymptotically hyperbolic metrics with horizons.

Modules: ``radial`` (charts and radial operators), ``adssch`` (the
anti-de Sitter--Schwarzschild family), ``gluing``, ``solver`` (the radial
elliptic problems), ``collar`` (boundary expansion and mass), ``sphere`` and
``horizon`` (CMC graphs), ``pipeline`` and ``cli``.
"""

from .adssch import AdSSchwParams, FamilyEvaluator, horizon_radii, make_params
from .collar import collar_gauge, extract_u_ttt, wang_mass
from .errors import AHError
from .gluing import build_spec, glued_profile, select_taus, verify_supercurvature
from .horizon import ambient_factor, cmc_linearization, find_cmc_surface, mean_curvature_graph
from .pipeline import RunConfig, run_pipeline, sweep
from .solver import MollifierSpec, defect, mollify, recover_mass_param, solve_bvp, yamabe_normalize
from .sphere import SphereGrid

__version__ = "0.1.0"
