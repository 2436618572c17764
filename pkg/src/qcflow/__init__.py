"""Numerical engine for the fourth-order conformally covariant operator
and the non-local constant-curvature flow on exact model manifolds."""

from .models import (ModelKind, ModelManifold, circle_cross_sphere,
                     curvature_data, flat_torus, geodesic_distance,
                     injectivity_scale, is_positivity_admissible, round_sphere)
from .spectral import (Discretization, Field, Symmetry, build_discretization,
                       constant_field, from_function, from_nodal, integrate,
                       laplacian, pointwise, signed_power)
from .paneitz import (OperatorNotPositiveError, PaneitzOperator, apply_operator,
                      assemble, conformal_operator, min_eigenvalue, solve,
                      w22_inner)
from .conformal import (QuotientReport, conformal_Q, conformal_R,
                        maxprinciple_path, quotient, total_Q)
from .flow import (FlowHalted, FlowState, MonitorRecord, flow_rhs, make_state,
                   mu_of, rescale_check, run, step, write_jsonl)
from .green import (GreenExpansion, ProductImageKernel, SphereKernel,
                    fit_expansion, greens_function, mass_scan,
                    product_alpha_exact)
from .bubbles import (BubbleSpec, BubbleVariant, corrected_bubble,
                      deficit_scan_product_glued, deficit_scan_sphere_standard,
                      euclidean_Sn, glued_bubble, sphere_extremal_field,
                      standard_bubble)

__version__ = "0.1.0"
