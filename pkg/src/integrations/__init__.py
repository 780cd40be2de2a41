from .dimfunc import compare_order, make_builtin, validate_dimension_function
from .cantor import build_model, density_report, gdelta_cover, mu_ball, solve_scales
from .packing import divergence_certificate, lemma6_extract, packing_weight, verify_packing
from .constructions import construct_f_theorem4a, construct_g_interp, construct_g_theorem4b
