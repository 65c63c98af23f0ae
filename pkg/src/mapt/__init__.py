"""MAP-MRF lower bounds by dual ascent with SAC and frustrated-cycle tightening."""
from .certificate import build_certificate, verify_certificate
from .csp import ac3, build_csp, minimal_trace
from .driver import RunConfig, run
from .frustrated import find_triplets_fr
from .io import parse_native, parse_uai, serialize_native
from .model import Relaxation, build_model, evaluate, lower_bound
from .reparam import MessageVector, apply_messages, solve_dual
from .sac import find_triplets, schedule_step

__version__ = "0.1.0"

__all__ = [
    "Relaxation", "build_model", "evaluate", "lower_bound",
    "MessageVector", "apply_messages", "solve_dual",
    "ac3", "build_csp", "minimal_trace",
    "find_triplets", "schedule_step", "find_triplets_fr",
    "build_certificate", "verify_certificate",
    "parse_native", "parse_uai", "serialize_native",
    "RunConfig", "run",
]
