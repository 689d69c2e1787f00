"""Exception types shared by the package.

Every domain error carries a short machine-readable ``code`` which the CLI
echoes in its ``{"error": code, "message": ...}`` object.
"""


class ArwaveError(Exception):
    code = "domain_error"


class NotRepresentable(ArwaveError):
    code = "not_representable"


class ResolutionTooLow(ArwaveError):
    code = "resolution_too_low"


class DegenerateField(ArwaveError):
    code = "degenerate_field"


class RadiusOutOfRange(ArwaveError):
    code = "radius_out_of_range"


class MaxResolutionExceeded(ArwaveError):
    code = "max_resolution_exceeded"


class OrderTooLarge(ArwaveError):
    code = "order_too_large"


class OrderUnsupported(ArwaveError):
    code = "order_unsupported"


class ConvergenceFailure(ArwaveError):
    code = "convergence_failure"


class MgfDivergent(ArwaveError):
    code = "mgf_divergent"


class InsufficientTailMass(ArwaveError):
    code = "insufficient_tail_mass"


class SizeMismatch(ArwaveError):
    code = "size_mismatch"
