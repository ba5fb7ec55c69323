"""Exceptions raised by dta_sa.

Input problems subclass ``ValueError`` and numerical failures subclass
``RuntimeError`` so callers that only know the builtins still catch them.
"""


class DtaSaError(Exception):
    """Base class for every error raised by the package."""


class InputError(DtaSaError, ValueError):
    """Bad input data or arguments (CLI exit code 2)."""


class DegenerateStudy(InputError):
    """A 2x2 table that cannot be put on the logit scale."""


class DomainError(InputError):
    """An argument outside the domain of a function, e.g. FPR outside (0, 1)."""


class UnknownScenario(InputError):
    """Scenario id or contrast variant missing from the catalog."""


class SingularCovariance(DtaSaError, RuntimeError):
    """Sigma_i + Omega is not positive definite for some study."""


class OptimizationFailed(DtaSaError, RuntimeError):
    """The optimizer could not produce a finite log-likelihood from any start (exit code 3)."""


class BracketingFailed(DtaSaError, RuntimeError):
    """No sign change for the alpha_p equation; p is inconsistent with beta."""


class NonInvertibleHessian(DtaSaError, RuntimeError):
    """Observed information is not positive definite, so no interval can be formed."""


class EmptySelection(DtaSaError, RuntimeError):
    """A simulated publication process selected no study."""
