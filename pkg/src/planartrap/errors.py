"""Exception types shared across the package.

Two broad families matter to callers: InputError (bad files, bad
preconditions; the CLI maps these to exit code 2) and NotConverged
(best-effort result still returned/written; CLI exit code 3).
"""


class PlanartrapError(Exception):
    """Base class for all package errors."""


class InputError(PlanartrapError):
    """Invalid input data or violated precondition."""


class TrapFileError(InputError):
    """Malformed or schema-invalid trap/scan/probe file."""


class UnknownElectrode(InputError):
    """A referenced electrode label does not exist in the configuration."""


class UnstableAxis(PlanartrapError):
    """A secular frequency came out imaginary (negative omega^2).

    Carries the axis label and the negative radicand so phase-scan callers
    can still plot |omega^2|.
    """

    def __init__(self, axis: str, omega_squared: float, all_omega_squared=None):
        self.axis = axis
        self.omega_squared = float(omega_squared)
        self.all_omega_squared = all_omega_squared
        super().__init__(
            f"unstable axis {axis}: omega^2 = {omega_squared:.6e} (rad/s)^2"
        )


class AxesNotAligned(InputError):
    """Principal axes are not aligned with the lab y-z frame."""


class NoSolution(InputError):
    """The rotation-nulling ratio does not exist (c_NC = 0, c_C != 0)."""


class IndeterminateRatio(InputError):
    """Both electrode sets have zero y-z cross curvature; any ratio works."""


class DegenerateAxes(InputError):
    """The y-z curvature block is proportional to identity; no unique frame."""


class RankDeficient(InputError):
    """Sample geometry cannot determine all quadratic coefficients."""


class CoincidentIons(InputError):
    """Two ions closer than the coincidence guard distance."""


class NotConverged(PlanartrapError):
    """Minimization hit its iteration cap on every restart.

    The best-effort result is attached so callers can still inspect it.
    """

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class NotPlanar(InputError):
    """Operation requires a 2D crystal in the x-z plane."""


class InsufficientVariation(InputError):
    """Calibration records do not vary any electrode voltage."""


class MixedConditions(InputError):
    """Calibration records vary more than the single intended condition."""


class RotationDrift(InputError):
    """Principal-axis rotation exceeds the small-angle limit across records."""


class FitDiverged(PlanartrapError):
    """Nonlinear fit failed; carries the residual report."""

    def __init__(self, message: str, residual_rms: float | None = None):
        self.residual_rms = residual_rms
        super().__init__(message)


class CutoffTooLow(InputError):
    """Thermal Fock-state truncation drops more than the allowed tail mass."""


class NotAtEquilibrium(UserWarning):
    """Positions passed to a mode computation carry significant net force."""


class LambDickeValidity(UserWarning):
    """Probe/thermal combination leaves the Lamb-Dicke regime."""
