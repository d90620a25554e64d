"""
錯誤類型 (Error Types)

Every failure the lab reports carries a machine-readable ``error_code`` and
the process exit status the command line maps it to.
"""


class LabError(Exception):
    """Base class for all lab errors (實驗室錯誤基底類別)."""

    error_code = "LAB_ERROR"
    exit_code = 2

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        payload = {
            "status": "error",
            "message": self.message,
            "error_code": self.error_code,
        }
        if self.details:
            payload["details"] = self.details
        return payload


class NonHermitianInput(LabError, ValueError):
    error_code = "NON_HERMITIAN_INPUT"


class InvalidExponent(LabError, ValueError):
    error_code = "INVALID_EXPONENT"


class InvalidThreshold(LabError, ValueError):
    """Raised for a non-positive stopping level λ."""

    error_code = "INVALID_THRESHOLD"


class DimensionMismatch(LabError, ValueError):
    error_code = "DIMENSION_MISMATCH"


class LevelOutOfRange(LabError, ValueError):
    error_code = "LEVEL_OUT_OF_RANGE"


class LevelOrderViolation(LabError, ValueError):
    """Raised when a truncated or smoothed average gets k >= n."""

    error_code = "LEVEL_ORDER_VIOLATION"


class NonPositiveField(LabError, ValueError):
    error_code = "NON_POSITIVE_FIELD"


class InvalidSignSequence(LabError, ValueError):
    error_code = "INVALID_SIGN_SEQUENCE"


class InvalidConfig(LabError, ValueError):
    error_code = "INVALID_CONFIG"


class ContainerError(LabError, OSError):
    """Unreadable, corrupt or unwritable field container (I/O 錯誤)."""

    error_code = "CONTAINER_IO"
    exit_code = 3
