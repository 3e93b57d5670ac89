from typing import Optional


class DCCError(Exception):
    """Base error carrying a machine-parsable code such as ``phantom.overlap``"""

    code = "runtime.error"
    exit_code = 1

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code

    def one_line(self) -> str:
        message = " ".join(str(self).split())
        return f"error={self.code} message={message}"


class ConfigError(DCCError, ValueError):
    code = "config.invalid"
    exit_code = 2


# Domain errors also behave as ValueError for bad input
class PhantomError(DCCError, ValueError):
    code = "phantom.invalid"


class VolumeFormatError(DCCError, ValueError):
    code = "volume.format"


class PreprocessError(DCCError, ValueError):
    code = "preprocess.invalid"


class SamplingError(DCCError, ValueError):
    code = "sampler.invalid"


class LossError(DCCError, ValueError):
    code = "dcc.invalid"


class ModelError(DCCError, ValueError):
    code = "model.invalid"


class NumericalError(DCCError, ArithmeticError):
    code = "numeric.non_finite"


class AnalysisError(DCCError, ValueError):
    code = "analysis.invalid"
