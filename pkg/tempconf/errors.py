from typing import Any, Optional


class TempconfError(Exception):
	"""Base class for every error raised by the package."""

	exit_code = 2


class DataError(TempconfError):
	exit_code = 2


class DataParseError(DataError):
	def __init__(self, message: str, line: Optional[int] = None) -> None:
		self.line = line
		if line is not None:
			message = f"line {line}: {message}"
		super().__init__(message)


class DuplicateTimestampError(DataError):
	def __init__(self, message: str, line: Optional[int] = None) -> None:
		self.line = line
		if line is not None:
			message = f"line {line}: {message}"
		super().__init__(message)


class InsufficientDataError(DataError):
	pass


class DataSourceError(DataError):
	"""Input could not be fetched (missing file, HTTP failure)."""


class PreconditionError(TempconfError, ValueError):
	exit_code = 1


class DimensionError(TempconfError, ValueError):
	pass


class EmptyInputError(TempconfError, ValueError):
	pass


class WarmUpError(TempconfError):
	"""Not enough history yet to issue a prediction."""


class ModelError(TempconfError):
	exit_code = 3


class NumericError(ModelError):
	def __init__(self, message: str, t: Optional[int] = None) -> None:
		self.t = t
		if t is not None:
			message = f"{message} (t={t})"
		super().__init__(message)


class OptimizationFailure(ModelError):
	def __init__(self, message: str, best: Any = None) -> None:
		self.best = best
		super().__init__(message)


class ModelFailure(ModelError):
	def __init__(self, message: str, step: Optional[int] = None) -> None:
		self.step = step
		if step is not None:
			message = f"step {step}: {message}"
		super().__init__(message)
