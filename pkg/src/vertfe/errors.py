"""Exception hierarchy shared by the library and the CLI.

Every error carries a machine-readable ``kind`` (the class name) and the exit
code the CLI should use when it surfaces the error.
"""

from typing import Any


class VertfeError(Exception):
  """Base class for all toolkit errors."""

  exit_code = 3

  def __init__(self, message: str, **details: Any):
    super().__init__(message)
    self.message = message
    self.details = details

  @property
  def kind(self) -> str:
    return type(self).__name__

  def to_dict(self) -> dict[str, Any]:
    """Serialize for the CLI's machine-readable error channel."""
    return {'error': self.kind, 'message': self.message, 'details': self.details}


class DataError(VertfeError):
  """Bad or inconsistent input data."""

  exit_code = 3


class NumericalError(VertfeError):
  """A numerical procedure could not produce a result."""

  exit_code = 4


# voxel
class InvalidGrid(DataError):
  pass


class FewerThanTwoSamples(DataError):
  pass


class DegenerateFit(DataError):
  pass


class WrongKind(DataError):
  pass


class UpsampleRequested(DataError):
  pass


# segment / mesh
class EmptyMask(DataError):
  pass


class EmptyEndplate(DataError):
  pass


class NotHexMesh(DataError):
  pass


# material
class MissingMaterial(DataError):
  pass


class NoVoxelInElement(DataError):
  pass


# fem
class InvertedElement(NumericalError):
  pass


class ConstraintConflict(DataError):
  pass


class SingularSystem(NumericalError):
  pass


class NoConvergence(NumericalError):
  pass


class NewtonDiverged(NumericalError):
  pass


# failure
class CriterionUnreachable(NumericalError):
  pass


class ZeroStrainField(NumericalError):
  pass


class TargetNotReached(NumericalError):
  pass


# stats
class LengthMismatch(DataError):
  pass


class TooFewPoints(DataError):
  pass


class DegenerateVariance(DataError):
  pass


class NonPositiveValue(DataError):
  pass


class MissingCells(DataError):
  pass


class SchemaError(DataError):
  pass


# phantom / cli
class InsertOverlapsBody(DataError):
  pass


class InputNotFound(DataError):
  pass


class ConfigError(DataError):
  pass
