"""Pipeline configuration: one frozen record of every knob, JSON in and out."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError, InputNotFound
from .failure import CRITICAL_STRAIN, CRITICAL_VOLUME, TARGET_STRAIN
from .fem.elements import ElementKind
from .fem.loadcases import DEFAULT_REFERENCE_LOAD, EndCondition
from .fem.plasticity import MAX_CUTBACKS, NEWTON_MAX_ITER, NEWTON_RTOL, Tangent
from .fem.solver import CG_RTOL, LinearMethod, StrainMeasure
from .material import YIELD_STRAIN, ModelVariant
from .mesh import LoadPoint, Orientation
from .segment import Connectivity

logger = logging.getLogger(__name__)

LYON_SPACING = 0.984  # mm

_ENUMS = {
  'model': ModelVariant,
  'element': ElementKind,
  'connectivity': Connectivity,
  'strain_measure': StrainMeasure,
  'linear_method': LinearMethod,
  'tangent': Tangent,
  'end_condition': EndCondition,
  'load_point': LoadPoint,
}


@dataclass(frozen=True)
class PipelineConfig:
  """Every parameter of one pipeline run. Enum-valued fields hold their string values."""

  model: str = ModelVariant.ENSAM.value
  element: str = ElementKind.HEX8.value
  axial_axis: str = 'z'
  anterior: str = '+y'
  threshold: float = 0.15
  connectivity: str = Connectivity.FACE6.value
  closing_radius: int = 1
  band_fraction: float = 0.05
  pmma_thickness: float = 5.0
  target_spacing: float | None = None
  floor: bool = True
  bin_step: float | None = None
  yield_strain: float = YIELD_STRAIN
  strain_measure: str = StrainMeasure.VON_MISES.value
  reference_load: float = DEFAULT_REFERENCE_LOAD
  critical_strain: float = CRITICAL_STRAIN
  critical_volume: float = CRITICAL_VOLUME
  linear_method: str = LinearMethod.CG.value
  cg_rtol: float = CG_RTOL
  increments: int = 20
  target_strain: float = TARGET_STRAIN
  tangent: str = Tangent.ELASTIC.value
  newton_rtol: float = NEWTON_RTOL
  newton_max_iter: int = NEWTON_MAX_ITER
  max_cutbacks: int = MAX_CUTBACKS
  end_condition: str = EndCondition.BONDED.value
  load_point: str = LoadPoint.ANTERIOR_THIRD.value

  def __post_init__(self):
    for name, enum in _ENUMS.items():
      value = getattr(self, name)
      try:
        object.__setattr__(self, name, enum(value).value)
      except ValueError as e:
        choices = ', '.join(m.value for m in enum)
        raise ConfigError(f'{name} must be one of {choices}, got {value!r}', field=name) from e
    self.orientation()

    checks = [
      ('threshold', self.threshold >= 0),
      ('closing_radius', self.closing_radius >= 0),
      ('band_fraction', 0 < self.band_fraction <= 0.2),
      ('pmma_thickness', self.pmma_thickness >= 0),
      ('target_spacing', self.target_spacing is None or self.target_spacing > 0),
      ('bin_step', self.bin_step is None or self.bin_step > 0),
      ('yield_strain', self.yield_strain > 0),
      ('reference_load', self.reference_load > 0),
      ('critical_strain', self.critical_strain > 0),
      ('critical_volume', self.critical_volume > 0),
      ('cg_rtol', 0 < self.cg_rtol < 1),
      ('increments', self.increments >= 1),
      ('target_strain', 0 < self.target_strain < 1),
      ('newton_rtol', 0 < self.newton_rtol < 1),
      ('newton_max_iter', self.newton_max_iter >= 1),
      ('max_cutbacks', 0 <= self.max_cutbacks <= 10),
    ]
    for name, ok in checks:
      if not ok:
        raise ConfigError(f'{name} is out of range: {getattr(self, name)!r}', field=name)
    if self.pmma_thickness > 0 and self.element != ElementKind.HEX8.value:
      raise ConfigError('PMMA caps need hex8 elements; set pmma_thickness to 0', field='element')

  @classmethod
  def for_model(cls, model: str, **overrides: Any) -> 'PipelineConfig':
    """Defaults of one model variant, with field overrides."""
    try:
      model = ModelVariant(model)
    except ValueError as e:
      raise ConfigError(f'unknown model {model!r}', field='model') from e
    if model is ModelVariant.ENSAM:
      base = cls(model=model.value)
    else:
      base = cls(
        model=model.value,
        element=ElementKind.TET10.value,
        pmma_thickness=0.0,
        target_spacing=LYON_SPACING,
        bin_step=10.0,
      )
    return replace(base, **overrides) if overrides else base

  @property
  def variant(self) -> ModelVariant:
    return ModelVariant(self.model)

  def orientation(self) -> Orientation:
    return Orientation.parse(self.axial_axis, self.anterior)

  def to_dict(self) -> dict[str, Any]:
    return asdict(self)

  def to_json(self) -> str:
    return json.dumps(self.to_dict(), indent=2, sort_keys=True)

  def config_hash(self) -> str:
    """SHA-256 of the canonical JSON (sorted keys, compact separators)."""
    canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

  @classmethod
  def from_dict(cls, data: dict[str, Any]) -> 'PipelineConfig':
    """Build from a mapping; missing fields take the defaults of the given model."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
      raise ConfigError(f'unknown config field(s): {", ".join(unknown)}', fields=unknown)
    data = dict(data)
    model = data.pop('model', ModelVariant.ENSAM.value)
    try:
      return cls.for_model(model, **data)
    except TypeError as e:
      raise ConfigError(f'invalid config: {e}') from e


def load_config(path: Path) -> PipelineConfig:
  path = Path(path)
  if not path.is_file():
    raise InputNotFound(f'config file not found: {path}', path=str(path))
  try:
    data = json.loads(path.read_text(encoding='utf-8'))
  except json.JSONDecodeError as e:
    raise ConfigError(f'{path}: invalid JSON ({e})') from e
  if not isinstance(data, dict):
    raise ConfigError(f'{path}: expected a JSON object')
  config = PipelineConfig.from_dict(data)
  logger.debug('Loaded config %s (hash %s)', path, config.config_hash()[:12])
  return config


def save_config(path: Path, config: PipelineConfig) -> None:
  Path(path).write_text(config.to_json() + '\n', encoding='utf-8')
