from typing import Any, Dict, Optional

import yaml
from credmark.cmf.model.errors import ModelDataError, ModelInputError
from models.dtos.scenario import ExperimentConfig
from pydantic import ValidationError


def load_config(path: str) -> Dict[str, Any]:
    """Flat key/value experiment manifest; keys are ExperimentConfig field names."""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            values = yaml.safe_load(fh)
    except OSError as err:
        raise ModelDataError(f'Cannot read config {path}: {err}',
                             ModelDataError.Codes.NO_DATA) from err
    except yaml.YAMLError as err:
        raise ModelDataError(f'Config {path} is not valid YAML: {err}',
                             ModelDataError.Codes.CONFLICT) from err

    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ModelInputError(f'Config {path} must be a flat mapping of keys to values')

    unknown = sorted(set(values) - set(ExperimentConfig.__fields__))
    if unknown:
        raise ModelInputError(f'Unknown config keys in {path}: {", ".join(map(str, unknown))}')
    nested = [key for key, value in values.items() if isinstance(value, (dict, list))]
    if nested:
        raise ModelInputError(f'Config values must be scalars, got nested values for {nested}')
    return values


def build_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    """File values first, then every override that is not None."""
    values = load_config(path) if path is not None else {}
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return ExperimentConfig(**values)
    except ValidationError as err:
        raise ModelInputError(f'Invalid experiment config: {err}') from err
