"""Run configuration and mixture specifications.

Loads YAML documents into typed dataclasses. Shipped defaults live next to this
module in run_defaults.yaml; a user file overrides them and explicit keyword
overrides (command-line flags) override both.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from .errors import ConfigError
from .kernels import parse_kernel
from .sphere_core import lonlat_array_to_unit

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).parent / "run_defaults.yaml"


def load_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Load a YAML file and return it as a dictionary."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, "r") as f:
        data = yaml.safe_load(f)

    if data is None:
        raise ValueError(f"Empty YAML file: {path}")
    if not isinstance(data, dict):
        raise ConfigError(f"Expected a mapping at the top of {path}, got {type(data).__name__}")

    return data


@dataclass
class RunConfig:
    """Parameters shared by every command."""
    kernel: str = "von_mises"
    bandwidth: Union[float, str] = "rot"
    normalization: str = "auto"
    eps: float = 1e-7
    max_iter: int = 1000
    joint_stop: bool = False
    merge_tol: float = 0.05
    grid_deg: float = 2.0
    seed: int = 0
    components: int = 3
    em_tol: float = 1e-8
    em_max_iter: int = 500
    refine_kappa: bool = False
    weights: Optional[List[float]] = None
    concentrations: Optional[List[float]] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Create from a YAML dictionary; unknown keys and invalid values raise ConfigError."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        config = cls(**data)
        config._coerce()
        issues = config.validate()
        if issues:
            raise ConfigError("; ".join(issues))
        return config

    def _coerce(self) -> None:
        # YAML 1.1 reads "1e-7" as a string
        for name in ("eps", "merge_tol", "grid_deg", "em_tol"):
            try:
                setattr(self, name, float(getattr(self, name)))
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must be a number, got {getattr(self, name)!r}") from None
        for name in ("max_iter", "seed", "components", "em_max_iter"):
            value = getattr(self, name)
            try:
                as_int = int(float(value))
                ok = not isinstance(value, bool) and as_int == float(value)
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            setattr(self, name, as_int)
        if isinstance(self.bandwidth, str) and self.bandwidth.strip().lower() != "rot":
            try:
                self.bandwidth = float(self.bandwidth)
            except ValueError:
                pass
        elif not isinstance(self.bandwidth, str):
            self.bandwidth = float(self.bandwidth)

    def validate(self) -> List[str]:
        """Return the list of problems found (empty when the config is usable)."""
        issues = []
        try:
            parse_kernel(self.kernel)
        except ConfigError as e:
            issues.append(str(e))
        except ValueError as e:
            issues.append(f"kernel: {e}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth.strip().lower() != "rot":
                issues.append(f"bandwidth must be a positive number or 'rot', got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            issues.append(f"bandwidth must be positive, got {self.bandwidth}")
        if self.normalization not in ("auto", "quadrature"):
            issues.append(f"normalization must be 'auto' or 'quadrature', got {self.normalization!r}")
        if not self.eps > 0:
            issues.append(f"eps must be positive, got {self.eps}")
        if self.max_iter < 1:
            issues.append(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.merge_tol > 0:
            issues.append(f"merge_tol must be positive, got {self.merge_tol}")
        if not self.grid_deg > 0:
            issues.append(f"grid_deg must be positive, got {self.grid_deg}")
        if self.components < 1:
            issues.append(f"components must be >= 1, got {self.components}")
        if not self.em_tol > 0:
            issues.append(f"em_tol must be positive, got {self.em_tol}")
        if self.weights is not None and abs(sum(self.weights) - 1.0) > 1e-12:
            issues.append("weights must sum to 1")
        if self.concentrations is not None and min(self.concentrations) <= 0:
            issues.append("concentrations must be positive")
        return issues

    @property
    def uses_rule_of_thumb(self) -> bool:
        return isinstance(self.bandwidth, str)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with every non-None override applied, then revalidated."""
        data = dataclasses.asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)


def load_run_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """Shipped defaults, then the optional user file, then keyword overrides."""
    data = load_yaml(DEFAULTS_PATH)
    if path is not None:
        user = load_yaml(path)
        logger.info("Loaded run config from %s (%d keys)", path, len(user))
        data.update(user)
    return RunConfig.from_dict(data).with_overrides(**overrides)


@dataclass
class MixtureSpec:
    """Generator of a vMF mixture: weights, unit mean vectors and concentrations."""
    weights: np.ndarray
    means: np.ndarray
    kappas: np.ndarray
    n: Optional[int] = None
    name: str = "mixture"
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MixtureSpec":
        """Means may be given as unit vectors (`means`) or [lon, lat] degrees (`means_lonlat`)."""
        if "means" in data and "means_lonlat" in data:
            raise ConfigError("Give either 'means' or 'means_lonlat', not both")
        try:
            if "means_lonlat" in data:
                means = lonlat_array_to_unit(np.asarray(data["means_lonlat"], dtype=float))
            else:
                means = np.atleast_2d(np.asarray(data["means"], dtype=float))
            weights = np.asarray(data["weights"], dtype=float).reshape(-1)
            kappas = np.asarray(data["kappas"], dtype=float).reshape(-1)
        except KeyError as e:
            raise ConfigError(f"Mixture spec is missing {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed mixture spec: {e}") from None

        known = {"name", "n", "weights", "means", "means_lonlat", "kappas"}
        spec = cls(
            weights=weights,
            means=means,
            kappas=kappas,
            n=int(data["n"]) if data.get("n") is not None else None,
            name=str(data.get("name", "mixture")),
            extra={k: v for k, v in data.items() if k not in known},
        )
        issues = spec.validate()
        if issues:
            raise ConfigError("; ".join(issues))
        return spec

    def validate(self) -> List[str]:
        issues = []
        m = self.weights.size
        if m == 0:
            issues.append("Mixture needs at least one component")
        if self.means.shape[0] != m or self.kappas.size != m:
            issues.append(
                f"Component counts differ: {m} weights, {self.means.shape[0]} means, "
                f"{self.kappas.size} kappas"
            )
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            issues.append("Weights must be non-negative and sum to 1")
        if np.any(self.kappas < 0):
            issues.append("Concentrations must be non-negative")
        if self.means.ndim != 2 or self.means.shape[1] < 2:
            issues.append("Means must be vectors with at least 2 coordinates")
        elif np.any(np.linalg.norm(self.means, axis=1) == 0):
            issues.append("Means must be non-zero vectors")
        if self.n is not None and self.n < 1:
            issues.append(f"Sample size must be >= 1, got {self.n}")
        return issues


def load_mixture_spec(source: Union[str, Path, Dict[str, Any]]) -> MixtureSpec:
    """Mixture spec from a dict, a YAML/JSON file, or an inline JSON string."""
    if isinstance(source, dict):
        return MixtureSpec.from_dict(source)
    text = str(source).strip()
    if text.startswith("{"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Inline mixture spec is not valid JSON/YAML: {e}") from None
        return MixtureSpec.from_dict(data)
    return MixtureSpec.from_dict(load_yaml(text))
