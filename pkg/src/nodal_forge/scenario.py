"""Scenario configuration: built-ins, YAML files and inline overrides."""

import copy
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .mesh import MODELS, CollarSpec
from .utils import ScenarioError, config_hash

BUILTIN_NAMES = (
    "main_s3",
    "main_t3_nonseparating",
    "multi_collar",
    "payne_ball",
    "morse_handlebody",
    "flat_sanity_2d",
)
SCENARIO_BCS = ("closed", "dirichlet")
EMBEDDINGS = ("slice", "ball", "implicit")


@dataclass
class Tolerances:
    eig_tol: float = 1e-6
    profile_tol: float = 0.1
    position_tol: float = 0.1
    gap_min: float = 0.05
    # relative eigenvalue error accepted at the smallest pre-floor eps
    target_tol: float = 0.08

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


@dataclass
class Scenario:
    """Everything one run needs: manifold, collars, eps sweep and tolerances.

    Attributes:
        name: Scenario name; built-in names fix the manifold and Σ models.
        n: Manifold dimension.
        l: Number of non-constant collar modes to track.
        collars: Collar specifications.
        eps_list: Strictly decreasing eps values in (0, 1).
        delta: Smoothing width; None picks the mesh default.
        refinement: Mesh refinement level.
        seed: Seed of the eigensolver start blocks and perturbations.
        tolerances: Acceptance tolerances.
        model: Manifold model (sphere, torus, ball).
        embedding: Torus collar embedding (slice, ball, implicit).
        divisions: Torus grid divisions; None derives them from ``refinement``.
        bc: "closed" or "dirichlet" (outer boundary of a ball).
        order: Smoothstep order of the transition profile.
        mass_kind: "consistent" or "lumped".
        morse: Run the critical-point analysis on the first collar mode.
        extension: Run the min-max sandwich check per eps.
    """

    name: str
    n: int = 3
    l: int = 1
    collars: List[CollarSpec] = field(default_factory=list)
    eps_list: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.02])
    delta: Optional[float] = None
    refinement: int = 1
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    model: str = "sphere"
    embedding: str = "slice"
    divisions: Optional[int] = None
    bc: str = "closed"
    order: int = 2
    mass_kind: str = "consistent"
    morse: bool = False
    extension: bool = True

    @property
    def dirichlet(self) -> bool:
        return self.bc == "dirichlet"

    @property
    def separating(self) -> bool:
        """Whether each Σ splits the manifold, so the census checks exact counts."""
        return not (self.model == "torus" and self.embedding == "slice")

    def validate(self) -> "Scenario":
        """Check field ranges and cross-field constraints.

        Raises:
            ScenarioError: Naming the first offending field.
        """
        if not self.name or not isinstance(self.name, str):
            raise ScenarioError("name", "must be a non-empty string")
        if self.n not in (2, 3):
            raise ScenarioError("n", f"must be 2 or 3, got {self.n}")
        if not isinstance(self.l, int) or self.l < 1:
            raise ScenarioError("l", f"must be an integer >= 1, got {self.l}")
        if self.model not in MODELS:
            raise ScenarioError("model", f"must be one of {MODELS}, got {self.model!r}")
        if self.embedding not in EMBEDDINGS:
            raise ScenarioError("embedding", f"must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.bc not in SCENARIO_BCS:
            raise ScenarioError("bc", f"must be one of {SCENARIO_BCS}, got {self.bc!r}")
        if self.dirichlet and self.model != "ball":
            raise ScenarioError("bc", "a Dirichlet condition needs a manifold with boundary (model 'ball')")
        if self.model == "ball" and not self.dirichlet:
            raise ScenarioError("bc", "the ball is only run with the Dirichlet condition")
        if not self.eps_list:
            raise ScenarioError("eps_list", "must not be empty")
        if any(not 0.0 < e < 1.0 for e in self.eps_list):
            raise ScenarioError("eps_list", f"values must lie in (0, 1), got {self.eps_list}")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ScenarioError("eps_list", f"must be strictly decreasing, got {self.eps_list}")
        if self.delta is not None and self.delta < 0:
            raise ScenarioError("delta", f"must be >= 0, got {self.delta}")
        if self.refinement < 0:
            raise ScenarioError("refinement", f"must be >= 0, got {self.refinement}")
        if self.divisions is not None and self.divisions < 4:
            raise ScenarioError("divisions", f"must be >= 4, got {self.divisions}")
        if self.order < 2:
            raise ScenarioError("order", f"must be >= 2, got {self.order}")
        if self.mass_kind not in ("consistent", "lumped"):
            raise ScenarioError("mass_kind", f"must be 'consistent' or 'lumped', got {self.mass_kind!r}")
        for key, value in self.tolerances.to_dict().items():
            if not value > 0:
                raise ScenarioError(f"tolerances.{key}", f"must be positive, got {value}")
        labels = [c.label for c in self.collars]
        if labels != list(range(len(self.collars))):
            raise ScenarioError("collars", f"labels must be 0..{len(self.collars) - 1} in order, got {labels}")
        for collar in self.collars:
            if not collar.admits(self.l):
                raise ScenarioError(
                    f"collars.{collar.label}.r",
                    f"r={collar.r} violates lambda_1(Sigma) > l^2 pi^2 / (4 Gamma^2) for l={self.l}")
        if self.morse and not self.collars:
            raise ScenarioError("morse", "the critical-point analysis needs a collar")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "l": self.l,
            "collars": [c.to_dict() for c in self.collars],
            "eps_list": list(self.eps_list),
            "delta": self.delta,
            "refinement": self.refinement,
            "seed": self.seed,
            "tolerances": self.tolerances.to_dict(),
            "model": self.model,
            "embedding": self.embedding,
            "divisions": self.divisions,
            "bc": self.bc,
            "order": self.order,
            "mass_kind": self.mass_kind,
            "morse": self.morse,
            "extension": self.extension,
        }

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())

    def with_overrides(self, overrides: Dict[str, Any]) -> "Scenario":
        """Copy with dotted-key overrides applied, validated."""
        data = self.to_dict()
        for key, value in overrides.items():
            _set_path(data, key, value)
        return Scenario.from_dict(data).validate()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        """Build a scenario from plain data.

        Raises:
            ScenarioError: On unknown fields or malformed collars/tolerances.
        """
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(sorted(unknown)[0], "unknown field")
        if "name" not in data:
            raise ScenarioError("name", "is required")
        try:
            data["collars"] = [
                c if isinstance(c, CollarSpec) else CollarSpec.from_dict({"label": i, **c})
                for i, c in enumerate(data.get("collars") or [])
            ]
        except (TypeError, ValueError) as e:
            raise ScenarioError("collars", str(e))
        tolerances = data.get("tolerances") or {}
        if not isinstance(tolerances, Tolerances):
            unknown = set(tolerances) - set(Tolerances.__dataclass_fields__)
            if unknown:
                raise ScenarioError(f"tolerances.{sorted(unknown)[0]}", "unknown tolerance")
            data["tolerances"] = Tolerances(**{k: float(v) for k, v in tolerances.items()})
        if "eps_list" in data:
            data["eps_list"] = [float(e) for e in data["eps_list"]]
        return cls(**data)


def _builtin(name: str) -> Dict[str, Any]:
    if name == "main_s3":
        return {
            "name": name, "n": 3, "l": 2, "model": "sphere", "refinement": 2,
            "collars": [{"sigma_model": "sphere2", "r": 0.4, "layers": 8}],
            "eps_list": [0.2, 0.1, 0.05, 0.02],
        }
    if name == "main_t3_nonseparating":
        return {
            "name": name, "n": 3, "l": 1, "model": "torus", "embedding": "slice", "refinement": 1,
            "collars": [{"sigma_model": "torus2", "r": 0.25, "layers": 6}],
            "eps_list": [0.2, 0.1, 0.05, 0.02],
        }
    if name == "multi_collar":
        return {
            "name": name, "n": 3, "l": 2, "model": "torus", "embedding": "slice", "refinement": 1,
            "collars": [
                {"sigma_model": "torus2", "r": 0.25, "gamma": 1.0, "layers": 6},
                {"sigma_model": "torus2", "r": 0.25, "gamma": 0.8, "layers": 6},
            ],
            "eps_list": [0.2, 0.1, 0.05, 0.02],
        }
    if name == "payne_ball":
        return {
            "name": name, "n": 3, "l": 1, "model": "ball", "bc": "dirichlet", "refinement": 2,
            "collars": [{"sigma_model": "sphere2", "r": 0.5, "layers": 6}],
            "eps_list": [0.2, 0.1, 0.05, 0.02],
        }
    if name == "morse_handlebody":
        return {
            "name": name, "n": 3, "l": 1, "model": "torus", "embedding": "implicit", "refinement": 1,
            "collars": [{"sigma_model": "genus2", "r": 1.0, "layers": 4}],
            "eps_list": [0.1, 0.05], "morse": True, "extension": False,
        }
    if name == "flat_sanity_2d":
        return {
            "name": name, "n": 2, "l": 1, "model": "torus", "refinement": 1,
            "collars": [], "eps_list": [0.5], "extension": False,
        }
    raise ScenarioError("name", f"unknown built-in scenario {name!r}; expected one of {BUILTIN_NAMES}")


def builtin_scenario(name: str) -> Scenario:
    return Scenario.from_dict(_builtin(name)).validate()


def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted path such as ``tolerances.gap_min`` or ``collars.0.r``."""
    parts = dotted.split(".")
    target = data
    for part in parts[:-1]:
        if isinstance(target, list):
            try:
                target = target[int(part)]
            except (ValueError, IndexError):
                raise ScenarioError(dotted, f"no list entry {part!r}")
        else:
            target = target.setdefault(part, {})
    last = parts[-1]
    if isinstance(target, list):
        try:
            target[int(last)] = value
        except (ValueError, IndexError):
            raise ScenarioError(dotted, f"no list entry {last!r}")
    else:
        target[last] = value


def load_scenario(source: str, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """Resolve a built-in name or a YAML file, apply dotted overrides and validate.

    Raises:
        ScenarioError: If the source or a field is invalid.
    """
    if source in BUILTIN_NAMES:
        data = _builtin(source)
    elif os.path.isfile(source):
        with open(source, 'r', encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ScenarioError("file", f"invalid YAML in {source}: {e}")
        if not isinstance(data, dict):
            raise ScenarioError("file", f"{source} must contain a mapping")
        base = data.pop("base", None)
        name = data.get("name", os.path.splitext(os.path.basename(source))[0])
        if base is not None:
            merged = _builtin(base)
            merged.update(data)
            data = merged
        data["name"] = name
    else:
        raise ScenarioError("name", f"{source!r} is neither a built-in scenario nor a file")
    data = copy.deepcopy(data)
    for key, value in (overrides or {}).items():
        _set_path(data, key, value)
    return Scenario.from_dict(data).validate()


def with_scaled_radius(sc: Scenario, factor: float) -> Scenario:
    """Copy of ``sc`` with every collar radius multiplied by ``factor``."""
    data = sc.to_dict()
    for collar in data["collars"]:
        collar["r"] = collar["r"] * factor
    return Scenario.from_dict(data)
