"""Declarative experiment configuration (YAML) with strict validation.

Unknown keys are rejected, and validation errors name the offending field
together with its line in the source file.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .grid_kernel import (
    CoefficientKernel,
    Params,
    StandardKernel,
    build_grid,
    constant_coefficient,
    oscillating_coefficient,
    random_cell_coefficient,
)
from .probe import BoundaryData, DomainFamily
from .regions import Ball, Box, HalfSpace
from .solver import SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and line."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --------------------------------------------------------------------------
# building blocks


class ParamsSpec(_Strict):
    n: Literal[1, 2]
    s: float = Field(gt=0, lt=1)
    p: float = Field(gt=1)
    lam: float = Field(1.0, ge=1)

    def build(self) -> Params:
        return Params(self.n, self.s, self.p, self.lam)


class SolverSpec(_Strict):
    residual_tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(500, gt=0)
    method: Literal["newton", "gradient"] = "newton"

    def build(self) -> SolverConfig:
        return SolverConfig(residual_tol=self.residual_tol, max_iters=self.max_iters, method=self.method)


class GridSpec(_Strict):
    box: List[Tuple[float, float]]
    cells: List[int]

    @model_validator(mode="after")
    def _check(self):
        if len(self.box) != len(self.cells) or len(self.box) not in (1, 2):
            raise ValueError("box and cells must both have one entry per dimension (n = 1 or 2)")
        if any(lo >= hi for lo, hi in self.box):
            raise ValueError("box intervals must satisfy lo < hi")
        if any(c < 3 for c in self.cells):
            raise ValueError("at least 3 cells per axis")
        return self

    def build(self):
        return build_grid([list(b) for b in self.box], list(self.cells))


class KernelSpec(_Strict):
    type: Literal["standard", "constant", "oscillating", "random_cell"] = "standard"
    value: float = Field(1.0, gt=0)
    frequency: float = 3.0

    def build(self, grid, params: Params, seed: int):
        if self.type == "standard":
            return StandardKernel()
        if self.type == "constant":
            return CoefficientKernel(constant_coefficient(self.value))
        if self.type == "oscillating":
            return CoefficientKernel(oscillating_coefficient(params.lam, self.frequency))
        return CoefficientKernel(random_cell_coefficient(grid, params.lam, seed))


class BallSpec(_Strict):
    type: Literal["ball"]
    center: List[float]
    radius: float = Field(gt=0)
    closed: bool = False

    def build(self):
        return Ball(tuple(self.center), self.radius, closed=self.closed)


class BoxSpec(_Strict):
    type: Literal["box"]
    lo: List[float]
    hi: List[float]

    def build(self):
        return Box(tuple(self.lo), tuple(self.hi))


class HalfSpaceSpec(_Strict):
    type: Literal["half_space"]
    point: List[float]
    normal: List[float]

    def build(self):
        return HalfSpace(tuple(self.point), tuple(self.normal))


class FamilySpec(_Strict):
    variant: Literal["half_space", "cone", "power_cusp", "punctured_ball", "measure_dense"]
    parameter: Optional[float] = None

    def build(self, n: int) -> DomainFamily:
        return DomainFamily(self.variant, n, self.parameter)


class FamilyRegionSpec(FamilySpec):
    type: Literal["family"]


RegionSpec = Union[BallSpec, BoxSpec, HalfSpaceSpec, FamilyRegionSpec]


def build_region(spec, n: int):
    if isinstance(spec, FamilyRegionSpec):
        return spec.build(n).omega()
    return spec.build()


class BoundarySpec(_Strict):
    kind: Literal["ramp", "clamped_linear", "bump", "constant"]
    value: float = 1.0
    center: List[float] = [0.0]
    radius: float = Field(0.5, gt=0)

    def build(self) -> BoundaryData:
        return BoundaryData(self.kind, self.value, tuple(self.center), self.radius)


# --------------------------------------------------------------------------
# subcommand sections


class SolveSection(_Strict):
    domain: RegionSpec = Field(discriminator="type")
    boundary: BoundarySpec


class CapacitySection(_Strict):
    K: RegionSpec = Field(discriminator="type")
    Omega: RegionSpec = Field(discriminator="type")


class WienerSection(_Strict):
    family: FamilySpec
    rho_min: float = Field(gt=0)
    rho_max: float = Field(gt=0)
    levels: Optional[int] = Field(None, gt=0)
    cells_per_rho: int = Field(8, ge=2)
    spacing: Optional[float] = Field(None, gt=0)


class ProbeSection(_Strict):
    family: FamilySpec
    boundary: BoundarySpec
    resolutions: List[int] = Field(min_length=1)
    radii: List[float] = Field(min_length=1)
    wiener_radii: List[float] = [0.125, 0.25]


class FunctionalSection(_Strict):
    cells: int = Field(32, ge=4)
    samples: int = Field(60, gt=0)
    R: float = Field(1.0, gt=0)


class IneqSection(_Strict):
    count: int = Field(100_000, gt=0)
    functional: Optional[FunctionalSection] = None


class ScalingSection(_Strict):
    radii: List[float] = Field(min_length=3)
    R: float = Field(1.0, gt=0)
    cells_per_min_radius: int = Field(16, ge=2)
    exterior: bool = True


class ExperimentConfig(_Strict):
    seed: int = 0
    output: Optional[str] = None
    params: Optional[ParamsSpec] = None
    solver: SolverSpec = SolverSpec()
    grid: Optional[GridSpec] = None
    kernel: KernelSpec = KernelSpec()
    exterior: bool = False
    solve: Optional[SolveSection] = None
    capacity: Optional[CapacitySection] = None
    wiener: Optional[WienerSection] = None
    probe: Optional[ProbeSection] = None
    ineq: Optional[IneqSection] = None
    scaling: Optional[ScalingSection] = None

    def require(self, *names: str):
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required section(s): {', '.join(missing)}")

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


# --------------------------------------------------------------------------
# loading


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths (tuples of keys / list indices) to 1-based source lines."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = (*path, k.value)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, (*path, i), out)
    return out


def _locate(loc: tuple, lines: dict) -> Optional[int]:
    # pydantic inserts union-member tags (e.g. "ball") into loc; drop unknown parts
    path = ()
    best = lines.get((), None)
    for part in loc:
        cand = (*path, part)
        if cand in lines:
            path = cand
            best = lines[cand]
    return best


def _format_errors(err: ValidationError, lines: dict) -> str:
    msgs = []
    for e in err.errors():
        field = ".".join(str(x) for x in e["loc"]) or "<root>"
        line = _locate(tuple(e["loc"]), lines)
        where = f" (line {line})" if line is not None else ""
        if e["type"] == "extra_forbidden":
            msgs.append(f"{field}: unknown key{where}")
        else:
            msgs.append(f"{field}: {e['msg']}{where}")
    return "; ".join(msgs)


def parse_config(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping")
    lines = _line_index(node) if node is not None else {}
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, lines)) from None


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
