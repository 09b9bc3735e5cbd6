"""Experiment configuration: JSON in, validated dataclasses out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from ..geometry import as_gamma
from ..operators import make_operator
from .catalog import PROBLEMS

CONFIG_VERSION = "1.0"
CERTIFICATES = ("lipschitz", "hopf-singular", "hopf-degenerate")
BOUNDS = ("lipschitz", "hopf")


@dataclass
class ProblemConfig:
    catalog: str = "zero-data"
    gamma: float = 0.0
    operator: str = "laplacian"
    ellipticity: List[float] = field(default_factory=lambda: [1.0, 1.0])
    n: int = 2
    radius: float = 1.0
    horizon: float = 1.0
    params: dict = field(default_factory=dict)


@dataclass
class GridConfig:
    h: float = 1 / 32
    time_spacing: Optional[float] = None


@dataclass
class SchemeSettings:
    cfl_safety: float = 0.9
    dt: Optional[float] = None
    coefficient_cap: Optional[float] = None


@dataclass
class AnalysisConfig:
    """What to compute after (or instead of) the solve.

    ``fits``: list of ``{"order", "levels", "alpha_band", "min_r2", "source",
    "method", "min_nodes"}``; ``source`` is ``"solution"`` or ``"exact"``.
    ``bounds``: subset of ``["lipschitz", "hopf"]``.
    ``certificates``: list of ``{"kind", "gamma", "ellipticity", "n",
    "beta", "delta", "M", "expect"}`` with ``expect`` ``"pass"`` or ``"fail"``.
    ``convergence``: ``{"resolutions": [...], "min_order": ..., "max_error": ...}``.
    ``comparison``: ``{"trials", "bump", "gammas"}``.
    ``max_error``: tolerance on the nodewise error against an exact solution.
    """

    fits: List[dict] = field(default_factory=list)
    bounds: List[str] = field(default_factory=list)
    certificates: List[dict] = field(default_factory=list)
    convergence: Optional[dict] = None
    comparison: Optional[dict] = None
    max_error: Optional[float] = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    scheme: SchemeSettings = field(default_factory=SchemeSettings)
    analyses: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: str = "out"
    seed: int = 0
    version: str = CONFIG_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        parts = {"problem": ProblemConfig, "grid": GridConfig, "scheme": SchemeSettings,
                 "analyses": AnalysisConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in parts.items():
            if key in data:
                sub = data[key]
                bad = set(sub) - {f.name for f in fields(typ)}
                if bad:
                    raise ValueError(f"unknown keys in {key!r}: {sorted(bad)}")
                data[key] = typ(**sub)
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def validate(self) -> "ExperimentConfig":
        """Check references and ranges before any computation."""
        p = self.problem
        if p.catalog not in PROBLEMS:
            raise ValueError(f"unknown catalog problem {p.catalog!r}; known: {sorted(PROBLEMS)}")
        as_gamma(p.gamma)
        make_operator(p.operator, p.ellipticity, p.n)
        if not self.grid.h > 0:
            raise ValueError("grid.h must be positive")
        if not 0 < self.scheme.cfl_safety:
            raise ValueError("scheme.cfl_safety must be positive")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for fit in self.analyses.fits:
            if fit.get("order") not in (1, 2):
                raise ValueError(f"fit order must be 1 or 2, got {fit.get('order')!r}")
            if fit.get("source", "solution") not in ("solution", "exact"):
                raise ValueError("fit source must be 'solution' or 'exact'")
        for b in self.analyses.bounds:
            if b not in BOUNDS:
                raise ValueError(f"unknown bound check {b!r}; known: {BOUNDS}")
        for c in self.analyses.certificates:
            if c.get("kind") not in CERTIFICATES:
                raise ValueError(f"unknown certificate {c.get('kind')!r}; known: {CERTIFICATES}")
            if c.get("expect", "pass") not in ("pass", "fail"):
                raise ValueError("certificate expect must be 'pass' or 'fail'")
        conv = self.analyses.convergence
        if conv is not None and len(conv.get("resolutions", [])) < 3:
            raise ValueError("convergence study needs at least 3 resolutions")
        comp = self.analyses.comparison
        if comp is not None and int(comp.get("trials", 1)) < 1:
            raise ValueError("comparison trials must be >= 1")
        return self


def _cfg(name, problem, grid=None, analyses=None, **kw):
    return ExperimentConfig(name, ProblemConfig(**problem), GridConfig(**(grid or {})),
                            SchemeSettings(), AnalysisConfig(**(analyses or {})), **kw)


def presets() -> dict:
    """Built-in named configurations, addressable from the CLI by name."""
    return {
        "remark14-gamma05": _cfg(
            "remark14-gamma05", {"catalog": "remark14", "gamma": 0.5},
            {"h": 1 / 64},
            {"fits": [{"order": 2, "levels": [1, 2, 3, 4, 5], "source": "exact",
                       "alpha_band": [0.48, 0.52]},
                      {"order": 2, "levels": [1, 2, 3, 4, 5], "alpha_band": [0.40, 0.60]}],
             "max_error": 5e-3,
             "convergence": {"resolutions": [1 / 16, 1 / 32, 1 / 64], "min_order": 1.0,
                             "max_error": 5e-3}}),
        "remark12-gamma05": _cfg(
            "remark12-gamma05", {"catalog": "remark12", "gamma": 0.5, "horizon": 0.5,
                                 "params": {"eps": 0.5}},
            {"h": 1 / 128, "time_spacing": 1 / 1024},
            {"fits": [{"order": 1, "levels": [1, 2, 3, 4, 5], "alpha_band": [0.45, 0.55],
                       "min_r2": 0.98}]}),
        "zero-data": _cfg(
            "zero-data", {"catalog": "zero-data", "gamma": 0.5}, {"h": 1 / 32},
            {"fits": [{"order": 1, "levels": [1, 2, 3, 4]}], "max_error": 0.0}),
        "heat-sines": _cfg(
            "heat-sines", {"catalog": "heat-sines", "gamma": 0.0, "horizon": 0.25},
            {"h": 1 / 32},
            {"convergence": {"resolutions": [1 / 8, 1 / 16, 1 / 32], "min_order": 1.5}}),
        "positive-forcing": _cfg(
            "positive-forcing", {"catalog": "positive-forcing", "gamma": 0.5},
            {"h": 1 / 64}, {"bounds": ["lipschitz", "hopf"]}),
        "comparison": _cfg(
            "comparison", {"catalog": "positive-forcing", "gamma": 0.5, "horizon": 0.25},
            {"h": 1 / 16},
            {"comparison": {"trials": 20, "bump": 0.5, "gammas": [-1.0, 0.0, 0.5]}}),
        "certificates": _cfg(
            "certificates", {"catalog": "zero-data", "gamma": 0.5},
            analyses={"certificates": [
                {"kind": "lipschitz", "gamma": 0.5, "ellipticity": [1.0, 2.0]},
                {"kind": "lipschitz", "gamma": -1.0, "ellipticity": [1.0, 2.0]},
                {"kind": "hopf-singular", "gamma": -1.0, "ellipticity": [1.0, 2.0]},
                {"kind": "hopf-degenerate", "gamma": 0.5, "ellipticity": [1.0, 2.0]},
                {"kind": "lipschitz", "gamma": 0.5, "ellipticity": [1.0, 2.0], "beta": 1.0,
                 "expect": "fail"},
                {"kind": "hopf-singular", "gamma": -1.0, "ellipticity": [1.0, 2.0],
                 "beta": 10.0, "expect": "fail"},
                {"kind": "hopf-degenerate", "gamma": 0.5, "ellipticity": [1.0, 2.0],
                 "beta": 4.0, "expect": "fail"},
            ]}),
    }
