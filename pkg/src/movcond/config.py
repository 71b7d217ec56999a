"""Case configuration, stored as YAML.

Every physical constant of the benchmark is a default here; solver modules
take them as arguments only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .mesh import Discretization, SlabGeometry
from .schemes import Material, Profile, Scheme, SchemeConfig, SourceField

ALPHA_CONVENTIONS = ("with-mu", "without-mu")
REFERENCE_KINDS = ("modal", "galerkin")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeSpec:
    scheme: Scheme
    alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.alpha and not self.scheme.gauge_free:
            raise ConfigError(f"alpha given for {self.scheme.value}")

    @property
    def label(self) -> str:
        if self.scheme.gauge_free:
            return f"{self.scheme.value}-a{self.alpha:g}"
        return self.scheme.value


@dataclass(frozen=True)
class SourceSettings:
    """Applied field; its half-width is the geometry's ``field_halfwidth``."""

    kind: Profile = Profile.COSINE
    amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Profile(self.kind))


@dataclass(frozen=True)
class ReferenceSettings:
    kind: str = "modal"
    n_modes: int = 300
    n_store: int = 8001
    max_element_pe: float = 0.5
    y_factor: int = 4
    element_cap: int = 2_000_000
    cache_dir: str | None = None
    generate: bool = True

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise ConfigError(f"reference kind must be one of {REFERENCE_KINDS}")
        if self.n_modes < 1 or self.n_store < 3:
            raise ConfigError("reference resolution too small")


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    vtk: bool = False
    fields: bool = True
    # wall-clock times break byte-identical reruns, so they are opt-in
    timing: bool = False


@dataclass(frozen=True)
class CaseConfig:
    geometry: SlabGeometry = field(default_factory=SlabGeometry)
    discretization: Discretization = field(default_factory=Discretization)
    material: Material = field(default_factory=Material)
    source: SourceSettings = field(default_factory=SourceSettings)
    schemes: tuple[SchemeSpec, ...] = (
        SchemeSpec(Scheme.GALERKIN),
        SchemeSpec(Scheme.SUPG_GAUGED),
        SchemeSpec(Scheme.SUPG_GAUGE_FREE, 0.0),
    )
    pe: tuple[float, ...] | None = (200.0,)
    u_z: float | None = None
    alpha_convention: str = "with-mu"
    reference: ReferenceSettings = field(default_factory=ReferenceSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        if (self.pe is None) == (self.u_z is None):
            raise ConfigError("give exactly one of pe and u_z")
        if self.pe is not None:
            pe = tuple(float(p) for p in self.pe)
            if not pe or any(not p > 0 for p in pe):
                raise ConfigError("pe values must be positive")
            object.__setattr__(self, "pe", pe)
        if not self.schemes:
            raise ConfigError("scheme list is empty")
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.alpha_convention not in ALPHA_CONVENTIONS:
            raise ConfigError(f"alpha_convention must be one of {ALPHA_CONVENTIONS}")

    def source_field(self) -> SourceField:
        s = self.source
        return SourceField(s.kind, s.amplitude, self.geometry.field_halfwidth, s.center)

    def scheme_config(self, spec: SchemeSpec, u_z: float) -> SchemeConfig:
        return SchemeConfig(
            scheme=spec.scheme, alpha=spec.alpha, u_z=u_z,
            alpha_with_mu=self.alpha_convention == "with-mu",
        )

    def with_pe(self, pe) -> CaseConfig:
        return replace(self, pe=tuple(pe), u_z=None)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        def plain(v):
            if isinstance(v, (Scheme, Profile)):
                return v.value
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        return {f.name: plain(_asdict(getattr(self, f.name))) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict | None) -> CaseConfig:
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        sections = {
            "geometry": SlabGeometry, "discretization": Discretization,
            "material": Material, "source": SourceSettings,
            "reference": ReferenceSettings, "output": OutputSettings,
        }
        try:
            for name, typ in sections.items():
                if name in data:
                    kw[name] = _build(typ, data[name], name)
            if "schemes" in data:
                kw["schemes"] = tuple(_build(SchemeSpec, s, "schemes") for s in data["schemes"])
            if "pe" in data:
                pe = data["pe"]
                kw["pe"] = None if pe is None else tuple(pe if isinstance(pe, list) else [pe])
            if "u_z" in data:
                kw["u_z"] = None if data["u_z"] is None else float(data["u_z"])
                if kw["u_z"] is not None and "pe" not in data:
                    kw["pe"] = None
            if "alpha_convention" in data:
                kw["alpha_convention"] = data["alpha_convention"]
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def parse(cls, text: str) -> CaseConfig:
        return cls.from_dict(yaml.safe_load(text))

    @classmethod
    def load(cls, path: str | Path) -> CaseConfig:
        return cls.parse(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dump())


def _asdict(v):
    if hasattr(v, "__dataclass_fields__"):
        return asdict(v)
    if isinstance(v, tuple) and v and hasattr(v[0], "__dataclass_fields__"):
        return [asdict(x) for x in v]
    return v


def _build(typ, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in fields(typ)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(extra)}")
    return typ(**data)
