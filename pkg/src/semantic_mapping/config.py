"""Pipeline configuration and its flat `key = value` text format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .geometric_segmentation import SegmentationParams
from .instance_refiner import RefineParams

_PER_CLASS = ("theta_d", "theta_o", "theta_l")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    voxel_size: float = 0.01
    truncation: float = 0.04
    block_size: int = 16
    theta_merge: float = 3
    k_c: float = 15.0
    theta: float = 0.5
    min_overlap_ratio: float = 0.25
    min_overlap_voxels: int = 10
    sigma_spatial: float = 0.05
    min_surface_px: int = 20
    min_segment_px: int = 100
    max_concavity_deg: float = 10.0
    max_step_m: float = 0.05
    normal_radius_px: int = 1
    theta_d: float = 0.3
    theta_o: float = 0.3
    theta_l: float = 0.5
    eps_prob: float = 1e-6
    max_pairs_per_instance: int = 8
    semantic_consistency: bool = True
    regularize: bool = True
    refine: bool = True
    queue_capacity: int = 4
    workers: int = 2
    eval_radius: float = 0.03
    eval_min_region: int = 100
    seed: int = 0
    class_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        positive = ("voxel_size", "truncation", "block_size", "k_c", "theta", "sigma_spatial", "max_step_m",
                    "queue_capacity", "workers", "eval_radius", "normal_radius_px", "max_pairs_per_instance")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.truncation < 2 * self.voxel_size:
            raise ConfigError("truncation must be at least two voxels")
        if not 0 <= self.min_overlap_ratio <= 1:
            raise ConfigError("min_overlap_ratio must lie in [0, 1]")
        if not 0 < self.eps_prob < 1:
            raise ConfigError("eps_prob must lie in (0, 1)")
        if not 0 <= self.max_concavity_deg <= 180:
            raise ConfigError("max_concavity_deg must lie in [0, 180]")
        for name in ("theta_merge", "min_overlap_voxels", "min_surface_px", "min_segment_px", "eval_min_region",
                     "theta_d", "theta_o", "theta_l"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for (name, _), v in self.class_overrides.items():
            if name not in _PER_CLASS or v < 0:
                raise ConfigError(f"bad per-class override {name}={v}")

    def segmentation(self) -> SegmentationParams:
        return SegmentationParams(self.max_concavity_deg, self.max_step_m, self.min_segment_px,
                                  self.normal_radius_px)

    def refine_params(self, category: int) -> RefineParams:
        get = lambda name: self.class_overrides.get((name, category), getattr(self, name))  # noqa: E731
        return RefineParams(get("theta_d"), get("theta_o"), get("theta_l"))

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)

    # ------------------------------------------------------------------ text io
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "class_overrides":
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        for (name, cat), v in sorted(self.class_overrides.items()):
            lines.append(f"{name}.{cat} = {_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls) if f.name != "class_overrides"}
        values, overrides = {}, {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            base, _, suffix = key.partition(".")
            if suffix:
                if base not in _PER_CLASS or not suffix.isdigit():
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                overrides[(base, int(suffix))] = _parse(value, "float", key)
            elif key in types:
                values[key] = _parse(value, types[key], key)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        return cls(**values, class_overrides=overrides)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                return cls.from_text(fh.read())
            except ConfigError as exc:
                raise ConfigError(f"{path}: {exc}") from None


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(value: str, typ, key: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if typ == "int":
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for {key}") from None
