"""Pipeline configuration as a flat ``key = value`` text file."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .correspond import MODES
from .errors import FormatError, ValidationError
from .spectral import RHO_MODES


@dataclass
class PipelineConfig:
    resolution: int = 128
    tau: float = 0.25
    K: int = 16
    k: int = 30
    eps: float = 1e-6
    rho: str = "radius"
    mode: str = "nearest"
    match_k: int = 10
    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.3
    drift_iters: int = 50
    drift_lambda: float = 2.0
    seg_parts: int = 4
    seg_subspaces: int = 8
    seg_seed: int = 7
    seg_k: int = 30
    seg_weighting: bool = True
    gsc_k: int = 8

    def validate(self):
        def need(name, ok, what):
            if not ok:
                raise ValidationError(name, f"{what} (got {getattr(self, name)!r})")

        need("resolution", 8 <= self.resolution <= 512, "must lie in [8, 512]")
        need("tau", self.tau >= 0, "must be >= 0")
        need("K", self.K >= 0, "must be >= 0")
        need("k", self.k >= 1, "must be >= 1")
        need("eps", self.eps > 0, "must be > 0")
        need("rho", self.rho in RHO_MODES, f"must be one of {RHO_MODES}")
        need("mode", self.mode in MODES, f"must be one of {MODES}")
        # match_k and seg_k are clamped to the modes available where they are used
        need("match_k", self.match_k >= 1, "must be >= 1")
        for name in ("alpha", "beta", "gamma"):
            need(name, getattr(self, name) >= 0, "must be >= 0")
        need("alpha", self.alpha + self.beta + self.gamma > 0, "alpha + beta + gamma must be > 0")
        need("drift_iters", self.drift_iters >= 1, "must be >= 1")
        need("drift_lambda", self.drift_lambda > 0, "must be > 0")
        need("seg_parts", self.seg_parts >= 2, "must be >= 2")
        need("seg_subspaces", self.seg_subspaces >= 1, "must be >= 1")
        need("seg_seed", self.seg_seed >= 0, "must be >= 0")
        need("seg_k", self.seg_k >= 0, "must be >= 0")
        need("gsc_k", self.gsc_k >= 1, "must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)

    def subset(self, names):
        return {n: getattr(self, n) for n in names}

    def dumps(self):
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
        return path

    def updated(self, **overrides):
        """Copy with the non-None ``overrides`` applied, then validated."""
        d = self.to_dict()
        for key, v in overrides.items():
            if v is None:
                continue
            if key not in d:
                raise ValidationError(key, "unknown configuration key")
            d[key] = _coerce(key, type(d[key]), v)
        return PipelineConfig(**d).validate()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, typ, value):
    if isinstance(value, typ) and not (typ is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ValidationError(key, f"cannot parse {text!r} as {typ.__name__}") from None


def parse_config(text) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return PipelineConfig().updated(**values)


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
