"""Run configuration as a flat ``key=value`` text file."""

from dataclasses import asdict, dataclass, fields, replace

SAMPLERS = ("uniform", "knn_uniform", "knn_popularity")
KNN_ANCHORS = ("next", "current")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 50
    d_h: int = 128
    n_layers: int = 2
    m: int = 50
    ngram: int = 3
    geohash_len: int = 6
    grid_intervals: int = 5000
    knn: int = 2000
    neg_count: int = 5
    temperature: float = 1.0
    use_geo_encoder: bool = True
    use_grid_mapper: bool = True
    use_target_decoder: bool = True
    weighted_loss: bool = True
    sampler: str = "knn_uniform"
    knn_anchor: str = "next"
    propagate_weights: bool = False
    geo_positional: bool = False
    key_pad_mask: bool = False

    def __post_init__(self):
        for name in ("d", "d_h", "m", "ngram", "geohash_len", "grid_intervals", "knn", "neg_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.geohash_len < self.ngram:
            raise ConfigError("geohash_len must be >= ngram")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.knn_anchor not in KNN_ANCHORS:
            raise ConfigError(f"knn_anchor must be one of {KNN_ANCHORS}")

    @property
    def n_parts(self):
        return 1 + int(self.use_geo_encoder) + 2 * int(self.use_grid_mapper)

    @property
    def width(self):
        """Width of the concatenated location representation."""
        return self.n_parts * self.d

    def model_fields(self):
        return {f.name: getattr(self, f.name) for f in fields(ModelConfig)}


@dataclass(frozen=True)
class RunConfig(ModelConfig):
    dataset: str = ""
    dataset_format: str = "auto"
    seed: int = 0  # initialization, batch order and training negatives
    split_seed: int = 0  # evaluation candidates
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.001
    weight_decay: float = 0.0001
    eval_negatives: int = 100
    min_user_checkins: int = 20
    min_loc_visits: int = 10
    output_dir: str = "runs/pasr"

    def __post_init__(self):
        super().__post_init__()
        if self.epochs < 0 or self.batch_size < 1 or self.eval_negatives < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and eval_negatives >= 1 required")

    def model_config(self):
        return ModelConfig(**self.model_fields())

    def with_overrides(self, **kw):
        return replace(self, **kw)


def _parse_value(raw, kind):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean {raw!r}")
    return kind(raw.strip())


def _types(cls):
    defaults = cls()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


def dumps(cfg):
    return "".join(f"{k}={_format(v)}\n" for k, v in asdict(cfg).items())


def _format(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def loads(text, cls=RunConfig):
    kinds = _types(cls)
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(raw, kinds[key])
    return cls(**values)


def load(path, cls=RunConfig):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), cls)


def save(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
