"""Multi-domain tabular data translation through a shared latent space, for augmenting small datasets."""

from .domains import Dataset, DomainSchema, Feature, MultiDomainSpec, gen_synthetic, load_csv, write_csv
from .errors import ConfigError, DataError, NumericError, RadialGanError
from .model import HiddenConfig, RadialGanModel, TrainConfig, build_model, train, translate

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DomainSchema",
    "Feature",
    "HiddenConfig",
    "MultiDomainSpec",
    "NumericError",
    "RadialGanError",
    "RadialGanModel",
    "TrainConfig",
    "build_model",
    "gen_synthetic",
    "load_csv",
    "train",
    "translate",
    "write_csv",
]
