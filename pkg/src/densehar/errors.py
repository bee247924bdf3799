"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes or channel counts do not line up."""


class GeometryError(ValueError):
    """A time length is incompatible with the requested operation."""


class LabelError(ValueError):
    """A class id is outside the declared range."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class ContractError(ValueError):
    """An argument breaks an operation's calling contract."""


class DataError(ValueError):
    """A dataset is empty, inconsistent, or otherwise unusable."""


class ParseError(ValueError):
    """A file could not be parsed; message carries the line number."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
