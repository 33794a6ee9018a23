"""Exception hierarchy shared by the library and the command line."""

from typing import Iterable, List, Optional


class RadnasError(Exception):
    """Base class for every error raised by radnas."""


class RDFormatError(RadnasError):
    """Malformed `.rdm` file, RD map or ADC cube."""


class DatasetError(RadnasError):
    def __init__(self, message: str, sample_id: Optional[str] = None):
        self.sample_id = sample_id
        prefix = f"[{sample_id}] " if sample_id else ""
        super().__init__(prefix + message)


class ShapeError(RadnasError):
    """Tensor shapes or spatial sizes incompatible with the network."""


class GeneError(RadnasError):
    def __init__(self, message: str, blocks: Iterable[str] = ()):
        self.blocks: List[str] = list(blocks)
        if self.blocks:
            message = f"{message} (blocks: {', '.join(self.blocks)})"
        super().__init__(message)


class TrainingDivergedError(RadnasError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at step {step}")


class SearchError(RadnasError):
    """Evolutionary search could not proceed (e.g. infeasible constraint)."""


class ConfigError(RadnasError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid config:\n  " + "\n  ".join(self.violations))


class ArtifactMissingError(RadnasError):
    def __init__(self, path, hint: str = ""):
        self.path = str(path)
        message = f"required artifact not found: {self.path}"
        if hint:
            message += f" ({hint})"
        super().__init__(message)


class ArtifactHashError(RadnasError):
    def __init__(self, path, expected: str, actual: str):
        self.path = str(path)
        super().__init__(f"artifact {self.path} changed since it was produced: expected sha256 {expected[:12]}…, got {actual[:12]}…")
