"""
Core RD data types and the manifest records that reference them on disk.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from radnas.exceptions import DatasetError, RDFormatError

BOX_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RawADCCube:
    """Complex ADC samples of one frame, shaped [slow_time_chirps, fast_time_samples]."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or min(samples.shape) < 2:
            raise RDFormatError(f"ADC cube must be 2-D with both dims >= 2, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            bad = int(np.count_nonzero(~np.isfinite(samples)))
            raise RDFormatError(f"ADC cube contains {bad} non-finite samples")
        object.__setattr__(self, "samples", samples.astype(np.complex128, copy=False))

    @property
    def num_chirps(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class RDMap:
    """Range-Doppler intensity in dB, shaped [range_bins, doppler_bins], stored as float32."""

    intensity: np.ndarray

    def __post_init__(self):
        intensity = np.asarray(self.intensity)
        if intensity.ndim != 2 or min(intensity.shape) < 1:
            raise RDFormatError(f"RD map must be a non-empty 2-D array, got shape {intensity.shape}")
        intensity = intensity.astype(np.float32, copy=False)
        if not np.all(np.isfinite(intensity)):
            raise RDFormatError("RD map contains non-finite values")
        object.__setattr__(self, "intensity", intensity)

    @property
    def range_bins(self) -> int:
        return self.intensity.shape[0]

    @property
    def doppler_bins(self) -> int:
        return self.intensity.shape[1]


@dataclass(frozen=True)
class RepresentationPair:
    heatmap: np.ndarray  # [3, H, W] in [0, 1]
    grayscale: np.ndarray  # [1, H, W] in [0, 1]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.heatmap.shape[0] != 3 or self.grayscale.shape[0] != 1:
            raise RDFormatError(
                f"expected heatmap [3,H,W] and grayscale [1,H,W], got {self.heatmap.shape} / {self.grayscale.shape}"
            )
        if self.heatmap.shape[1:] != self.grayscale.shape[1:]:
            raise RDFormatError("heatmap and grayscale spatial sizes differ")

    @property
    def size(self) -> Tuple[int, int]:
        return tuple(self.grayscale.shape[1:])


class Annotation(BaseModel):
    """Ground-truth object: class id and a normalized (cx, cy, w, h) box."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    cls: int = Field(ge=0)
    cx: float
    cy: float
    w: float = Field(gt=0.0)
    h: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _inside_unit_square(self):
        x1, y1, x2, y2 = self.xyxy()
        if x1 < -BOX_TOLERANCE or y1 < -BOX_TOLERANCE or x2 > 1 + BOX_TOLERANCE or y2 > 1 + BOX_TOLERANCE:
            raise ValueError(f"box ({self.cx}, {self.cy}, {self.w}, {self.h}) leaves the unit square")
        return self

    def xyxy(self) -> Tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    def flipped_doppler(self) -> "Annotation":
        return self.model_copy(update={"cx": 1.0 - self.cx})


class ManifestRecord(BaseModel):
    sample_id: str
    rd: str
    labels: List[Annotation] = Field(default_factory=list)


class DatasetManifest(BaseModel):
    """All records of one split; `root` is the directory RD paths are relative to."""

    split: Literal["train", "val", "test"]
    root: Path
    records: List[ManifestRecord] = Field(default_factory=list)

    @field_validator("records")
    @classmethod
    def _unique_ids(cls, records: List[ManifestRecord]):
        seen, dupes = set(), set()
        for record in records:
            if record.sample_id in seen:
                dupes.add(record.sample_id)
            seen.add(record.sample_id)
        if dupes:
            raise ValueError(f"duplicate sample_id(s): {', '.join(sorted(dupes))}")
        return records

    def resolve(self, record: ManifestRecord) -> Path:
        return (self.root / record.rd).resolve()

    def missing_files(self) -> List[str]:
        return [r.sample_id for r in self.records if not self.resolve(r).is_file()]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    @classmethod
    def read(cls, path: Union[str, Path], split: Optional[str] = None) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"manifest not found: {path}")
        records = []
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(ManifestRecord.model_validate_json(line))
            except ValueError as e:
                sample_id = None
                try:
                    sample_id = json.loads(line).get("sample_id")
                except ValueError:
                    pass
                raise DatasetError(f"malformed record on line {line_no} of {path}: {e}", sample_id=sample_id) from e
        split = split or _split_from_path(path)
        return cls(split=split, root=path.parent, records=records)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(record_to_json(r), separators=(",", ":")) for r in self.records]
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path


def record_to_json(record: ManifestRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "rd": record.rd,
        "labels": [
            {"cls": a.cls, "cx": round(a.cx, 6), "cy": round(a.cy, 6), "w": round(a.w, 6), "h": round(a.h, 6)}
            for a in record.labels
        ],
    }


def _split_from_path(path: Path) -> str:
    name = path.parent.name
    return name if name in ("train", "val", "test") else "test"
