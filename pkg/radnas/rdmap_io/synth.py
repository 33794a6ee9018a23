"""
Desk-scale synthetic RD dataset.

Each object is a 2-D Gaussian blob in linear amplitude, added with a random
phase to complex Gaussian noise. The shape family (range/Doppler aspect)
encodes the class; the ground-truth box is the blob's contour at
`contour_fraction` of its peak amplitude.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from radnas.exceptions import DatasetError
from radnas.rdmap_io.records import Annotation, DatasetManifest, ManifestRecord, RDMap
from radnas.rdmap_io.rdm_format import write_rdm
from radnas.rdmap_io.transforms import DB_EPS, adc_to_rd, rd_field_to_adc

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

# Doppler-to-range sigma ratio per class family; classes cycle through these.
ASPECT_FAMILIES = (1.0, 3.0, 1.0 / 3.0, 2.0, 0.5)


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    height: int = Field(64, ge=8, description="range bins")
    width: int = Field(64, ge=8, description="Doppler bins")
    train: int = Field(500, ge=0)
    val: int = Field(100, ge=0)
    test: int = Field(0, ge=0)
    num_classes: int = Field(2, ge=1, le=len(ASPECT_FAMILIES))
    max_objects: int = Field(3, ge=1)
    snr_db: Tuple[float, float] = (12.0, 24.0)
    sigma_bins: Tuple[float, float] = (1.2, 2.5)
    contour_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    emit_adc: bool = False

    @model_validator(mode="after")
    def _ranges(self):
        if self.train + self.val + self.test == 0:
            raise ValueError("synthetic dataset needs at least one sample")
        if self.snr_db[0] > self.snr_db[1] or self.sigma_bins[0] > self.sigma_bins[1]:
            raise ValueError("snr_db and sigma_bins must be (low, high)")
        return self

    def split_sizes(self) -> Dict[str, int]:
        return {"train": self.train, "val": self.val, "test": self.test}


def _half_extent(sigma: float, fraction: float) -> float:
    return sigma * math.sqrt(-2.0 * math.log(fraction))


def _sample_objects(config: SynthConfig, rng: np.random.Generator) -> List[dict]:
    objects = []
    for _ in range(int(rng.integers(1, config.max_objects + 1))):
        cls = int(rng.integers(0, config.num_classes))
        aspect = ASPECT_FAMILIES[cls]
        base = float(rng.uniform(*config.sigma_bins))
        jitter = float(rng.uniform(0.85, 1.15))
        if aspect >= 1.0:
            sigma_r, sigma_d = base, base * aspect * jitter
        else:
            sigma_r, sigma_d = base / aspect * jitter, base
        half_r = _half_extent(sigma_r, config.contour_fraction)
        half_d = _half_extent(sigma_d, config.contour_fraction)
        # keep the whole contour box strictly inside the map
        lo_r, hi_r = half_r + 0.5, config.height - half_r - 0.5
        lo_d, hi_d = half_d + 0.5, config.width - half_d - 0.5
        if lo_r >= hi_r or lo_d >= hi_d:
            continue
        objects.append(
            {
                "cls": cls,
                "r": float(rng.uniform(lo_r, hi_r)),
                "d": float(rng.uniform(lo_d, hi_d)),
                "sigma_r": sigma_r,
                "sigma_d": sigma_d,
                "half_r": half_r,
                "half_d": half_d,
                "snr_db": float(rng.uniform(*config.snr_db)),
                "phase": float(rng.uniform(0.0, 2.0 * math.pi)),
            }
        )
    return objects


def synthesize_field(config: SynthConfig, rng: np.random.Generator) -> Tuple[np.ndarray, List[Annotation]]:
    """One complex [range, doppler] field plus its annotations."""
    noise = (rng.standard_normal((config.height, config.width)) + 1j * rng.standard_normal((config.height, config.width))) / math.sqrt(2.0)
    field = noise
    rr, dd = np.meshgrid(np.arange(config.height) + 0.5, np.arange(config.width) + 0.5, indexing="ij")
    labels = []
    for obj in _sample_objects(config, rng):
        amplitude = 10.0 ** (obj["snr_db"] / 20.0)
        blob = np.exp(-((rr - obj["r"]) ** 2) / (2 * obj["sigma_r"] ** 2) - ((dd - obj["d"]) ** 2) / (2 * obj["sigma_d"] ** 2))
        field = field + amplitude * blob * np.exp(1j * obj["phase"])
        # image x axis is Doppler (width), y axis is range (height)
        labels.append(
            Annotation(
                cls=obj["cls"],
                cx=obj["d"] / config.width,
                cy=obj["r"] / config.height,
                w=2 * obj["half_d"] / config.width,
                h=2 * obj["half_r"] / config.height,
            )
        )
    return field, labels


def _check_class_balance(counts: np.ndarray, split: str) -> None:
    total = int(counts.sum())
    if total == 0:
        return
    freqs = counts / total
    logger.info("[SYNTH] %s class frequencies over %d objects: %s", split, total, np.round(freqs, 3).tolist())
    expected = 1.0 / len(counts)
    if total >= 1000 and np.any(np.abs(freqs - expected) > 0.05):
        logger.warning("[SYNTH] %s class frequencies drift beyond 5%% of uniform: %s", split, freqs.tolist())


def synth_generate(config: SynthConfig, seed: int, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write `<out_dir>/<split>/manifest.jsonl` and RD files for every non-empty split.

    With `emit_adc`, raw ADC cubes (`adc/*.npy`) and `adc_manifest.jsonl` are
    written instead and `preprocess_adc` turns them into RD maps.
    Returns split -> manifest path.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"cannot create output directory {out_dir}: {e}") from e

    manifests = {}
    for split_index, split in enumerate(SPLITS):
        count = config.split_sizes()[split]
        if count == 0:
            continue
        rng = np.random.default_rng([seed, split_index])
        split_dir = out_dir / split
        records = []
        class_counts = np.zeros(config.num_classes, dtype=np.int64)
        for i in range(count):
            sample_id = f"{split}_{i:05d}"
            field, labels = synthesize_field(config, rng)
            for label in labels:
                class_counts[label.cls] += 1
            if config.emit_adc:
                rel = f"adc/{sample_id}.npy"
                (split_dir / "adc").mkdir(parents=True, exist_ok=True)
                np.save(split_dir / rel, rd_field_to_adc(field).samples.astype(np.complex64))
            else:
                rel = f"rd/{sample_id}.rdm"
                write_rdm(split_dir / rel, RDMap(20.0 * np.log10(np.abs(field) + DB_EPS)))
            records.append(ManifestRecord(sample_id=sample_id, rd=rel, labels=labels))
        _check_class_balance(class_counts, split)
        manifest_name = "adc_manifest.jsonl" if config.emit_adc else "manifest.jsonl"
        manifests[split] = DatasetManifest(split=split, root=split_dir, records=records).write(split_dir / manifest_name)
        logger.info("[SYNTH] wrote %d %s samples to %s", count, split, manifests[split])
    return manifests


def preprocess_adc(adc_manifest_path: Union[str, Path]) -> Path:
    """Convert the ADC cubes listed in an `adc_manifest.jsonl` into `.rdm` maps and a `manifest.jsonl`."""
    adc_manifest = DatasetManifest.read(adc_manifest_path)
    records = []
    for record in adc_manifest:
        path = adc_manifest.resolve(record)
        if not path.is_file():
            raise DatasetError(f"ADC cube missing: {path}", sample_id=record.sample_id)
        rd = adc_to_rd(np.load(path))
        rel = f"rd/{record.sample_id}.rdm"
        write_rdm(adc_manifest.root / rel, rd)
        records.append(ManifestRecord(sample_id=record.sample_id, rd=rel, labels=record.labels))
    out = DatasetManifest(split=adc_manifest.split, root=adc_manifest.root, records=records)
    path = out.write(adc_manifest.root / "manifest.jsonl")
    logger.info("[PREPROCESS] converted %d ADC cubes into %s", len(records), path)
    return path
