"""
Dataset loading: manifest -> (RepresentationPair, annotations), and the torch
Dataset / collate used by the trainers.
"""

import logging
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from radnas.exceptions import DatasetError, RDFormatError
from radnas.rdmap_io.records import Annotation, DatasetManifest, ManifestRecord, RepresentationPair
from radnas.rdmap_io.rdm_format import read_rdm
from radnas.rdmap_io.transforms import encode_pair

logger = logging.getLogger(__name__)


def _load_record(manifest: DatasetManifest, record: ManifestRecord, size: Optional[Tuple[int, int]]) -> RepresentationPair:
    path = manifest.resolve(record)
    if not path.is_file():
        raise DatasetError(f"RD file missing: {path}", sample_id=record.sample_id)
    try:
        rd = read_rdm(path)
    except RDFormatError as e:
        raise DatasetError(str(e), sample_id=record.sample_id) from e
    return encode_pair(rd, size=size)


def load_dataset(
    manifest_path: Union[str, Path],
    shuffle: bool = False,
    seed: Optional[int] = None,
    size: Optional[Tuple[int, int]] = None,
) -> Iterator[Tuple[RepresentationPair, List[Annotation]]]:
    """Yield (pair, annotations) per record; manifest order unless `shuffle`."""
    manifest = DatasetManifest.read(manifest_path)
    order = np.arange(len(manifest))
    if shuffle:
        order = np.random.default_rng(seed).permutation(order)
    for index in order:
        record = manifest.records[int(index)]
        yield _load_record(manifest, record, size), list(record.labels)


def labels_to_tensor(labels: Sequence[Annotation]) -> torch.Tensor:
    """[n, 5] rows of (cls, cx, cy, w, h)."""
    if not labels:
        return torch.zeros((0, 5), dtype=torch.float32)
    return torch.tensor([[a.cls, a.cx, a.cy, a.w, a.h] for a in labels], dtype=torch.float32)


class RDMapDataset(Dataset):
    """Manifest-backed dataset; the only augmentation is a Doppler-axis flip."""

    def __init__(
        self,
        manifest_path: Union[str, Path],
        flip_prob: float = 0.0,
        size: Optional[Tuple[int, int]] = None,
        seed: int = 0,
    ):
        self.manifest = DatasetManifest.read(manifest_path)
        missing = self.manifest.missing_files()
        if missing:
            raise DatasetError(f"{len(missing)} RD file(s) missing under {self.manifest.root}", sample_id=missing[0])
        self.flip_prob = flip_prob
        self.size = size
        self.seed = seed
        self.epoch = 0

    def __len__(self) -> int:
        return len(self.manifest)

    def set_epoch(self, epoch: int) -> None:
        """Flip decisions are a function of (seed, epoch, index) so workers agree."""
        self.epoch = epoch

    def __getitem__(self, index: int):
        record = self.manifest.records[index]
        pair = _load_record(self.manifest, record, self.size)
        heatmap, grayscale, labels = pair.heatmap, pair.grayscale, list(record.labels)
        if self.flip_prob > 0:
            draw = np.random.default_rng([self.seed, self.epoch, index]).random()
            if draw < self.flip_prob:
                heatmap = heatmap[:, :, ::-1]
                grayscale = grayscale[:, :, ::-1]
                labels = [a.flipped_doppler() for a in labels]
        return (
            torch.from_numpy(np.ascontiguousarray(heatmap)),
            torch.from_numpy(np.ascontiguousarray(grayscale)),
            labels_to_tensor(labels),
        )


def collate_batch(items):
    heatmaps, grays, labels = zip(*items)
    return torch.stack(heatmaps), torch.stack(grays), list(labels)


def make_loader(
    dataset: RDMapDataset,
    batch_size: int,
    shuffle: bool,
    seed: int,
    num_workers: int = 0,
    drop_last: bool = False,
) -> DataLoader:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        collate_fn=collate_batch,
        generator=generator,
        drop_last=drop_last,
    )
