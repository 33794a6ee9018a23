import json

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from radnas.exceptions import DatasetError
from radnas.rdmap_io import (
    Annotation,
    DatasetManifest,
    RDMapDataset,
    collate_batch,
    encode_pair,
    labels_to_tensor,
    load_dataset,
    read_rdm,
)


class TestAnnotation:
    def test_box_must_stay_inside_unit_square(self):
        with pytest.raises(ValidationError):
            Annotation(cls=0, cx=0.95, cy=0.5, w=0.2, h=0.1)

    def test_non_positive_size_rejected(self):
        with pytest.raises(ValidationError):
            Annotation(cls=0, cx=0.5, cy=0.5, w=0.0, h=0.1)

    def test_flip_mirrors_doppler_centre(self):
        flipped = Annotation(cls=1, cx=0.2, cy=0.3, w=0.1, h=0.2).flipped_doppler()
        assert flipped.cx == pytest.approx(0.8)
        assert (flipped.cy, flipped.w, flipped.h, flipped.cls) == (0.3, 0.1, 0.2, 1)


class TestManifest:
    def test_duplicate_sample_ids_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="duplicate"):
            DatasetManifest(
                split="train",
                root=tmp_path,
                records=[{"sample_id": "a", "rd": "a.rdm"}, {"sample_id": "a", "rd": "b.rdm"}],
            )

    def test_malformed_line_names_the_sample(self, tmp_path):
        path = tmp_path / "train" / "manifest.jsonl"
        path.parent.mkdir()
        good = {"sample_id": "s0", "rd": "rd/s0.rdm", "labels": []}
        bad = {"sample_id": "s1", "rd": "rd/s1.rdm", "labels": [{"cls": 0, "cx": 2.0, "cy": 0.5, "w": 0.1, "h": 0.1}]}
        path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
        with pytest.raises(DatasetError) as info:
            DatasetManifest.read(path)
        assert info.value.sample_id == "s1"
        assert "line 2" in str(info.value)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            DatasetManifest.read(tmp_path / "nope.jsonl")

    def test_split_taken_from_directory(self, synth_manifests):
        assert DatasetManifest.read(synth_manifests["val"]).split == "val"


class TestLoadDataset:
    def test_pairs_reproduce_the_encoders(self, synth_manifests):
        manifest = DatasetManifest.read(synth_manifests["train"])
        for (pair, labels), record in zip(load_dataset(synth_manifests["train"]), manifest):
            expected = encode_pair(read_rdm(manifest.resolve(record)))
            np.testing.assert_array_equal(pair.grayscale, expected.grayscale)
            np.testing.assert_array_equal(pair.heatmap, expected.heatmap)
            assert labels == record.labels

    def test_shuffle_is_seeded(self, synth_manifests):
        first = [labels for _, labels in load_dataset(synth_manifests["train"], shuffle=True, seed=3)]
        again = [labels for _, labels in load_dataset(synth_manifests["train"], shuffle=True, seed=3)]
        assert first == again

    def test_missing_rd_file(self, synth_manifests):
        manifest = DatasetManifest.read(synth_manifests["val"])
        manifest.resolve(manifest.records[1]).unlink()
        with pytest.raises(DatasetError) as info:
            list(load_dataset(synth_manifests["val"]))
        assert info.value.sample_id == manifest.records[1].sample_id


class TestRDMapDataset:
    def test_item_layout(self, train_set):
        heat, gray, labels = train_set[0]
        assert heat.shape == (3, 32, 32) and gray.shape == (1, 32, 32)
        assert labels.shape[1] == 5
        assert heat.dtype == torch.float32

    def test_flip_is_deterministic_and_mirrors_labels(self, synth_manifests):
        plain = RDMapDataset(synth_manifests["train"], flip_prob=0.0)
        flipping = RDMapDataset(synth_manifests["train"], flip_prob=1.0, seed=5)
        heat, gray, labels = plain[2]
        f_heat, f_gray, f_labels = flipping[2]
        torch.testing.assert_close(f_heat, heat.flip(-1))
        torch.testing.assert_close(f_gray, gray.flip(-1))
        torch.testing.assert_close(f_labels[:, 1], 1.0 - labels[:, 1])
        torch.testing.assert_close(f_labels[:, 2:], labels[:, 2:])

    def test_flip_decisions_are_reproducible_per_epoch(self, synth_manifests):
        a = RDMapDataset(synth_manifests["train"], flip_prob=0.5, seed=11)
        b = RDMapDataset(synth_manifests["train"], flip_prob=0.5, seed=11)
        for epoch in (0, 1, 2):
            a.set_epoch(epoch)
            b.set_epoch(epoch)
            for i in range(len(a)):
                torch.testing.assert_close(a[i][0], b[i][0])
                torch.testing.assert_close(a[i][2], b[i][2])

    def test_missing_files_detected_up_front(self, synth_manifests):
        manifest = DatasetManifest.read(synth_manifests["train"])
        manifest.resolve(manifest.records[0]).unlink()
        with pytest.raises(DatasetError):
            RDMapDataset(synth_manifests["train"])

    def test_collate(self, train_set):
        heat, gray, labels = collate_batch([train_set[0], train_set[1]])
        assert heat.shape == (2, 3, 32, 32) and gray.shape == (2, 1, 32, 32)
        assert len(labels) == 2


def test_labels_to_tensor():
    labels = [Annotation(cls=1, cx=0.5, cy=0.25, w=0.2, h=0.1)]
    torch.testing.assert_close(labels_to_tensor(labels), torch.tensor([[1.0, 0.5, 0.25, 0.2, 0.1]]))
    assert labels_to_tensor([]).shape == (0, 5)
