import logging

import numpy as np
import pytest
from pydantic import ValidationError

from radnas.rdmap_io import DatasetManifest, SynthConfig, preprocess_adc, read_rdm, synth_generate


class TestSynthConfig:
    def test_needs_a_sample(self):
        with pytest.raises(ValidationError):
            SynthConfig(train=0, val=0, test=0)

    def test_ranges_must_be_ordered(self):
        with pytest.raises(ValidationError):
            SynthConfig(snr_db=(20.0, 10.0))


class TestSynthGenerate:
    def test_writes_loadable_splits(self, synth_manifests, tiny_synth):
        assert set(synth_manifests) == {"train", "val"}
        for split, path in synth_manifests.items():
            manifest = DatasetManifest.read(path)
            assert len(manifest) == tiny_synth.split_sizes()[split]
            assert not manifest.missing_files()
            rd = read_rdm(manifest.resolve(manifest.records[0]))
            assert rd.intensity.shape == (32, 32)

    def test_labels_are_valid(self, synth_manifests, tiny_synth):
        for record in DatasetManifest.read(synth_manifests["train"]):
            assert 1 <= len(record.labels) <= tiny_synth.max_objects
            for label in record.labels:
                x1, y1, x2, y2 = label.xyxy()
                assert 0.0 <= x1 < x2 <= 1.0 and 0.0 <= y1 < y2 <= 1.0
                assert 0 <= label.cls < tiny_synth.num_classes

    def test_same_seed_same_bytes(self, tmp_path, tiny_synth):
        a = synth_generate(tiny_synth, seed=3, out_dir=tmp_path / "a")
        b = synth_generate(tiny_synth, seed=3, out_dir=tmp_path / "b")
        assert a["train"].read_text() == b["train"].read_text()
        first = DatasetManifest.read(a["train"])
        second = DatasetManifest.read(b["train"])
        for ra, rb in zip(first, second):
            assert first.resolve(ra).read_bytes() == second.resolve(rb).read_bytes()

    def test_different_seeds_differ(self, tmp_path, tiny_synth):
        a = synth_generate(tiny_synth, seed=3, out_dir=tmp_path / "a")
        b = synth_generate(tiny_synth, seed=4, out_dir=tmp_path / "b")
        assert a["train"].read_text() != b["train"].read_text()

    def test_object_is_brighter_than_background(self, tmp_path):
        config = SynthConfig(height=32, width=32, train=4, val=0, max_objects=1, snr_db=(30.0, 30.0))
        path = synth_generate(config, seed=0, out_dir=tmp_path)["train"]
        manifest = DatasetManifest.read(path)
        for record in manifest:
            rd = read_rdm(manifest.resolve(record)).intensity
            label = record.labels[0]
            r, d = int(label.cy * 32), int(label.cx * 32)
            assert rd[r, d] > np.median(rd) + 20.0

    def test_logs_class_frequencies(self, tmp_path, tiny_synth, caplog):
        with caplog.at_level(logging.INFO):
            synth_generate(tiny_synth, seed=1, out_dir=tmp_path)
        assert "[SYNTH]" in caplog.text


class TestAdcPath:
    def test_preprocess_matches_direct_rd(self, tmp_path, tiny_synth):
        direct = synth_generate(tiny_synth, seed=9, out_dir=tmp_path / "rd")
        adc_config = tiny_synth.model_copy(update={"emit_adc": True})
        adc = synth_generate(adc_config, seed=9, out_dir=tmp_path / "adc")
        assert adc["train"].name == "adc_manifest.jsonl"

        converted = DatasetManifest.read(preprocess_adc(adc["train"]))
        reference = DatasetManifest.read(direct["train"])
        assert [r.labels for r in converted] == [r.labels for r in reference]
        for ra, rb in zip(converted, reference):
            got = read_rdm(converted.resolve(ra)).intensity
            want = read_rdm(reference.resolve(rb)).intensity
            # complex64 storage of the cube costs a little precision in the darkest bins
            assert np.median(np.abs(got - want)) < 1e-3
