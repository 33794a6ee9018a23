"""RD map I/O: ADC transforms, input representations, `.rdm` files, manifests, synthesis."""

from .dataset import RDMapDataset, collate_batch, labels_to_tensor, load_dataset, make_loader
from .rdm_format import read_rdm, write_rdm
from .records import Annotation, DatasetManifest, ManifestRecord, RawADCCube, RDMap, RepresentationPair
from .synth import SynthConfig, preprocess_adc, synth_generate
from .transforms import adc_to_rd, colorize, encode_pair, rd_field_to_adc, to_grayscale, to_heatmap

__all__ = [
    "Annotation",
    "DatasetManifest",
    "ManifestRecord",
    "RDMapDataset",
    "RawADCCube",
    "RDMap",
    "RepresentationPair",
    "SynthConfig",
    "adc_to_rd",
    "collate_batch",
    "colorize",
    "encode_pair",
    "labels_to_tensor",
    "load_dataset",
    "make_loader",
    "preprocess_adc",
    "rd_field_to_adc",
    "read_rdm",
    "synth_generate",
    "to_grayscale",
    "to_heatmap",
    "write_rdm",
]
