import struct

import numpy as np
import pytest

from radnas.exceptions import RDFormatError
from radnas.rdmap_io import RDMap, read_rdm, write_rdm


class TestRdmCodec:
    def test_round_trip_is_exact(self, tmp_path, rng):
        rd = RDMap(rng.normal(size=(7, 13)).astype(np.float32))
        path = write_rdm(tmp_path / "a.rdm", rd)
        assert path.stat().st_size == 16 + 4 * 7 * 13
        np.testing.assert_array_equal(read_rdm(path).intensity, rd.intensity)

    def test_header_layout(self, tmp_path):
        path = write_rdm(tmp_path / "b.rdm", RDMap(np.zeros((3, 5))))
        magic, height, width, reserved = struct.unpack_from("<4sIII", path.read_bytes())
        assert (magic, height, width, reserved) == (b"RDM1", 3, 5, 0)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.rdm"
        path.write_bytes(struct.pack("<4sIII", b"XXXX", 1, 1, 0) + b"\0" * 4)
        with pytest.raises(RDFormatError, match="magic"):
            read_rdm(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "d.rdm"
        path.write_bytes(b"RDM1\x01")
        with pytest.raises(RDFormatError, match="truncated"):
            read_rdm(path)

    def test_payload_size_mismatch(self, tmp_path):
        path = tmp_path / "e.rdm"
        path.write_bytes(struct.pack("<4sIII", b"RDM1", 2, 2, 0) + b"\0" * 12)
        with pytest.raises(RDFormatError, match="expected"):
            read_rdm(path)

    def test_nonzero_reserved_field(self, tmp_path):
        path = tmp_path / "f.rdm"
        path.write_bytes(struct.pack("<4sIII", b"RDM1", 1, 1, 9) + b"\0" * 4)
        with pytest.raises(RDFormatError, match="reserved"):
            read_rdm(path)

    def test_non_finite_payload_rejected(self, tmp_path):
        path = tmp_path / "g.rdm"
        path.write_bytes(struct.pack("<4sIII", b"RDM1", 1, 2, 0) + np.array([1.0, np.inf], dtype="<f4").tobytes())
        with pytest.raises(RDFormatError):
            read_rdm(path)
