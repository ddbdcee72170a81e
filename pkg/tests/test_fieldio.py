"""
場のファイル入出力のテスト
"""

import json

import numpy as np
import pytest

from src.barrier import BarrierSpec, barrier_field
from src.errors import ConfigurationError
from src.fieldio import read_field, write_field
from src.geometry import GridField, build_grid


@pytest.fixture
def field():
    spec = BarrierSpec(1.0, 2.0, 2, 3.0, 3)
    grid, _ = build_grid(spec.annulus(slab_halfwidth=4.0), 12)
    field, _ = barrier_field(spec, grid)
    return field


class TestFieldFiles:
    """.bin と .json の組。"""

    def test_round_trip_is_bit_identical(self, tmp_path, field):
        bin_path, json_path = write_field(tmp_path / "barrier", field)
        assert bin_path.name == "barrier.bin" and json_path.name == "barrier.json"
        loaded = read_field(tmp_path / "barrier.bin")
        assert loaded.values.tobytes() == field.values.tobytes()
        assert np.array_equal(loaded.mask, field.mask)
        assert loaded.grid == field.grid
        assert loaded.annulus == field.annulus
        assert np.isnan(loaded.values).any()

    def test_metadata_is_preserved(self, tmp_path, field):
        tagged = GridField(field.grid, field.values, field.mask, field.annulus, {"p": 3.0, "boundary": "barrier"})
        write_field(tmp_path / "tagged.json", tagged)
        assert read_field(tmp_path / "tagged").metadata == {"p": 3.0, "boundary": "barrier"}

    def test_sidecar_layout(self, tmp_path, field):
        _, json_path = write_field(tmp_path / "f", field)
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
        assert sidecar["dims"] == [13, 13, 13]
        assert sidecar["dtype"] == "<f8"
        assert sum(length for _, length in sidecar["mask"]) == 13 ** 3

    def test_truncated_binary(self, tmp_path, field):
        bin_path, _ = write_field(tmp_path / "f", field)
        bin_path.write_bytes(bin_path.read_bytes()[:-8])
        with pytest.raises(ConfigurationError):
            read_field(tmp_path / "f")

    def test_unknown_format(self, tmp_path, field):
        _, json_path = write_field(tmp_path / "f", field)
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
        sidecar["format"] = "something-else"
        json_path.write_text(json.dumps(sidecar), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            read_field(tmp_path / "f")

    def test_missing_sidecar(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_field(tmp_path / "absent")

    def test_mask_length_mismatch(self, tmp_path, field):
        _, json_path = write_field(tmp_path / "f", field)
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
        sidecar["mask"][-1][1] += 1
        json_path.write_text(json.dumps(sidecar), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            read_field(tmp_path / "f")
