"""
場のファイル入出力モジュール

格子上の場を、リトルエンディアン 64bit 浮動小数の行優先バイナリ（.bin）と
JSON のサイドカー（.json）の組で保存・読み込みします。
サイドカーには形、セル数、格子幅、原点、ランレングス符号化したマスク、領域と指数を記録します。
OUTSIDE ノードは NaN のまま書き出し、読み込み後の配列はビット単位で一致します。
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import GridField, GridSpec, KAnnulus
from .utils import rle_decode, rle_encode

FORMAT_NAME = "three-spheres-field"
FORMAT_VERSION = 1


def _paths(path: str | Path) -> tuple[Path, Path]:
    """拡張子の有無にかかわらず (.bin, .json) の組を返します。"""
    p = Path(path)
    if p.suffix in (".bin", ".json"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".bin"), p.with_name(p.name + ".json")


def write_field(path: str | Path, field: GridField) -> tuple[Path, Path]:
    """
    場を .bin と .json に書き出します。

    Args:
        path: 出力先（拡張子なし、または .bin / .json）
        field: 書き出す場（metadata の内容もサイドカーに入ります）

    Returns:
        (バイナリのパス, サイドカーのパス)
    """
    bin_path, json_path = _paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)

    data = np.ascontiguousarray(field.values, dtype="<f8")
    bin_path.write_bytes(data.tobytes(order="C"))

    sidecar = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "dtype": "<f8",
        "order": "C",
        "dims": list(field.grid.shape),
        "cells": [int(c) for c in field.grid.cells],
        "spacing": [float(h) for h in field.grid.spacing],
        "origin": [float(v) for v in field.grid.lower],
        "upper": [float(v) for v in field.grid.upper],
        "mask": rle_encode(field.mask),
        "annulus": field.annulus.to_dict() if field.annulus is not None else None,
        "metadata": field.metadata,
    }
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return bin_path, json_path


def read_field(path: str | Path) -> GridField:
    """
    write_field で書き出した場を読み込みます。

    Raises:
        ConfigurationError: サイドカーの形式が不正、またはバイナリの長さが合わない場合
    """
    bin_path, json_path = _paths(path)
    try:
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read field sidecar {json_path}: {exc}") from exc
    if sidecar.get("format") != FORMAT_NAME or sidecar.get("dtype") != "<f8":
        raise ConfigurationError(f"Unsupported field sidecar {json_path}")

    grid = GridSpec(
        lower=tuple(float(v) for v in sidecar["origin"]),
        upper=tuple(float(v) for v in sidecar["upper"]),
        cells=tuple(int(c) for c in sidecar["cells"]),
    )
    shape = tuple(int(d) for d in sidecar["dims"])
    if shape != grid.shape:
        raise ConfigurationError(f"Sidecar dims {shape} do not match cells {grid.cells}")

    raw = bin_path.read_bytes()
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise ConfigurationError(
            f"Field binary {bin_path} has {len(raw)} bytes, expected {expected}"
        )
    values = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    try:
        mask = rle_decode(sidecar["mask"], shape)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc

    annulus = KAnnulus.from_dict(sidecar["annulus"]) if sidecar.get("annulus") else None
    return GridField(grid, values, mask, annulus, dict(sidecar.get("metadata") or {}))
