"""Round-trips and error handling for volume, TF, and image files."""

import json

import numpy as np
import pytest

from tfopt.io import (
    FormatError,
    load_png,
    load_png_bytes,
    load_tf,
    load_volume,
    png_bytes,
    save_png,
    save_ppm,
    save_tf,
    save_volume,
    tf_to_json,
)
from tfopt.render import ImageRGBA
from tfopt.volume import TransferFunction

from helpers import random_volume


# volume header + raw


def test_volume_round_trip(tmp_path, rng):
    vol = random_volume(rng, dims=(5, 4, 3), spacing=(1.0, 2.0, 0.5))
    save_volume(vol, tmp_path / "v.vol.json")
    back = load_volume(tmp_path / "v.vol.json")
    assert back.dims == vol.dims
    assert back.spacing == vol.spacing
    # f32 storage quantizes, so compare at float32 precision
    np.testing.assert_array_equal(
        back.data, vol.data.astype(np.float32).astype(np.float64)
    )


def test_volume_round_trip_preserves_nan(tmp_path, rng):
    vol = random_volume(rng, dims=(4, 4, 4))
    data = vol.data.copy()
    data[0, 0, 0] = np.nan
    vol = type(vol)(dims=vol.dims, spacing=vol.spacing, data=data)
    save_volume(vol, tmp_path / "v.vol.json")
    back = load_volume(tmp_path / "v.vol.json")
    assert np.isnan(back.data[0, 0, 0])
    assert back.missing_mask.sum() == 1


def test_volume_header_is_plain_json(tmp_path, rng):
    save_volume(random_volume(rng, dims=(2, 2, 2)), tmp_path / "v.vol.json")
    header = json.loads((tmp_path / "v.vol.json").read_text())
    assert header["dims"] == [2, 2, 2]
    assert header["dtype"] == "f32"
    assert header["byte_order"] == "little"
    assert (tmp_path / header["data_file"]).exists()


def _write_header(tmp_path, **overrides):
    header = {
        "dims": [2, 1, 1],
        "spacing": [1.0, 1.0, 1.0],
        "dtype": "f32",
        "byte_order": "little",
        "data_file": "v.raw",
    }
    header.update(overrides)
    for key in [k for k, v in header.items() if v is None]:
        del header[key]
    (tmp_path / "v.vol.json").write_text(json.dumps(header))
    np.array([0.0, 1.0], dtype="<f4").tofile(tmp_path / "v.raw")
    return tmp_path / "v.vol.json"


def test_volume_missing_header_field(tmp_path):
    path = _write_header(tmp_path, spacing=None)
    with pytest.raises(FormatError, match="spacing"):
        load_volume(path)


def test_volume_bad_dtype(tmp_path):
    path = _write_header(tmp_path, dtype="f64")
    with pytest.raises(FormatError, match="dtype"):
        load_volume(path)


def test_volume_bad_byte_order(tmp_path):
    path = _write_header(tmp_path, byte_order="big")
    with pytest.raises(FormatError, match="byte_order"):
        load_volume(path)


def test_volume_length_mismatch(tmp_path):
    path = _write_header(tmp_path, dims=[3, 1, 1])
    with pytest.raises(FormatError, match="promises 3"):
        load_volume(path)


def test_volume_invalid_json(tmp_path):
    (tmp_path / "v.vol.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_volume(tmp_path / "v.vol.json")


# TF JSON


def test_tf_round_trip(tmp_path):
    tf = TransferFunction.blue_red(8)
    save_tf(tf, tmp_path / "t.tf.json")
    back = load_tf(tmp_path / "t.tf.json")
    assert back.n_t == 8
    np.testing.assert_array_equal(back.entries, tf.entries)


def test_tf_json_has_n_t_and_entries():
    tf = TransferFunction.gray_ramp(4)
    doc = json.loads(tf_to_json(tf))
    assert doc["n_t"] == 4
    assert len(doc["entries"]) == 4
    assert all(len(e) == 4 for e in doc["entries"])


def test_tf_n_t_mismatch(tmp_path):
    doc = {"n_t": 3, "entries": [[0, 0, 0, 0], [1, 1, 1, 1]]}
    (tmp_path / "t.tf.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="n_t"):
        load_tf(tmp_path / "t.tf.json")


def test_tf_missing_entries(tmp_path):
    (tmp_path / "t.tf.json").write_text(json.dumps({"n_t": 2}))
    with pytest.raises(FormatError, match="entries"):
        load_tf(tmp_path / "t.tf.json")


def test_tf_out_of_range_entries(tmp_path):
    doc = {"entries": [[0, 0, 0, 0], [2.0, 0, 0, 1]]}
    (tmp_path / "t.tf.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_tf(tmp_path / "t.tf.json")


# PNG / PPM


def test_png_round_trip_exact_on_representable_values(tmp_path):
    # straight-alpha colors on the uint8 grid with alpha 1 survive exactly
    data = np.zeros((2, 3, 4))
    data[..., 3] = 1.0
    data[0, 0, :3] = (0.0, 128 / 255, 1.0)
    data[1, 2, :3] = (64 / 255, 0.0, 255 / 255)
    img = ImageRGBA(width=3, height=2, data=data)
    save_png(img, tmp_path / "i.png")
    back = load_png(tmp_path / "i.png")
    assert (back.width, back.height) == (3, 2)
    np.testing.assert_allclose(back.data, data, atol=1e-12)


def test_png_zero_alpha_pixels_decode_to_zero():
    data = np.zeros((1, 2, 4))
    data[0, 1] = (0.5, 0.25, 0.125, 0.5)
    img = ImageRGBA(width=2, height=1, data=data)
    back = load_png_bytes(png_bytes(img))
    np.testing.assert_array_equal(back.data[0, 0], [0, 0, 0, 0])
    # premultiplied values come back within one uint8 quantum
    np.testing.assert_allclose(back.data[0, 1], data[0, 1], atol=1 / 255)


def test_ppm_header_and_size(tmp_path):
    data = np.zeros((2, 2, 4))
    img = ImageRGBA(width=2, height=2, data=data)
    save_ppm(img, tmp_path / "i.ppm")
    blob = (tmp_path / "i.ppm").read_bytes()
    assert blob.startswith(b"P6\n2 2\n255\n")
    assert len(blob) == len(b"P6\n2 2\n255\n") + 12
    # fully transparent image over white background is all 255
    assert set(blob[len(b"P6\n2 2\n255\n") :]) == {255}
