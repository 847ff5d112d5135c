"""File formats: raw volumes with JSON headers, TF files, image export.

Volume format: a JSON header {dims, spacing, dtype, byte_order,
data_file} next to a binary blob of little-endian float32 in x-fastest
order. TF format: JSON {n_t, entries}. Images are exported as 8-bit
straight-alpha PNG or background-composited PPM.
"""

from __future__ import annotations

import io as _io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .volume import ScalarVolume, TransferFunction


class FormatError(Exception):
    """Raised for malformed volume or TF files."""


def load_volume(header_path: str | Path) -> ScalarVolume:
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read volume header {header_path}: {exc}") from exc
    for key in ("dims", "spacing", "dtype", "byte_order", "data_file"):
        if key not in header:
            raise FormatError(f"volume header missing field {key!r}")
    if header["dtype"] != "f32":
        raise FormatError(f"unsupported dtype {header['dtype']!r}, expected 'f32'")
    if header["byte_order"] != "little":
        raise FormatError(f"unsupported byte_order {header['byte_order']!r}")
    nx, ny, nz = (int(d) for d in header["dims"])
    data_path = header_path.parent / header["data_file"]
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != nx * ny * nz:
        raise FormatError(
            f"data file holds {raw.size} floats, header promises {nx * ny * nz}"
        )
    return ScalarVolume(
        dims=(nx, ny, nz),
        spacing=tuple(float(s) for s in header["spacing"]),
        data=raw.astype(np.float64).reshape(nz, ny, nx),
    )


def save_volume(vol: ScalarVolume, header_path: str | Path) -> None:
    """Write the header plus a .raw companion derived from the header name."""
    header_path = Path(header_path)
    data_name = header_path.stem + ".raw"
    header = {
        "dims": list(vol.dims),
        "spacing": [float(s) for s in vol.spacing],
        "dtype": "f32",
        "byte_order": "little",
        "data_file": data_name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    vol.data.astype("<f4").ravel().tofile(header_path.parent / data_name)


def load_tf(path: str | Path) -> TransferFunction:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read TF file {path}: {exc}") from exc
    if "entries" not in doc:
        raise FormatError("TF file missing 'entries'")
    entries = np.asarray(doc["entries"], dtype=np.float64)
    if "n_t" in doc and int(doc["n_t"]) != entries.shape[0]:
        raise FormatError("TF file n_t does not match entry count")
    try:
        return TransferFunction(entries=entries)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def tf_to_json(tf: TransferFunction) -> str:
    doc = {"n_t": tf.n_t, "entries": [[float(c) for c in e] for e in tf.entries]}
    return json.dumps(doc, indent=2) + "\n"


def save_tf(tf: TransferFunction, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tf_to_json(tf), encoding="utf-8")


def _to_uint8_rgba(data: np.ndarray) -> np.ndarray:
    """Premultiplied float RGBA (h, w, 4) -> straight-alpha uint8."""
    alpha = data[..., 3]
    safe = np.maximum(alpha, 1e-12)
    straight = np.clip(data[..., :3] / safe[..., None], 0.0, 1.0)
    straight[alpha <= 1e-12] = 0.0
    out = np.empty(data.shape[:2] + (4,), dtype=np.uint8)
    out[..., :3] = np.round(straight * 255.0).astype(np.uint8)
    out[..., 3] = np.round(np.clip(alpha, 0.0, 1.0) * 255.0).astype(np.uint8)
    return out


def png_bytes(img) -> bytes:
    """Encode an ImageRGBA as an 8-bit straight-alpha PNG."""
    pil = Image.fromarray(_to_uint8_rgba(img.data), mode="RGBA")
    buf = _io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def save_png(img, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(png_bytes(img))


def load_png(path: str | Path):
    """Read a PNG back into a premultiplied float ImageRGBA."""
    return load_png_bytes(Path(path).read_bytes())


def load_png_bytes(data: bytes):
    from .render import ImageRGBA

    with Image.open(_io.BytesIO(data)) as pil:
        arr = np.asarray(pil.convert("RGBA"), dtype=np.float64) / 255.0
    premult = np.empty_like(arr)
    premult[..., :3] = arr[..., :3] * arr[..., 3:4]
    premult[..., 3] = arr[..., 3]
    h, w = arr.shape[:2]
    return ImageRGBA(width=w, height=h, data=premult)


def save_ppm(img, path: str | Path, background=(1.0, 1.0, 1.0)) -> None:
    """Composite over an opaque background and write binary PPM."""
    bg = np.asarray(background, dtype=np.float64)
    rgb = img.data[..., :3] + (1.0 - img.data[..., 3:4]) * bg
    rgb8 = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(rgb8.tobytes())
