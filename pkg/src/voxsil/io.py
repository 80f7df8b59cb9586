"""File formats: VOXG volumes, binary PGM silhouettes, rig files, loss CSV.

VOXG layout: magic bytes ``VOXG``, u32 little-endian format version (1),
u32 little-endian H, W, D, then H*W*D IEEE-754 float32 little-endian
occupancies in (n, m, l) row-major order.  Boolean volumes are stored as
0.0/1.0.

PGM: binary ``P5`` with maxval 255, pixel byte = round(255 * value), rows
top-first.  Exact written layout: ``P5\\n<W> <H>\\n255\\n`` + H*W bytes.

Rig files: one ``azimuth_deg elevation_deg distance`` line per view,
single-space separated, ``#`` starts a comment; decimal points only.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .geometry import Viewpoint
from .volume import VoxelGrid

VOXG_MAGIC = b"VOXG"
VOXG_VERSION = 1


def save_voxg(path, volume) -> None:
    """Write a VoxelGrid or boolean volume as a VOXG file."""
    if isinstance(volume, VoxelGrid):
        data = volume.data
    else:
        data = np.asarray(volume)
        if data.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {data.shape}")
        data = data.astype(np.float64)
    h, w, d = data.shape
    with open(path, "wb") as fh:
        fh.write(VOXG_MAGIC)
        fh.write(struct.pack("<IIII", VOXG_VERSION, h, w, d))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_voxg(path) -> VoxelGrid:
    """Read a VOXG file.  Values are widened to float64 in memory."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != VOXG_MAGIC:
        raise ValueError(f"{path}: not a VOXG file (bad magic {raw[:4]!r})")
    if len(raw) < 20:
        raise ValueError(f"{path}: truncated VOXG header")
    version, h, w, d = struct.unpack("<IIII", raw[4:20])
    if version != VOXG_VERSION:
        raise ValueError(f"{path}: unsupported VOXG version {version}")
    expected = 20 + 4 * h * w * d
    if len(raw) != expected:
        raise ValueError(
            f"{path}: expected {expected} bytes for {h}x{w}x{d} volume, got {len(raw)}"
        )
    data = np.frombuffer(raw[20:], dtype="<f4").astype(np.float64).reshape(h, w, d)
    return VoxelGrid(data)


def save_pgm(path, silhouette: np.ndarray) -> None:
    """Write a [0, 1]-valued silhouette as a binary PGM (maxval 255).

    Values may exceed [0, 1] by float rounding slack (1e-9); quantization
    clips them.
    """
    sil = np.asarray(silhouette, dtype=np.float64)
    if sil.ndim != 2:
        raise ValueError(f"silhouette must be 2D, got shape {sil.shape}")
    if not np.all(np.isfinite(sil)) or sil.min() < -1e-9 or sil.max() > 1.0 + 1e-9:
        raise ValueError("silhouette values must lie in [0, 1]")
    h, w = sil.shape
    pixels = np.clip(np.floor(255.0 * sil + 0.5), 0.0, 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _pnm_tokens(raw: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    pos = 0
    while pos < len(raw):
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
        else:
            end = pos
            while end < len(raw) and not raw[end : end + 1].isspace():
                end += 1
            yield raw[pos:end], end
            pos = end


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM into a float64 array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = _pnm_tokens(raw)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
        (w_tok, _), (h_tok, _), (max_tok, end) = (
            next(tokens),
            next(tokens),
            next(tokens),
        )
        w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    except StopIteration:
        raise ValueError(f"{path}: truncated PGM header") from None
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported PGM maxval {maxval}")
    data = raw[end + 1 : end + 1 + w * h]
    if len(data) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w) / float(maxval)


def load_rig(path) -> list[Viewpoint]:
    """Parse a rig file into viewpoints; malformed lines are reported by number."""
    views = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split(" ")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}: line {lineno}: expected "
                    f"'azimuth_deg elevation_deg distance', got {line.strip()!r}"
                )
            try:
                azimuth, elevation, distance = (float(p) for p in parts)
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric field in {line.strip()!r}"
                ) from None
            views.append(Viewpoint.from_degrees(azimuth, elevation, distance))
    if not views:
        raise ValueError(f"{path}: rig file holds no views")
    return views


def save_rig(path, viewpoints) -> None:
    """Write viewpoints as a rig file (degrees, repr precision)."""
    import math

    with open(path, "w", encoding="ascii") as fh:
        for vp in viewpoints:
            fh.write(
                f"{math.degrees(vp.azimuth):g} {math.degrees(vp.elevation):g} "
                f"{vp.distance:g}\n"
            )


def save_loss_csv(path, history) -> None:
    """Write per-iteration (total, proj, vol) losses as CSV."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("iter,loss_total,loss_proj,loss_vol\n")
        for i, (total, proj, vol) in enumerate(history):
            fh.write(f"{i},{total!r},{proj!r},{vol!r}\n")


def save_manifest(path, manifest: dict) -> None:
    """Write a run manifest as deterministic JSON (sorted keys, no timestamps)."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, dict) or "command" not in manifest:
        raise ValueError(f"{path}: not a run manifest")
    return manifest


def silhouette_paths(directory, num_views: int) -> list[Path]:
    """Rendered silhouette paths view_<i>_*.pgm for i in 0..num_views-1."""
    directory = Path(directory)
    paths = []
    for i in range(num_views):
        matches = sorted(directory.glob(f"view_{i:02d}_*.pgm"))
        if len(matches) != 1:
            raise ValueError(
                f"{directory}: expected exactly one silhouette for view {i}, "
                f"found {len(matches)}"
            )
        paths.append(matches[0])
    return paths


def silhouette_name(index: int, azimuth_deg: float) -> str:
    return f"view_{index:02d}_{azimuth_deg:g}.pgm"
