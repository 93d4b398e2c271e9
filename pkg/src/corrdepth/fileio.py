"""Bit-exact file formats: tensor and weight containers, PFM images, camera rigs.

All multi-byte integers are little-endian.

Tensor container (extension-agnostic, magic ``CORT``)::

    "CORT" | version u16 | rank u16 | dims u32 * rank | payload f32 * prod(dims)

Weight container (magic ``CORW``)::

    "CORW" | version u16 | entry count u32
    per entry: name length u16 | UTF-8 name | rank u16 | dims u32 * rank | f32 payload

Entry names must be unique; entry order is preserved.  PFM is the standard
three-line-header float image format; this writer always emits little-endian
(scale line ``-1.0``) with rows stored bottom to top.  Camera rigs are plain
text, one block per view (``K fx fy cx cy`` / ``R r00 .. r22`` row-major /
``t tx ty tz``), ``#`` comments, first block is the reference view.

Writers reject non-finite values; readers raise FormatError carrying the byte
offset (binary formats) or line number (text formats) of the fault.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import CameraRig, Intrinsics, Pose
from .grids import DepthMap, FlowField

TENSOR_MAGIC = b"CORT"
WEIGHT_MAGIC = b"CORW"
FORMAT_VERSION = 1
MAX_RANK = 16
MAX_ELEMENTS = 1 << 32
CAMERA_ROTATION_TOL = 1e-6


def _as_f32(arr: np.ndarray, what: str) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(out).all():
        raise FormatError(f"refusing to write non-finite values in {what}")
    return out


def _check_dims(dims: tuple[int, ...], what: str) -> None:
    if len(dims) > MAX_RANK:
        raise FormatError(f"{what} rank {len(dims)} exceeds limit {MAX_RANK}")
    n = 1
    for d in dims:
        if d <= 0 or d >= 1 << 32:
            raise FormatError(f"{what} has out-of-range dimension {d}")
        n *= d
    if n > MAX_ELEMENTS:
        raise FormatError(f"{what} element count {n} exceeds limit {MAX_ELEMENTS}")


def write_tensor(path, arr: np.ndarray) -> None:
    """Write a float array as a tensor container.  float64 input is cast to f32."""
    out = _as_f32(arr, "tensor")
    _check_dims(out.shape, "tensor")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<HH", FORMAT_VERSION, out.ndim))
        f.write(struct.pack(f"<{out.ndim}I", *out.shape))
        f.write(out.tobytes())


class _Cursor:
    """Byte cursor that turns short reads into offset-carrying format errors."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated {self.what}: {field} needs {n} bytes, "
                f"{len(self.data) - self.pos} left", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, field: str) -> int:
        return struct.unpack("<H", self.take(2, field))[0]

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]


def _read_shape(cur: _Cursor, what: str) -> tuple[int, ...]:
    rank_off = cur.pos
    rank = cur.u16("rank")
    if rank > MAX_RANK:
        raise FormatError(f"{what} rank {rank} exceeds limit {MAX_RANK}",
                          offset=rank_off)
    dims = []
    n = 1
    for i in range(rank):
        off = cur.pos
        d = cur.u32(f"dimension {i}")
        if d == 0:
            raise FormatError(f"{what} dimension {i} is zero", offset=off)
        n *= d
        if n > MAX_ELEMENTS:
            raise FormatError(
                f"{what} element count overflows limit {MAX_ELEMENTS}", offset=off)
        dims.append(d)
    return tuple(dims)


def _read_payload(cur: _Cursor, dims: tuple[int, ...], what: str) -> np.ndarray:
    n = int(np.prod(dims, dtype=np.int64)) if dims else 1
    raw = cur.take(4 * n, f"{what} payload")
    return np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    cur = _Cursor(data, "tensor file")
    magic = cur.take(4, "magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}", offset=0)
    ver_off = cur.pos
    version = cur.u16("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tensor format version {version}",
                          offset=ver_off)
    dims = _read_shape(cur, "tensor")
    out = _read_payload(cur, dims, "tensor")
    if cur.pos != len(data):
        raise FormatError(f"{len(data) - cur.pos} trailing bytes after payload",
                          offset=cur.pos)
    return out


def write_weights(path, weights: dict[str, np.ndarray]) -> None:
    """Write named float arrays; insertion order is preserved byte-for-byte."""
    entries = []
    for name, arr in weights.items():
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) >= 1 << 16:
            raise FormatError(f"weight name length {len(encoded)} out of range")
        out = _as_f32(arr, f"weight {name!r}")
        _check_dims(out.shape, f"weight {name!r}")
        entries.append((encoded, out))
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(entries)))
        for encoded, out in entries:
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<H", out.ndim))
            f.write(struct.pack(f"<{out.ndim}I", *out.shape))
            f.write(out.tobytes())


def read_weights(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    cur = _Cursor(data, "weight file")
    magic = cur.take(4, "magic")
    if magic != WEIGHT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WEIGHT_MAGIC!r}", offset=0)
    ver_off = cur.pos
    version = cur.u16("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported weight format version {version}",
                          offset=ver_off)
    count = cur.u32("entry count")
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        name_off = cur.pos
        name_len = cur.u16(f"entry {i} name length")
        raw_name = cur.take(name_len, f"entry {i} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"entry {i} name is not valid UTF-8",
                              offset=name_off) from e
        if name in out:
            raise FormatError(f"duplicate weight name {name!r}", offset=name_off)
        dims = _read_shape(cur, f"weight {name!r}")
        out[name] = _read_payload(cur, dims, f"weight {name!r}")
    if cur.pos != len(data):
        raise FormatError(f"{len(data) - cur.pos} trailing bytes after last entry",
                          offset=cur.pos)
    return out


def _pfm_header_line(cur: _Cursor, lineno: int) -> bytes:
    end = cur.data.find(b"\n", cur.pos)
    if end < 0:
        raise FormatError("truncated PFM header", line=lineno)
    line = cur.data[cur.pos:end]
    cur.pos = end + 1
    return line.strip()


def write_pfm(path, arr: np.ndarray) -> None:
    """Write (H, W) or (H, W, 3) float data as little-endian PFM."""
    out = _as_f32(arr, "PFM image")
    if out.ndim == 2:
        kind = b"Pf"
    elif out.ndim == 3 and out.shape[2] == 3:
        kind = b"PF"
    else:
        raise FormatError(f"PFM image must be (H, W) or (H, W, 3), got {out.shape}")
    h, w = out.shape[:2]
    if h == 0 or w == 0:
        raise FormatError(f"PFM image has empty dimension {out.shape}")
    with open(path, "wb") as f:
        f.write(kind + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(out).tobytes())


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    cur = _Cursor(data, "PFM file")
    kind = _pfm_header_line(cur, 1)
    if kind != b"Pf":
        raise FormatError(
            f"bad PFM type line {kind!r}, only grayscale 'Pf' is supported",
            line=1)
    channels = 1
    parts = _pfm_header_line(cur, 2).split()
    if len(parts) != 2:
        raise FormatError("PFM dimensions line must be 'W H'", line=2)
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError as e:
        raise FormatError(f"bad PFM dimensions {parts}", line=2) from e
    if w <= 0 or h <= 0 or w * h * channels > MAX_ELEMENTS:
        raise FormatError(f"out-of-range PFM dimensions {w}x{h}", line=2)
    try:
        scale = float(_pfm_header_line(cur, 3))
    except ValueError as e:
        raise FormatError("bad PFM scale line", line=3) from e
    if scale == 0 or not np.isfinite(scale):
        raise FormatError(f"bad PFM scale {scale}", line=3)
    dtype = "<f4" if scale < 0 else ">f4"
    raw = cur.take(4 * w * h * channels, "PFM payload")
    if cur.pos != len(data):
        raise FormatError(f"{len(data) - cur.pos} trailing bytes after payload",
                          offset=cur.pos)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return np.flipud(np.frombuffer(raw, dtype=dtype).reshape(shape)).astype(
        np.float32)


def _nearest_rotation(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    d = np.linalg.det(u @ vt)
    return u @ np.diag([1.0, 1.0, d]) @ vt


def _parse_floats(parts: list[str], n: int, lineno: int, what: str) -> np.ndarray:
    if len(parts) != n:
        raise FormatError(f"{what} line needs {n} numbers, got {len(parts)}",
                          line=lineno)
    try:
        vals = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as e:
        raise FormatError(f"{what} line has a non-numeric field", line=lineno) from e
    if not np.isfinite(vals).all():
        raise FormatError(f"{what} line has a non-finite value", line=lineno)
    return vals


def write_camera_file(path, rig: CameraRig) -> None:
    lines = ["# camera rig: first block is the reference view",
             "# K fx fy cx cy | R row-major | t"]
    for pose in (rig.ref_pose,) + rig.src_poses:
        k = rig.k
        lines.append("")
        lines.append(f"K {k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g}")
        lines.append("R " + " ".join(f"{v:.17g}" for v in pose.rotation.ravel()))
        lines.append("t " + " ".join(f"{v:.17g}" for v in pose.translation))
    Path(path).write_text("\n".join(lines) + "\n")


def read_camera_file(path) -> CameraRig:
    """Parse a camera rig; rotations orthonormal within 1e-6 are snapped to the
    nearest exact rotation, anything worse is rejected."""
    text = Path(path).read_text()
    blocks: list[tuple[Intrinsics, Pose]] = []
    state = "K"
    k = intrinsics = None
    rotation = None
    k_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *parts = line.split()
        if tag != state:
            raise FormatError(f"expected a {state!r} line, got {tag!r}", line=lineno)
        if state == "K":
            fx, fy, cx, cy = _parse_floats(parts, 4, lineno, "K")
            if fx <= 0 or fy <= 0:
                raise FormatError(f"non-positive focal length fx={fx} fy={fy}",
                                  line=lineno)
            intrinsics = Intrinsics(fx, fy, cx, cy)
            if k is None:
                k = intrinsics
            elif (k.fx, k.fy, k.cx, k.cy) != (fx, fy, cx, cy):
                raise FormatError("intrinsics differ from the reference view's; "
                                  "all views must share K", line=lineno)
            k_line = lineno
            state = "R"
        elif state == "R":
            r = _parse_floats(parts, 9, lineno, "R").reshape(3, 3)
            err = np.abs(r.T @ r - np.eye(3)).max()
            if err > CAMERA_ROTATION_TOL or np.linalg.det(r) < 0:
                raise FormatError(
                    f"rotation not orthonormal (error {err:.3e})", line=lineno)
            rotation = _nearest_rotation(r)
            state = "t"
        else:
            t = _parse_floats(parts, 3, lineno, "t")
            blocks.append((intrinsics, Pose(rotation, t)))
            state = "K"
    if state != "K":
        raise FormatError(f"camera file ends mid-block, missing {state!r} line",
                          line=k_line)
    if len(blocks) < 2:
        raise FormatError("camera file needs a reference view and at least "
                          "one source view", line=1)
    poses = [p for _, p in blocks]
    return CameraRig(blocks[0][0], poses[0], poses[1:])


def save_depth(path, depth: DepthMap) -> None:
    """Depth maps travel as 1-channel PFM; invalid pixels keep the value 0."""
    write_pfm(path, depth.values)


def load_depth(path) -> DepthMap:
    arr = read_pfm(path)
    if arr.ndim != 2:
        raise FormatError("depth PFM must be 1-channel")
    return DepthMap(np.asarray(arr, dtype=np.float64))


def save_flow(path, flow: FlowField) -> None:
    """Flow fields travel as a weight container with 'flow' and 'valid' entries."""
    vals = np.where(flow.valid[..., None], flow.flow, 0.0)
    write_weights(path, {"flow": vals, "valid": flow.valid.astype(np.float32)})


def load_flow(path) -> FlowField:
    entries = read_weights(path)
    if set(entries) != {"flow", "valid"}:
        raise FormatError(
            f"flow container needs entries 'flow' and 'valid', got {sorted(entries)}")
    flow = np.asarray(entries["flow"], dtype=np.float64)
    valid = entries["valid"] != 0
    if flow.ndim != 3 or flow.shape[2] != 2 or valid.shape != flow.shape[:2]:
        raise FormatError(
            f"flow container shapes inconsistent: {flow.shape} vs {valid.shape}")
    return FlowField(flow, valid)
