"""File formats: ASCII PLY clouds, PGM/PPM images, key=value configs and the
ground-truth sidecar."""

from __future__ import annotations

import os

import numpy as np

from .camera import CameraIntrinsics, DepthImage, MaskImage
from .correction import CuboidSpec
from .errors import ParseError
from .geometry import PointCloud, Pose

_FLOAT_TYPES = {"float", "double", "float32", "float64"}
_FLOAT_PROPS = ("x", "y", "z", "nx", "ny", "nz")
_COLOR_PROPS = ("red", "green", "blue")


# ---------------------------------------------------------------- PLY

def save_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY with x/y/z doubles, optional normals, optional uchar colors.

    Floats are printed with 17 significant digits so a read back is lossless.
    """
    props = ["property double x", "property double y", "property double z"]
    columns = [cloud.points]
    if cloud.normals is not None:
        props += ["property double nx", "property double ny", "property double nz"]
        columns.append(cloud.normals)
    float_block = np.hstack(columns)
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        f.write("\n".join(props) + "\n")
        if cloud.colors is not None:
            f.write(
                "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            )
        f.write("end_header\n")
        for i in range(len(cloud)):
            parts = [f"{v:.17g}" for v in float_block[i]]
            if cloud.colors is not None:
                parts += [str(int(v)) for v in cloud.colors[i]]
            f.write(" ".join(parts) + "\n")


def load_ply(path) -> PointCloud:
    """Read the subset of ASCII PLY written by `save_ply`.

    Raises ParseError (with a line number) on anything malformed: binary
    formats, unknown properties, missing coordinates, short rows or a vertex
    count mismatch.
    """
    with open(path, "r", encoding="ascii", errors="replace") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    n_vertex = None
    prop_names: list[str] = []
    header_end = None
    saw_format = False
    for ln, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1:] != ["ascii", "1.0"]:
                raise ParseError(f"unsupported format {' '.join(tok[1:])}", ln)
            saw_format = True
        elif tok[0] == "element":
            if tok[1] != "vertex":
                raise ParseError(f"unsupported element {tok[1]!r}", ln)
            try:
                n_vertex = int(tok[2])
            except (IndexError, ValueError):
                raise ParseError("bad vertex count", ln) from None
        elif tok[0] == "property":
            if len(tok) != 3:
                raise ParseError("malformed property", ln)
            typ, name = tok[1], tok[2]
            if name in _FLOAT_PROPS:
                if typ not in _FLOAT_TYPES:
                    raise ParseError(f"property {name} must be float typed", ln)
            elif name in _COLOR_PROPS:
                if typ not in ("uchar", "uint8"):
                    raise ParseError(f"property {name} must be uchar", ln)
            else:
                raise ParseError(f"unsupported property {name!r}", ln)
            prop_names.append(name)
        elif tok[0] == "end_header":
            header_end = ln
            break
        else:
            raise ParseError(f"unexpected header line {raw!r}", ln)
    if header_end is None or not saw_format or n_vertex is None:
        raise ParseError("incomplete header", len(lines))
    for coord in ("x", "y", "z"):
        if coord not in prop_names:
            raise ParseError(f"missing {coord} property", header_end)
    has_normals = all(p in prop_names for p in ("nx", "ny", "nz"))
    if not has_normals and any(p in prop_names for p in ("nx", "ny", "nz")):
        raise ParseError("incomplete normal properties", header_end)
    has_colors = all(p in prop_names for p in _COLOR_PROPS)
    if not has_colors and any(p in prop_names for p in _COLOR_PROPS):
        raise ParseError("incomplete color properties", header_end)

    data_lines = lines[header_end:]
    rows = [r for r in data_lines if r.strip()]
    if len(rows) != n_vertex:
        raise ParseError(
            f"expected {n_vertex} vertex rows, found {len(rows)}", len(lines)
        )
    col = {name: i for i, name in enumerate(prop_names)}
    pts = np.empty((n_vertex, 3))
    normals = np.empty((n_vertex, 3)) if has_normals else None
    colors = np.empty((n_vertex, 3), dtype=np.uint8) if has_colors else None
    for i, row in enumerate(rows):
        ln = header_end + 1 + i
        vals = row.split()
        if len(vals) != len(prop_names):
            raise ParseError(
                f"expected {len(prop_names)} values, found {len(vals)}", ln
            )
        try:
            pts[i] = [float(vals[col["x"]]), float(vals[col["y"]]), float(vals[col["z"]])]
            if normals is not None:
                normals[i] = [
                    float(vals[col["nx"]]),
                    float(vals[col["ny"]]),
                    float(vals[col["nz"]]),
                ]
            if colors is not None:
                colors[i] = [
                    int(vals[col["red"]]),
                    int(vals[col["green"]]),
                    int(vals[col["blue"]]),
                ]
        except ValueError:
            raise ParseError("non-numeric vertex value", ln) from None
    return PointCloud(pts, normals, colors)


# ---------------------------------------------------------------- PNM images

def _read_pnm_header(data: bytes, magic: bytes, path):
    if not data.startswith(magic):
        raise ParseError(f"{path}: expected {magic.decode()} magic", 1)
    fields = []
    pos = len(magic)
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(v) for v in fields)
    except ValueError:
        raise ParseError(f"{path}: non-numeric header field") from None
    return width, height, maxval, pos


def save_pgm16(path, depth: DepthImage) -> None:
    """Depth in whole millimeters as 16-bit big-endian PGM; 0 marks invalid."""
    mm = np.rint(depth.data * 1000.0)
    if np.any(mm > 65535):
        raise ValueError("depth exceeds 16-bit millimeter range")
    with open(path, "wb") as f:
        f.write(f"P5\n{depth.width} {depth.height}\n65535\n".encode())
        f.write(mm.astype(">u2").tobytes())


def load_pgm16(path) -> DepthImage:
    with open(path, "rb") as f:
        data = f.read()
    w, h, maxval, pos = _read_pnm_header(data, b"P5", path)
    if maxval != 65535:
        raise ParseError(f"{path}: expected 16-bit depth, maxval {maxval}")
    raw = np.frombuffer(data, dtype=">u2", offset=pos, count=w * h)
    if raw.size != w * h:
        raise ParseError(f"{path}: truncated pixel data")
    return DepthImage(raw.reshape(h, w).astype(np.float64) / 1000.0)


def save_pgm8(path, mask: MaskImage) -> None:
    with open(path, "wb") as f:
        f.write(f"P5\n{mask.width} {mask.height}\n255\n".encode())
        f.write(mask.data.astype(np.uint8).tobytes())


def load_pgm8(path) -> MaskImage:
    with open(path, "rb") as f:
        data = f.read()
    w, h, maxval, pos = _read_pnm_header(data, b"P5", path)
    if maxval != 255:
        raise ParseError(f"{path}: expected 8-bit mask, maxval {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=pos, count=w * h)
    if raw.size != w * h:
        raise ParseError(f"{path}: truncated pixel data")
    return MaskImage(raw.reshape(h, w).copy())


def save_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())


def load_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    w, h, maxval, pos = _read_pnm_header(data, b"P6", path)
    if maxval != 255:
        raise ParseError(f"{path}: expected 8-bit color, maxval {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=pos, count=w * h * 3)
    if raw.size != w * h * 3:
        raise ParseError(f"{path}: truncated pixel data")
    return raw.reshape(h, w, 3).copy()


# ---------------------------------------------------------------- key=value

def write_kv(path, pairs: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in pairs.items():
            f.write(f"{key}={value}\n")


def read_kv(path) -> dict[str, str]:
    """Line-oriented key=value file; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", ln)
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def save_intrinsics(path, intr: CameraIntrinsics) -> None:
    write_kv(
        path,
        {
            "fx": f"{intr.fx:.17g}",
            "fy": f"{intr.fy:.17g}",
            "cx": f"{intr.cx:.17g}",
            "cy": f"{intr.cy:.17g}",
            "width": intr.width,
            "height": intr.height,
        },
    )


def load_intrinsics(path) -> CameraIntrinsics:
    kv = read_kv(path)
    try:
        return CameraIntrinsics(
            fx=float(kv["fx"]),
            fy=float(kv["fy"]),
            cx=float(kv["cx"]),
            cy=float(kv["cy"]),
            width=int(kv["width"]),
            height=int(kv["height"]),
        )
    except KeyError as exc:
        raise ParseError(f"{path}: missing intrinsics key {exc}") from None


def save_ground_truth(path, pose: Pose, cuboid: CuboidSpec, extra: dict | None = None):
    """Sidecar with the row-major 4x4 pose and the face dimensions."""
    flat = " ".join(f"{v:.17g}" for v in pose.matrix.ravel())
    pairs = {
        "pose": flat,
        "width": f"{cuboid.width:.17g}",
        "height": f"{cuboid.height:.17g}",
        "depth": f"{cuboid.depth:.17g}",
    }
    if extra:
        pairs.update(extra)
    write_kv(path, pairs)


def load_ground_truth(path) -> tuple[Pose, CuboidSpec, dict[str, str]]:
    kv = read_kv(path)
    try:
        vals = [float(v) for v in kv.pop("pose").split()]
    except KeyError:
        raise ParseError(f"{path}: missing pose") from None
    if len(vals) != 16:
        raise ParseError(f"{path}: pose needs 16 values, found {len(vals)}")
    pose = Pose.from_matrix(np.array(vals).reshape(4, 4))
    try:
        cuboid = CuboidSpec(
            float(kv.pop("width")), float(kv.pop("height")), float(kv.pop("depth"))
        )
    except KeyError as exc:
        raise ParseError(f"{path}: missing dimension {exc}") from None
    return pose, cuboid, kv


def save_scene(out_dir, rgb, depth, mask, intr, pose, cuboid, extra=None) -> None:
    """Write the full scene file set into a directory."""
    os.makedirs(out_dir, exist_ok=True)
    save_ppm(os.path.join(out_dir, "rgb.ppm"), rgb)
    save_pgm16(os.path.join(out_dir, "depth.pgm"), depth)
    save_pgm8(os.path.join(out_dir, "mask.pgm"), mask)
    save_intrinsics(os.path.join(out_dir, "intrinsics.txt"), intr)
    save_ground_truth(os.path.join(out_dir, "ground_truth.txt"), pose, cuboid, extra)


def load_scene(scene_dir):
    """Read back the file set written by `save_scene`."""
    rgb = load_ppm(os.path.join(scene_dir, "rgb.ppm"))
    depth = load_pgm16(os.path.join(scene_dir, "depth.pgm"))
    mask = load_pgm8(os.path.join(scene_dir, "mask.pgm"))
    intr = load_intrinsics(os.path.join(scene_dir, "intrinsics.txt"))
    pose, cuboid, extra = load_ground_truth(os.path.join(scene_dir, "ground_truth.txt"))
    return rgb, depth, mask, intr, pose, cuboid, extra
