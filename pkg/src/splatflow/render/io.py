"""Image dumps: binary PPM for semantic colors, 16-bit PGM for depth, raw f32 arrays."""

import json
import os

import numpy as np

# fixed palette, one RGB triple per class id; index -1 (no label) maps to black
PALETTE = np.array([
    [0, 0, 0], [255, 120, 50], [255, 192, 203], [255, 255, 0], [0, 150, 245],
    [0, 255, 255], [200, 180, 0], [255, 0, 0], [255, 240, 150], [135, 60, 0],
    [160, 32, 240], [255, 0, 255], [139, 137, 137], [75, 0, 75], [150, 240, 80],
    [230, 230, 250], [0, 175, 0],
], dtype=np.uint8)

DEPTH_SCALE = 1000.0  # millimeters per meter
DEPTH_MAX = 65535


def colorize(classes, palette=PALETTE):
    """(H, W) class ids -> (H, W, 3) uint8 colors; negatives are black."""
    classes = np.asarray(classes)
    out = np.zeros(classes.shape + (3,), dtype=np.uint8)
    ok = classes >= 0
    out[ok] = palette[1:][classes[ok] % (len(palette) - 1)]
    return out


def write_ppm(path, rgb):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("PPM needs an (H, W, 3) array")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(rgb.tobytes())


def _read_header(f, magic):
    tokens = []
    while len(tokens) < 4:
        line = f.readline()
        if not line:
            raise ValueError("truncated header")
        line = line.split(b"#")[0]
        tokens += line.split()
    if tokens[0] != magic:
        raise ValueError(f"expected {magic!r}, got {tokens[0]!r}")
    return int(tokens[1]), int(tokens[2]), int(tokens[3])


def read_ppm(path):
    with open(path, "rb") as f:
        w, h, maxval = _read_header(f, b"P6")
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3)


def depth_to_u16(depth):
    """Meters -> millimeters, rounded and clipped to the 16-bit range."""
    mm = np.rint(np.asarray(depth, dtype=np.float64) * DEPTH_SCALE)
    return np.clip(mm, 0, DEPTH_MAX).astype(np.uint16)


def write_pgm16(path, depth_m):
    """Depth in meters as a big-endian 16-bit PGM in millimeters."""
    u16 = depth_to_u16(depth_m)
    h, w = u16.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (w, h, DEPTH_MAX))
        f.write(u16.astype(">u2").tobytes())


def read_pgm16(path):
    """Returns depth in millimeters as uint16."""
    with open(path, "rb") as f:
        w, h, maxval = _read_header(f, b"P5")
        data = np.frombuffer(f.read(w * h * 2), dtype=">u2")
    return data.reshape(h, w).astype(np.uint16)


def write_raw(path, array):
    """Little-endian f32 dump with a JSON sidecar recording shape and order."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    arr.tofile(path)
    with open(path + ".json", "w") as f:
        json.dump({"dtype": "float32", "endian": "little", "order": "C", "shape": list(arr.shape)}, f)


def read_raw(path):
    with open(path + ".json") as f:
        meta = json.load(f)
    return np.fromfile(path, dtype="<f4").reshape(meta["shape"])


def dump_maps(out_dir, maps, prefix=""):
    """Write sem.ppm, depth.pgm and raw f32 dumps of a RenderedMaps; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    classes = np.where(maps.mask, np.argmax(maps.sem, axis=2), -1)
    paths = {
        "sem": os.path.join(out_dir, f"{prefix}sem.ppm"),
        "depth": os.path.join(out_dir, f"{prefix}depth.pgm"),
        "sem_raw": os.path.join(out_dir, f"{prefix}sem.f32"),
        "depth_raw": os.path.join(out_dir, f"{prefix}depth.f32"),
        "weight_raw": os.path.join(out_dir, f"{prefix}weight.f32"),
    }
    write_ppm(paths["sem"], colorize(classes))
    write_pgm16(paths["depth"], maps.depth)
    write_raw(paths["sem_raw"], maps.sem)
    write_raw(paths["depth_raw"], maps.depth)
    write_raw(paths["weight_raw"], maps.weight)
    return paths


def dump_labels(out_dir, labels, prefix=""):
    """Write a LabelMap as class PPM, depth PGM and raw dumps."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "sem": os.path.join(out_dir, f"{prefix}sem.ppm"),
        "depth": os.path.join(out_dir, f"{prefix}depth.pgm"),
        "classes_raw": os.path.join(out_dir, f"{prefix}classes.f32"),
        "depth_raw": os.path.join(out_dir, f"{prefix}depth.f32"),
    }
    write_ppm(paths["sem"], colorize(labels.classes))
    write_pgm16(paths["depth"], np.where(labels.mask, labels.depth, 0.0))
    write_raw(paths["classes_raw"], labels.classes)
    write_raw(paths["depth_raw"], np.where(labels.mask, labels.depth, 0.0))
    return paths
