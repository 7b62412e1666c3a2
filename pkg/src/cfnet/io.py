"""Sequence directories, frame files, results/curve CSVs and config files.

A sequence directory holds ``groundtruth_rect.txt`` (one ``x,y,w,h`` line per
frame, 1-based pixel coordinates, comma/tab/space separated) and an ``img/``
directory whose frames sort lexicographically. Internally rects use 0-based
pixel-edge coordinates, so files and memory differ by one in x and y.
"""

import csv
import io as _io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import FrameCountMismatch, MissingGroundTruth, UnsupportedFormat
from .evaluation import SequenceAnnotation
from .tracker import Rect

GROUNDTRUTH = "groundtruth_rect.txt"
IMAGE_DIR = "img"
FRAME_SUFFIXES = (".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".ppm")
LUMA = np.array([0.299, 0.587, 0.114])


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- images


def _pgm_tokens(data, count):
    """Parse ``count`` header tokens, skipping comments; returns (tokens, offset)."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormat("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def decode_pgm(data):
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise UnsupportedFormat(f"only binary PGM (P5) is supported, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 65536:
        raise UnsupportedFormat(f"bad PGM maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = width * height
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def encode_pgm(frame):
    """8-bit binary PGM of a [0, 1] greyscale frame."""
    frame = np.asarray(frame, dtype=np.float64)
    pixels = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode()
    return header + pixels.tobytes()


def to_grey(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ LUMA[: img.shape[-1]] if img.shape[-1] >= 3 else img[..., 0]
    return img


def read_frame(path):
    """Load a frame as a greyscale float64 array in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return decode_pgm(path.read_bytes())
    if suffix not in FRAME_SUFFIXES:
        raise UnsupportedFormat(f"unsupported frame format {path.name}")
    try:
        from PIL import Image
    except ImportError as exc:
        raise UnsupportedFormat(f"{path.name}: Pillow is needed to decode {suffix} files") from exc
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return to_grey(arr)


class LazyFrames:
    """List-like view over frame files, decoded on access."""

    def __init__(self, paths):
        self.paths = list(paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return LazyFrames(self.paths[idx])
        return read_frame(self.paths[idx])

    def __iter__(self):
        for p in self.paths:
            yield read_frame(p)


# ---------------------------------------------------------------- annotations


_SPLIT = re.compile(r"[,\t ]+")


def parse_rect_line(line):
    parts = [p for p in _SPLIT.split(line.strip()) if p]
    if len(parts) != 4:
        raise ValueError(f"expected 4 values in rect line, got {line!r}")
    x, y, w, h = (float(p) for p in parts)
    return Rect(x, y, w, h)


def read_groundtruth(path):
    """1-based file rects, returned in 0-based internal coordinates."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    out = []
    for ln in lines:
        r = parse_rect_line(ln)
        out.append(Rect(r.x - 1.0, r.y - 1.0, r.w, r.h))
    return out


def format_rect(rect):
    return ",".join(_fmt(v) for v in (rect.x + 1.0, rect.y + 1.0, rect.w, rect.h))


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def list_frames(img_dir):
    img_dir = Path(img_dir)
    if not img_dir.is_dir():
        raise MissingGroundTruth(f"no {IMAGE_DIR}/ directory in {img_dir.parent}")
    return sorted((p for p in img_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES),
                  key=lambda p: p.name)


def load_sequence(directory):
    directory = Path(directory)
    gt_path = directory / GROUNDTRUTH
    if not gt_path.is_file():
        raise MissingGroundTruth(f"{gt_path} not found")
    rects = read_groundtruth(gt_path)
    paths = list_frames(directory / IMAGE_DIR)
    if len(paths) != len(rects):
        raise FrameCountMismatch(f"{directory}: {len(paths)} frames but {len(rects)} rects")
    return SequenceAnnotation(frames=LazyFrames(paths), rects=rects, name=directory.name,
                              frame_paths=paths)


def find_sequences(directory):
    """A sequence directory itself, or every sequence directory directly inside it."""
    directory = Path(directory)
    if (directory / GROUNDTRUTH).is_file():
        return [directory]
    found = sorted(p for p in directory.iterdir() if (p / GROUNDTRUTH).is_file())
    if not found:
        raise MissingGroundTruth(f"no sequences found under {directory}")
    return found


def write_sequence(directory, frames, rects):
    directory = Path(directory)
    img = directory / IMAGE_DIR
    img.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(frames))))
    for i, frame in enumerate(frames, start=1):
        atomic_write(img / f"{i:0{width}d}.pgm", encode_pgm(frame))
    atomic_write(directory / GROUNDTRUTH, "".join(format_rect(r) + "\n" for r in rects))


# ---------------------------------------------------------------- csv / config


def write_results(path, trajectories):
    """Rows ``frame,x,y,w,h`` for a single run starting at frame 1, otherwise
    ``start,frame,x,y,w,h``; frames and starts are 1-based.

    ``trajectories`` maps 0-based start frame -> list of rects.
    """
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    single = list(trajectories) == [0]
    writer.writerow(["frame", "x", "y", "w", "h"] if single else
                    ["start", "frame", "x", "y", "w", "h"])
    for start in sorted(trajectories):
        for offset, rect in enumerate(trajectories[start]):
            row = [start + offset + 1] + format_rect(rect).split(",")
            writer.writerow(row if single else [start + 1] + row)
    atomic_write(path, buf.getvalue())


def read_results(path):
    """Inverse of ``write_results``: 0-based start -> rects in internal coordinates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header not in (["frame", "x", "y", "w", "h"], ["start", "frame", "x", "y", "w", "h"]):
            raise UnsupportedFormat(f"unexpected results header {header}")
        has_start = header[0] == "start"
        runs = {}
        for row in reader:
            if not row:
                continue
            start = int(row[0]) - 1 if has_start else 0
            x, y, w, h = (float(v) for v in row[-4:])
            frame = int(row[-5]) - 1
            run = runs.setdefault(start, [])
            if frame != start + len(run):
                raise ValueError(f"results for start {start + 1} are not contiguous at frame {frame + 1}")
            run.append(Rect(x - 1.0, y - 1.0, w, h))
    return runs


def write_curve(path, curve, thresholds):
    lines = ["threshold,success"] + [f"{t!r},{c!r}" for t, c in zip(thresholds, curve)]
    atomic_write(path, "\n".join(lines) + "\n")


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Values are floats or ints."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = int(value) if re.fullmatch(r"[+-]?\d+", value) else float(value)
    return out
