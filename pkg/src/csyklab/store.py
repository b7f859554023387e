"""On-disk persistence: realization store, speckle field files and CSV output."""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .couplings import HoppingMatrix
from .errors import ConfigError
from .speckle import SpeckleConfig, SpeckleField

MAGIC = b"CSYKREAL"
FIELD_MAGIC = b"CSYKSPKL"
VERSION = 1


def fmt(x) -> str:
    """Lossless float text (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(v) for v in row] for row in r]
    return header, np.array(data, dtype=float).reshape(len(data), len(header))


def read_csv_text(path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        return next(r), [row for row in r]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --- binary records -------------------------------------------------------

def _pack(magic: bytes, header: dict, payload: np.ndarray) -> bytes:
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return magic + struct.pack("<HI", VERSION, len(hdr)) + hdr + body


def _unpack(magic: bytes, blob: bytes) -> tuple[dict, np.ndarray]:
    if blob[:8] != magic:
        raise ConfigError("bad file magic")
    version, n = struct.unpack("<HI", blob[8:14])
    if version != VERSION:
        raise ConfigError(f"unsupported record version {version}")
    header = json.loads(blob[14:14 + n].decode("utf-8"))
    data = np.frombuffer(blob[14 + n:], dtype="<f8").reshape(header["shape"])
    return header, data.copy()


def save_field(path, fld: SpeckleField) -> Path:
    c = fld.config
    header = {"n_grid": c.n_grid, "dim_grid": c.dim_grid, "radius": c.mask_radius_px,
              "seed": fld.seed, "index": fld.index, "shape": list(fld.values.shape)}
    path = Path(path)
    path.write_bytes(_pack(FIELD_MAGIC, header, fld.values))
    return path


def load_field(path) -> SpeckleField:
    h, values = _unpack(FIELD_MAGIC, Path(path).read_bytes())
    cfg = SpeckleConfig(h["n_grid"], h["dim_grid"], h["radius"])
    return SpeckleField(cfg, values, h["seed"], h["index"])


def field_to_csv(path, fld: SpeckleField) -> Path:
    x = fld.config.axis()
    rows = ((x[i], x[j], fld.values[i, j]) for i in range(len(x)) for j in range(len(x)))
    return write_csv(path, ["x", "y", "value"], rows)


class RealizationStore:
    """Directory of hopping realizations bound to one configuration.

    Layout: ``config.json``, ``realizations/<index>.bin`` and
    ``manifest.json`` mapping every payload file to its sha256.
    """

    def __init__(self, root, config: dict):
        self.root = Path(root)
        self.config = json.loads(json.dumps(config, sort_keys=True, default=_json_default))
        cfg_path = self.root / "config.json"
        if cfg_path.exists():
            existing = json.loads(cfg_path.read_text(encoding="utf-8"))
            if existing != self.config:
                raise ConfigError(f"store at {self.root} was written with a different configuration")
        else:
            (self.root / "realizations").mkdir(parents=True, exist_ok=True)
            write_json(cfg_path, self.config)
            self._write_manifest({})

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def manifest(self) -> dict:
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def _write_manifest(self, files: dict):
        write_json(self.manifest_path, {"version": VERSION, "config_sha256": sha256_file(self.root / "config.json"),
                                        "files": dict(sorted(files.items()))})

    def _name(self, index: int) -> str:
        return f"realizations/{index:06d}.bin"

    def put(self, h: HoppingMatrix, seed: int) -> Path:
        header = {"seed": seed, "origin": h.origin, "index": h.realization_index,
                  "shape": list(h.entries.shape), "config_sha256": self.manifest()["config_sha256"]}
        name = self._name(h.realization_index)
        path = self.root / name
        path.write_bytes(_pack(MAGIC, header, h.entries))
        files = self.manifest()["files"]
        files[name] = sha256_file(path)
        self._write_manifest(files)
        return path

    def get(self, index: int) -> HoppingMatrix:
        name = self._name(index)
        path = self.root / name
        files = self.manifest()["files"]
        if name not in files:
            raise ConfigError(f"realization {index} missing from store")
        if sha256_file(path) != files[name]:
            raise ConfigError(f"hash mismatch for {name}")
        header, data = _unpack(MAGIC, path.read_bytes())
        if header["config_sha256"] != self.manifest()["config_sha256"]:
            raise ConfigError(f"{name} belongs to a different configuration")
        return HoppingMatrix(data, header["origin"], header["index"])

    def indices(self) -> list[int]:
        return sorted(int(Path(n).stem) for n in self.manifest()["files"])

    def verify(self) -> bool:
        files = self.manifest()["files"]
        return all(sha256_file(self.root / n) == h for n, h in files.items())
