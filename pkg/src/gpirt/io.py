"""Files: response CSVs, IRF tables, chain archives, configs and run manifests.

Chain archives are zip files holding ``.npy`` arrays plus a JSON header.
Every member gets a fixed timestamp, so identical chains produce
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import platform
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .errors import ChainFormatError, InvalidArgumentError, ParseError
from .gp_core import ThetaGrid
from .model import PLUS_MINUS, GpirtConfig, ResponseMatrix, recode, validate_responses
from .sampler import Chain
from .scoring import IRFTable

CHAIN_FORMAT = "gpirt-chain"
CHAIN_VERSION = 1
MISSING_TOKENS = ("", "NA")
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


# -- responses ----------------------------------------------------------------


def _parse_cell(token: str, line: int, column: int) -> float:
    token = token.strip()
    if token in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cell {token!r} is not a number", line, column) from None


def load_responses_csv(path, coding: str = PLUS_MINUS) -> ResponseMatrix:
    """Read a respondents-by-items CSV.

    The header row holds item ids after a leading label cell; each data
    row starts with a respondent id. Empty cells and ``NA`` are missing.
    ``coding`` is ``"pm"`` (``-1/+1``) or ``"zero-one"`` (``0/1``).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("file is empty", 1, None)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise ParseError("header needs a label column and at least one item id", 1, None)
    items = header[1:]
    respondents, raw = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", line, len(row) + 1
            )
        respondents.append(row[0].strip())
        raw.append([_parse_cell(tok, line, col) for col, tok in enumerate(row[1:], start=2)])
    if not raw:
        raise ParseError("no respondent rows", 2, None)
    cells = recode(np.array(raw, dtype=float), coding)
    return validate_responses(ResponseMatrix(tuple(respondents), tuple(items), cells))


def write_responses_csv(data: ResponseMatrix, path, coding: str = PLUS_MINUS, label="respondent"):
    """Inverse of ``load_responses_csv``; missing cells are written empty."""
    if coding == PLUS_MINUS:
        codes = {1: "1", -1: "-1", 0: ""}
    else:
        codes = {1: "1", -1: "0", 0: ""}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([label, *data.items])
        for rid, row in zip(data.respondents, data.cells):
            w.writerow([rid, *(codes[int(c)] for c in row)])


# -- IRF tables ---------------------------------------------------------------


def write_irf_csv(irfs: IRFTable, path) -> None:
    """Grid in the first column, one probability column per item, full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", *irfs.items])
        for g, theta in enumerate(irfs.grid.points):
            w.writerow([repr(float(theta)), *(repr(float(p)) for p in irfs.probs[:, g])])


def _infer_grid(points: np.ndarray) -> ThetaGrid:
    if points.size < 2:
        raise ParseError("IRF table needs at least two grid rows", 2, 1)
    step = float(np.round((points[-1] - points[0]) / (points.size - 1), 12))
    grid = ThetaGrid(float(points[0]), float(points[-1]), step)
    if len(grid) != points.size or not np.allclose(grid.points, points, atol=1e-9):
        raise ParseError("grid column is not evenly spaced", 2, 1)
    return grid


def read_irf_csv(path) -> IRFTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["theta"]:
        raise ParseError("IRF table must start with a 'theta' header", 1, 1)
    items = rows[0][1:]
    values = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise ParseError(f"expected {len(rows[0])} fields, found {len(row)}", line, len(row) + 1)
        try:
            values.append([float(x) for x in row])
        except ValueError:
            raise ParseError("non-numeric IRF entry", line, None) from None
    arr = np.array(values)
    return IRFTable(_infer_grid(arr[:, 0]), tuple(items), arr[:, 1:].T.copy())


def write_scores_csv(path, respondents, mean, sd) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["respondent", "theta_mean", "theta_sd"])
        for r, mu, s in zip(respondents, mean, sd):
            w.writerow([r, repr(float(mu)), repr(float(s))])


# -- chains -------------------------------------------------------------------


def _npy_bytes(arr) -> bytes:
    buf = _io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _write_member(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload, compress_type=zipfile.ZIP_STORED)


def write_chain(chain: Chain, path) -> None:
    """Serialize a chain: header JSON, data cells, and stacked state arrays."""
    header = {
        "format": CHAIN_FORMAT,
        "version": CHAIN_VERSION,
        "config": chain.config.to_dict(),
        "respondents": list(chain.respondents),
        "items": list(chain.items),
        "n_states": len(chain),
        "grid_length": len(chain.grid),
    }
    arrays = {"cells": chain.data.cells, "thetas": chain.thetas, "betas": chain.betas, "f_star": chain.f_star}
    for key, value in sorted(chain.diagnostics.items()):
        arrays[f"diag_{key}"] = np.asarray(value)
    with zipfile.ZipFile(path, "w") as zf:
        _write_member(zf, "header.json", json.dumps(header, sort_keys=True, indent=1).encode())
        for name in sorted(arrays):
            _write_member(zf, f"{name}.npy", _npy_bytes(arrays[name]))


def read_chain(path, grid: ThetaGrid | None = None) -> Chain:
    """Load a chain archive, checking its version tag and array shapes.

    If ``grid`` is given, the stored grid must have the same length.
    """
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise ChainFormatError(f"{path}: not a chain archive ({exc})") from None
    with zf:
        names = set(zf.namelist())
        if "header.json" not in names:
            raise ChainFormatError(f"{path}: missing header")
        header = json.loads(zf.read("header.json"))
        if header.get("format") != CHAIN_FORMAT or header.get("version") != CHAIN_VERSION:
            raise ChainFormatError(
                f"{path}: unsupported chain format {header.get('format')!r} "
                f"version {header.get('version')!r}"
            )
        arrays = {
            n[:-4]: np.lib.format.read_array(_io.BytesIO(zf.read(n)), allow_pickle=False)
            for n in sorted(names)
            if n.endswith(".npy")
        }
    missing = {"cells", "thetas", "betas", "f_star"} - set(arrays)
    if missing:
        raise ChainFormatError(f"{path}: missing arrays {sorted(missing)}")
    config = GpirtConfig.from_dict(header["config"])
    n_grid = len(config.grid)
    if header["grid_length"] != n_grid or arrays["f_star"].shape[-1] != n_grid:
        raise ChainFormatError(f"{path}: stored functions do not match the configured grid")
    if grid is not None and len(grid) != n_grid:
        raise ChainFormatError(f"{path}: chain grid has {n_grid} points, expected {len(grid)}")
    s, m, n = header["n_states"], len(header["respondents"]), len(header["items"])
    expected = {
        "thetas": (s, m),
        "betas": (s, n, config.mean_degree + 1),
        "f_star": (s, n, n_grid),
        "cells": (m, n),
    }
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ChainFormatError(f"{path}: {name} has shape {arrays[name].shape}, expected {shape}")
    data = validate_responses(
        ResponseMatrix(tuple(header["respondents"]), tuple(header["items"]), arrays["cells"])
    )
    diagnostics = {k[5:]: v for k, v in arrays.items() if k.startswith("diag_")}
    return Chain(config, data, arrays["thetas"], arrays["betas"], arrays["f_star"], diagnostics)


# -- configs, reports and manifests --------------------------------------------


def load_config(path) -> dict:
    """Read a flat JSON object of ``GpirtConfig`` fields."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(raw, dict) or any(isinstance(v, (dict, list)) for v in raw.values()):
        raise ParseError("config must be a flat key-value object", 1, 1)
    GpirtConfig.from_dict(raw)  # validate keys and values early
    return raw


def save_config(config: GpirtConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions() -> dict:
    from . import __version__

    return {
        "gpirt": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


@dataclass
class RunManifest:
    """What ran, on which inputs, and which files it produced (with checksums)."""

    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    versions: dict = field(default_factory=_versions)

    @classmethod
    def build(cls, command: str, config: dict, seed: int, inputs=(), artifacts=()) -> "RunManifest":
        return cls(
            command,
            dict(config),
            int(seed),
            {str(p): sha256_file(p) for p in inputs},
            {str(p): sha256_file(p) for p in artifacts},
        )

    def write(self, path) -> None:
        write_json(asdict(self), path)

    @classmethod
    def read(cls, path) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))

    def verify(self) -> dict:
        """Recompute artifact checksums; maps each path to whether it still matches."""
        return {p: Path(p).exists() and sha256_file(p) == h for p, h in self.artifacts.items()}


def validate_path(path, what: str = "input") -> Path:
    p = Path(path)
    if not p.is_file():
        raise InvalidArgumentError(f"{what} file not found: {path}")
    return p
