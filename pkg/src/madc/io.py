"""File formats and deterministic writers.

Model files are JSON documents with fields ``d``, ``h_e`` (row-major list
of [re, im] pairs), ``decay_vectors``, ``rates`` and ``spectral``.  Basis
files are JSON lists of complex vectors in the (excited..., ground)
layout.  All emitted CSV/JSON numbers are formatted with 17 significant
digits and files are written atomically, so identical inputs produce
byte-identical outputs.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .channel import BlockDensity
from .model import (FlatSpectral, LorentzianSpectral, ModelSpec,
                    TabulatedSpectral)
from .statistics import InitialState, MeasurementBasis

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# complex codecs
# ---------------------------------------------------------------------------

def complex_to_pair(z: complex) -> list:
    return [float(np.real(z)), float(np.imag(z))]

def pair_to_complex(p) -> complex:
    if isinstance(p, (int, float)):
        return complex(p)
    return complex(p[0], p[1])

def matrix_to_pairs(m: np.ndarray) -> list:
    return [complex_to_pair(z) for z in np.asarray(m).reshape(-1)]

def pairs_to_matrix(pairs, shape) -> np.ndarray:
    flat = np.array([pair_to_complex(p) for p in pairs], dtype=complex)
    return flat.reshape(shape)

def vector_to_pairs(v) -> list:
    return [complex_to_pair(z) for z in np.asarray(v)]

def pairs_to_vector(pairs) -> np.ndarray:
    return np.array([pair_to_complex(p) for p in pairs], dtype=complex)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def spectral_to_dict(s) -> dict:
    if isinstance(s, FlatSpectral):
        return {"kind": "flat"}
    if isinstance(s, LorentzianSpectral):
        return {"kind": "lorentzian", "omega0": list(s.omega0),
                "lambda": list(s.lam), "gamma0": list(s.gamma0)}
    if isinstance(s, TabulatedSpectral):
        return {"kind": "tabulated", "omega": [float(w) for w in s.omega],
                "J": [[float(v) for v in row] for row in s.values]}
    raise ValueError(f"unknown spectral object {s!r}")


def spectral_from_dict(obj: dict):
    kind = obj.get("kind")
    if kind == "flat":
        return FlatSpectral()
    if kind == "lorentzian":
        return LorentzianSpectral(tuple(obj["omega0"]), tuple(obj["lambda"]),
                                  tuple(obj["gamma0"]))
    if kind == "tabulated":
        return TabulatedSpectral(np.asarray(obj["omega"], dtype=float),
                                 np.asarray(obj["J"], dtype=float))
    raise ValueError(f"unknown spectral kind {kind!r}")


def model_to_dict(spec: ModelSpec) -> dict:
    return {
        "d": spec.d,
        "h_e": matrix_to_pairs(spec.h_e),
        "decay_vectors": [vector_to_pairs(v) for v in spec.decay_vectors],
        "rates": [float(g) for g in spec.rates],
        "spectral": spectral_to_dict(spec.spectral),
    }


def model_from_dict(obj: dict) -> ModelSpec:
    try:
        d = int(obj["d"])
        h_e = pairs_to_matrix(obj["h_e"], (d, d))
        vecs = [pairs_to_vector(v) for v in obj["decay_vectors"]]
        rates = np.asarray(obj["rates"], dtype=float)
        spectral = spectral_from_dict(obj.get("spectral", {"kind": "flat"}))
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc
    return ModelSpec(d, h_e, vecs, rates, spectral)


def load_model(path) -> ModelSpec:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(spec: ModelSpec, path) -> None:
    dump_json(model_to_dict(spec), path)


# ---------------------------------------------------------------------------
# basis / state files
# ---------------------------------------------------------------------------

def basis_to_list(basis: MeasurementBasis) -> list:
    return [vector_to_pairs(v) for v in basis.vectors]


def basis_from_list(obj) -> MeasurementBasis:
    return MeasurementBasis(np.array([pairs_to_vector(v) for v in obj]))


def load_basis(path) -> MeasurementBasis:
    with open(path) as fh:
        return basis_from_list(json.load(fh))


def save_basis(basis: MeasurementBasis, path) -> None:
    dump_json(basis_to_list(basis), path)


def initial_state_from_dict(obj: dict) -> InitialState:
    return InitialState(pair_to_complex(obj.get("alpha", 0.0)),
                        pairs_to_vector(obj["psi_e"]))


def block_density_to_dict(rho: BlockDensity) -> dict:
    return {"rho_e": matrix_to_pairs(rho.rho_e),
            "w": vector_to_pairs(rho.w),
            "rho_g": float(rho.rho_g)}


def block_density_from_dict(obj: dict) -> BlockDensity:
    w = pairs_to_vector(obj["w"])
    d = len(w)
    return BlockDensity(pairs_to_matrix(obj["rho_e"], (d, d)), w,
                        float(obj["rho_g"]))


# ---------------------------------------------------------------------------
# deterministic writers
# ---------------------------------------------------------------------------

def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    raise TypeError(f"cannot format {type(v)} as a JSON number")


def _json_fragments(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(obj):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)))
            out.append(": ")
            _json_fragments(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(", ")
            _json_fragments(item, out)
        out.append("]")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        out.append(_format_value(obj))


def json_text(obj) -> str:
    """JSON text with every float rendered at 17 significant digits."""
    out: list = []
    _json_fragments(obj, out)
    return "".join(out) + "\n"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def dump_json(obj, path) -> None:
    atomic_write(path, json_text(obj))


def write_csv(path, header, rows) -> None:
    """CSV with fixed 17-significant-digit floats, written atomically."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (bool, int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(FLOAT_FMT % float(v))
        lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + "\n")
