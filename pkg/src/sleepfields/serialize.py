"""Plain-text model files.

Layout::

    sleepfields-model 1
    kind crf
    alphabet ["Awake", "S1", "S2", "SWS", "REM"]
    l2 0.01
    block state 5 28
    <28 numbers>            (one line per row, row-major)
    ...

Header lines are ``key value`` with JSON-encoded values. Each ``block``
line gives a name and its row/column counts; vectors are stored as one row.
Floats are written with ``repr`` so a save/load round trip is exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cnf import CnfModel, GateLayer
from .core import LabelAlphabet
from .crf import CrfModel
from .errors import DataError
from .hmm import HmmModel
from .latent import HiddenMap, LatentModel

MAGIC = "sleepfields-model"
VERSION = 1


def _header_and_blocks(model):
    if isinstance(model, CrfModel):
        return {"l2": model.l2}, {"state": model.state, "trans": model.trans, "bias": model.bias}
    if isinstance(model, CnfModel):
        head = {"l2": model.l2, "context_window": model.context_window, "activation": model.gate.activation}
        return head, {
            "state": model.state, "trans": model.trans, "bias": model.bias, "gate": model.gate.weights,
        }
    if isinstance(model, LatentModel):
        head = {
            "l2": model.l2,
            "hidden_per_label": model.hidden.states_per_label,
            "window": model.window,
            "context_window": model.context_window,
        }
        blocks = {"state": model.state, "trans": model.trans, "bias": model.bias}
        if model.compat is not None:
            blocks["compat"] = model.compat
        if model.gate is not None:
            head["activation"] = model.gate.activation
            blocks["gate"] = model.gate.weights
        return head, blocks
    if isinstance(model, HmmModel):
        return {}, {"start": model.start, "trans": model.trans, "means": model.means, "variances": model.variances}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(model, path) -> None:
    head, blocks = _header_and_blocks(model)
    lines = [f"{MAGIC} {VERSION}", f"kind {json.dumps(model.kind)}", f"alphabet {json.dumps(list(model.alphabet.names))}"]
    lines += [f"{k} {json.dumps(v)}" for k, v in head.items()]
    for name, arr in blocks.items():
        a = np.atleast_2d(np.asarray(arr, dtype=float))
        lines.append(f"block {name} {a.shape[0]} {a.shape[1]}")
        lines += [" ".join(repr(float(v)) for v in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].split()[:1] != [MAGIC]:
        raise DataError(f"{path}: not a model file")
    version = int(text[0].split()[1])
    if version != VERSION:
        raise DataError(f"{path}: unsupported model format version {version}")
    head, blocks = {}, {}
    i = 1
    while i < len(text):
        line = text[i]
        if not line.strip():
            i += 1
            continue
        key, _, rest = line.partition(" ")
        if key == "block":
            name, rows, cols = rest.split()
            rows, cols = int(rows), int(cols)
            data = [[float(v) for v in text[i + 1 + r].split()] for r in range(rows)]
            arr = np.array(data, dtype=float).reshape(rows, cols)
            blocks[name] = arr
            i += rows + 1
        else:
            head[key] = json.loads(rest)
            i += 1
    return head, blocks


def load_model(path):
    try:
        head, blocks = _parse(path)
    except (ValueError, IndexError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: malformed model file ({e})") from e
    kind = head["kind"]
    alphabet = LabelAlphabet(tuple(head["alphabet"]))
    if kind == "crf":
        return CrfModel(blocks["state"], blocks["trans"], blocks["bias"][0], alphabet, head["l2"])
    if kind == "cnf":
        gate = GateLayer(blocks["gate"], head["activation"])
        return CnfModel(
            gate, blocks["state"], blocks["trans"], blocks["bias"][0], alphabet, head["l2"], head["context_window"]
        )
    if kind in ("hcrf", "ldcrf", "ldcnf"):
        gate = GateLayer(blocks["gate"], head["activation"]) if "gate" in blocks else None
        return LatentModel(
            kind,
            HiddenMap(alphabet.size, head["hidden_per_label"]),
            blocks["state"],
            blocks["trans"],
            blocks["bias"][0],
            alphabet,
            head["l2"],
            gate=gate,
            compat=blocks.get("compat"),
            window=head["window"],
            context_window=head["context_window"],
        )
    if kind == "hmm":
        return HmmModel(blocks["start"][0], blocks["trans"], blocks["means"], blocks["variances"], alphabet)
    raise DataError(f"{path}: unknown model kind {kind!r}")
