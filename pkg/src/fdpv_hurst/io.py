"""Series CSV and JSON document helpers."""

from __future__ import annotations

import json
import os

import numpy as np


class CSVFormatError(ValueError):
    def __init__(self, line_no: int, text: str, reason: str = "not a number"):
        self.line_no = line_no
        self.text = text
        super().__init__(f"line {line_no}: {reason}: {text!r}")


def read_series_csv(path: str | os.PathLike) -> np.ndarray:
    """Read one value per line.

    Blank lines and ``#`` comments are skipped; the first remaining line may
    be a non-numeric header. Parsing always uses ``.`` as decimal point.
    """
    values = []
    header_allowed = True
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            try:
                v = float(text)
            except ValueError:
                if header_allowed:
                    header_allowed = False
                    continue
                raise CSVFormatError(line_no, text) from None
            header_allowed = False
            if not np.isfinite(v):
                raise CSVFormatError(line_no, text, "non-finite value")
            values.append(v)
    return np.asarray(values, dtype=np.float64)


def write_series_csv(path: str | os.PathLike, values, seed: int | None = None, header: str | None = "value") -> None:
    with open(path, "w") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        if header:
            fh.write(header + "\n")
        for v in np.asarray(values, dtype=np.float64).tolist():
            fh.write(f"{v!r}\n")


def read_json(path: str | os.PathLike):
    with open(path) as fh:
        return json.load(fh)


def write_json(path: str | os.PathLike, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
