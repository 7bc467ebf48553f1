"""File formats: dataset / embedding / trace / curve CSVs and the run config."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .affinity import Dataset
from .divergence import parse_divergence
from .primal import OptimizerSchedule
from .variational import MinimaxConfig

__all__ = [
    "FormatError",
    "RunConfig",
    "read_dataset",
    "write_dataset",
    "read_embedding",
    "write_embedding",
    "write_primal_trace",
    "write_variational_trace",
    "read_trace",
    "write_curves",
    "read_curves",
    "write_heatmap",
    "read_heatmap",
    "fmt",
]


class FormatError(ValueError):
    pass


def fmt(value) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _label_text(labels):
    labels = np.asarray(labels)
    if labels.dtype.kind in "iub":
        return [str(int(v)) for v in labels]
    if labels.dtype.kind == "f":
        return [fmt(v) for v in labels]
    return [str(v) for v in labels]


def _write_rows(path, header, rows):
    """``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        writer = csv.writer(path, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, header, rows)


def _read_rows(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return [h.strip() for h in header], rows


def _parse_labels(values):
    try:
        nums = np.array([float(v) for v in values])
    except ValueError:
        return np.array(values)
    if np.all(np.isfinite(nums)) and np.all(nums == np.round(nums)) and all("." not in v for v in values):
        return nums.astype(np.int64)
    return nums


def _numeric_block(path, header, rows, prefix):
    cols = [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
    expected = [f"{prefix}{k}" for k in range(len(cols))]
    if not cols or [header[i] for i in cols] != expected:
        raise FormatError(f"{path}: expected columns {prefix}0..{prefix}N, got {header}")
    extra = [h for i, h in enumerate(header) if i not in cols]
    if extra not in ([], ["label"]) or (extra and header[-1] != "label"):
        raise FormatError(f"{path}: unexpected columns {extra}")
    try:
        block = np.array([[float(r[i]) for i in cols] for r in rows])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed row ({exc})") from None
    labels = _parse_labels([r[-1] for r in rows]) if extra else None
    return block, labels


def read_dataset(path) -> Dataset:
    """Dataset CSV: header ``f0..f{D-1}`` with an optional final ``label`` column."""
    header, rows = _read_rows(path)
    points, labels = _numeric_block(path, header, rows, "f")
    return Dataset(points, labels)


def write_dataset(path, data: Dataset):
    pts = data.points
    header = [f"f{k}" for k in range(pts.shape[1])]
    labels = None if data.labels is None else _label_text(data.labels)
    if labels is not None:
        header.append("label")
    rows = []
    for i, row in enumerate(pts):
        out = [fmt(v) for v in row]
        if labels is not None:
            out.append(labels[i])
        rows.append(out)
    _write_rows(path, header, rows)


def read_embedding(path):
    """Returns ``(coords, labels_or_None)`` from a ``y0..y{d-1}[,label]`` CSV."""
    header, rows = _read_rows(path)
    return _numeric_block(path, header, rows, "y")


def write_embedding(path, coords, labels=None):
    coords = np.asarray(coords, dtype=float)
    header = [f"y{k}" for k in range(coords.shape[1])]
    text = None if labels is None else _label_text(labels)
    if text is not None:
        header.append("label")
    rows = []
    for i, row in enumerate(coords):
        out = [fmt(v) for v in row]
        if text is not None:
            out.append(text[i])
        rows.append(out)
    _write_rows(path, header, rows)


def write_primal_trace(path, epochs, losses):
    _write_rows(path, ["epoch", "loss"], [[fmt(e), fmt(v)] for e, v in zip(epochs, losses)])


def write_variational_trace(path, rounds, objectives, losses, clips):
    _write_rows(
        path,
        ["round", "variational_objective", "primal_loss", "clip_events"],
        [[fmt(r), fmt(o), fmt(v), fmt(c)] for r, o, v, c in zip(rounds, objectives, losses, clips)],
    )


def read_trace(path) -> dict:
    """Any trace or curve CSV as a dict of float columns."""
    header, rows = _read_rows(path)
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.empty((0, len(header)))
    return {h: data[:, k] for k, h in enumerate(header)}


def write_curves(path, curves):
    _write_rows(
        path,
        ["param", "precision", "recall", "fscore"],
        [[fmt(a), fmt(b), fmt(c), fmt(d)] for a, b, c, d in curves.rows()],
    )


def read_curves(path):
    from .metrics import RetrievalCurves

    cols = read_trace(path)
    return RetrievalCurves(cols["param"], cols["precision"], cols["recall"], cols["fscore"])


def write_heatmap(path, ps, qs, values):
    rows = []
    for i, p in enumerate(ps):
        for j, q in enumerate(qs):
            rows.append([fmt(p), fmt(q), fmt(values[i, j])])
    _write_rows(path, ["p", "q", "value"], rows)


def read_heatmap(path):
    cols = read_trace(path)
    return cols["p"], cols["q"], cols["value"]


@dataclass
class RunConfig:
    """Every knob of an ``embed`` run; serializes to canonical JSON."""

    divergence: str = "kl"
    optimizer: str = "primal"
    perplexity: float = 30.0
    d: int = 2
    seed: int = 0
    lr0: float = 100.0
    momentum0: float = 0.5
    lr_decay: float = 500.0
    momentum_decay: float = 500.0
    epochs: int = 1000
    decay: str = "inverse"
    exaggeration: float = 1.0
    exaggeration_epochs: int = 0
    rounds: int = 500
    j_steps: int = 10
    k_steps: int = 10
    disc_lr: float = 1e-3
    enc_widths: list = None
    head_widths: list = None
    plateau: bool = False
    trace_every: int = 1
    input: str | None = None
    output: str | None = None
    trace: str | None = None

    def __post_init__(self):
        if self.enc_widths is None:
            self.enc_widths = [10]
        if self.head_widths is None:
            self.head_widths = [20]
        self.enc_widths = [int(w) for w in self.enc_widths]
        self.head_widths = [int(w) for w in self.head_widths]

    def validate(self):
        self.div()
        if self.optimizer not in ("primal", "variational"):
            raise ValueError(f"optimizer must be 'primal' or 'variational', got {self.optimizer!r}")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if any(w < 1 for w in self.enc_widths + self.head_widths):
            raise ValueError("layer widths must be >= 1")
        self.schedule()
        if self.optimizer == "variational":
            self.minimax()
        return self

    def div(self):
        return parse_divergence(self.divergence)

    def schedule(self) -> OptimizerSchedule:
        return OptimizerSchedule(
            lr0=self.lr0, momentum0=self.momentum0, lr_decay=self.lr_decay,
            momentum_decay=self.momentum_decay, epochs=self.epochs, seed=self.seed,
            decay=self.decay, exaggeration=self.exaggeration,
            exaggeration_epochs=self.exaggeration_epochs,
        )

    def minimax(self) -> MinimaxConfig:
        return MinimaxConfig(
            j_steps=self.j_steps, k_steps=self.k_steps, disc_lr=self.disc_lr,
            emb_schedule=self.schedule(), rounds=self.rounds,
            enc_widths=tuple(self.enc_widths), head_widths=tuple(self.head_widths),
            plateau=self.plateau,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
