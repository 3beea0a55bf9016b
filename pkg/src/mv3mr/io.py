"""Plain-text files: matrices, manifests, key=value configs, splits and models.

Every number is written with ``%.17g`` so that reading a file back gives the
same doubles bit for bit. Writes go to a temporary file in the target
directory and are renamed into place, so a failed write never leaves a
truncated file behind.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile
from pathlib import Path

import numpy as np

from .kernels import DistanceMetric, ViewKernel
from .synth import SyntheticSpec
from .trainer import Dataset, ModelState, TrainConfig, View

FLOAT_FMT = "%.17g"
MODEL_MAGIC = "mv3mr-model 1"
SPLIT_ROLES = ("labeled", "unlabeled", "test")
MANIFEST_VERSION = 1
MANIFEST_COUNTS = ("version", "n_samples", "n_labels", "n_views")


class FormatError(ValueError):
    """A file could not be parsed; the message carries file and line."""

    def __init__(self, path, line: int | None, msg: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")


def fmt(x) -> str:
    return FLOAT_FMT % float(x)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="ascii") as fh:
            return fh.read().splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError(path, None, f"not an ASCII text file ({exc})") from None


# --- matrices ---------------------------------------------------------------


def format_matrix(A) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows = [" ".join(fmt(x) for x in row) for row in A]
    return "\n".join([f"{A.shape[0]} {A.shape[1]}", *rows]) + "\n"


def _parse_float(tok, path, line):
    try:
        return float(tok)
    except ValueError:
        raise FormatError(path, line, f"not a number: {tok!r}") from None


def _parse_matrix(lines, start, path, rows=None, cols=None):
    """Parse a header-less block of ``rows`` lines beginning at ``lines[start]``."""
    out = np.empty((rows, cols))
    for r in range(rows):
        lineno = start + r + 1
        if start + r >= len(lines):
            raise FormatError(path, lineno, f"expected {rows} rows, file ends after {r}")
        toks = lines[start + r].split()
        if len(toks) != cols:
            raise FormatError(path, lineno, f"expected {cols} values, found {len(toks)}")
        out[r] = [_parse_float(t, path, lineno) for t in toks]
    return out


def _parse_shape(text, path, line):
    toks = text.split()
    if len(toks) != 2:
        raise FormatError(path, line, "header must be 'rows cols'")
    try:
        rows, cols = int(toks[0]), int(toks[1])
    except ValueError:
        raise FormatError(path, line, "header must hold two integers") from None
    if rows < 0 or cols < 0:
        raise FormatError(path, line, "negative dimension")
    return rows, cols


def read_matrix(path) -> np.ndarray:
    lines = [ln for ln in _read_lines(path)]
    if not lines:
        raise FormatError(path, 1, "empty file")
    rows, cols = _parse_shape(lines[0], path, 1)
    A = _parse_matrix(lines, 1, path, rows, cols)
    extra = [i for i, ln in enumerate(lines[1 + rows :], start=2 + rows) if ln.strip()]
    if extra:
        raise FormatError(path, extra[0], f"unexpected content after {rows} rows")
    return A


def write_matrix(path, A) -> None:
    atomic_write(path, format_matrix(A))


def write_vector(path, values) -> None:
    atomic_write(path, "".join(fmt(v) + "\n" for v in np.ravel(values)))


def read_vector(path) -> np.ndarray:
    lines = _read_lines(path)
    return np.array([_parse_float(ln.strip(), path, i) for i, ln in enumerate(lines, 1) if ln.strip()])


# --- key=value files ----------------------------------------------------------


def read_keyvalue(path) -> list[tuple[str, str, int]]:
    """``(key, value, line)`` triples in file order; ``#`` starts a comment."""
    out = []
    for i, raw in enumerate(_read_lines(path), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, i, "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(path, i, "empty key")
        out.append((key, value, i))
    return out


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(value: str, typ):
    if typ is bool:
        return _parse_bool(value)
    if typ is int:
        return int(value)
    if typ is float:
        return float(value)
    if typ is tuple:
        return tuple(float(v) for v in value.replace(",", " ").split())
    return value


def _typed_fields(cls, path, items):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    defaults = cls()
    values = {}
    for key, value, line in items:
        if key not in types:
            raise FormatError(path, line, f"unknown key {key!r}")
        if key in values:
            raise FormatError(path, line, f"duplicate key {key!r}")
        typ = type(getattr(defaults, key))
        try:
            values[key] = _coerce(value, typ)
        except ValueError as exc:
            raise FormatError(path, line, f"{key}: {exc}") from None
    try:
        return cls(**values)
    except ValueError as exc:
        raise FormatError(path, None, str(exc)) from None


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = fmt(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def read_config(path) -> TrainConfig:
    return _typed_fields(TrainConfig, path, read_keyvalue(path))


def write_config(path, cfg: TrainConfig) -> None:
    atomic_write(path, format_config(cfg))


def read_synth_spec(path) -> SyntheticSpec:
    return _typed_fields(SyntheticSpec, path, read_keyvalue(path))


def format_synth_spec(spec: SyntheticSpec) -> str:
    lines = []
    for f in dataclasses.fields(spec):
        v = getattr(spec, f.name)
        text = " ".join(fmt(x) for x in v) if isinstance(v, tuple) else (fmt(v) if isinstance(v, float) else str(v))
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


# --- splits -----------------------------------------------------------------


def read_split(path) -> dict[str, np.ndarray]:
    """Lines ``labeled i j ...``, ``unlabeled ...`` and ``test ...``; missing roles are empty."""
    out = {}
    for i, raw in enumerate(_read_lines(path), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        role = toks[0]
        if role not in SPLIT_ROLES:
            raise FormatError(path, i, f"unknown role {role!r}; expected one of {SPLIT_ROLES}")
        if role in out:
            raise FormatError(path, i, f"role {role!r} listed twice")
        try:
            out[role] = np.array([int(t) for t in toks[1:]], dtype=int)
        except ValueError:
            raise FormatError(path, i, "indices must be integers") from None
    return {r: out.get(r, np.zeros(0, dtype=int)) for r in SPLIT_ROLES}


def format_split(labeled, unlabeled, test) -> str:
    rows = zip(SPLIT_ROLES, (labeled, unlabeled, test))
    return "".join(" ".join([role, *map(str, np.asarray(idx, dtype=int))]) + "\n" for role, idx in rows)


# --- datasets ---------------------------------------------------------------


@dataclasses.dataclass
class Manifest:
    """Parsed manifest: file paths resolved against the manifest's directory.

    Keys: ``labels`` (required), ``truth`` and ``split`` (optional), and one
    ``view.<name> = features <metric> <file>`` or ``view.<name> = gram <file>``
    line per view, in view order. ``version``, ``n_samples``, ``n_labels``
    and ``n_views`` are optional; when present they are checked on load.
    """

    path: Path
    labels: Path
    truth: Path | None
    split: Path | None
    views: list[tuple[str, str, str | None, Path]]
    declared: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        base = path.parent
        labels = truth = split = None
        views = []
        declared = {}
        seen = set()
        for key, value, line in read_keyvalue(path):
            if key in seen:
                raise FormatError(path, line, f"duplicate key {key!r}")
            seen.add(key)
            if key in MANIFEST_COUNTS:
                try:
                    declared[key] = int(value)
                except ValueError:
                    raise FormatError(path, line, f"{key} must be an integer") from None
                if key == "version" and declared[key] != MANIFEST_VERSION:
                    raise FormatError(path, line, f"unsupported manifest version {value}")
            elif key == "labels":
                labels = base / value
            elif key == "truth":
                truth = base / value
            elif key == "split":
                split = base / value
            elif key.startswith("view."):
                toks = value.split()
                if len(toks) == 3 and toks[0] == "features":
                    try:
                        DistanceMetric.parse(toks[1])
                    except ValueError as exc:
                        raise FormatError(path, line, str(exc)) from None
                    views.append((key[5:], "features", toks[1], base / toks[2]))
                elif len(toks) == 2 and toks[0] == "gram":
                    views.append((key[5:], "gram", None, base / toks[1]))
                else:
                    raise FormatError(path, line, "view must be 'features <metric> <file>' or 'gram <file>'")
            else:
                raise FormatError(path, line, f"unknown key {key!r}")
        if labels is None:
            raise FormatError(path, None, "missing 'labels' entry")
        return cls(path, labels, truth, split, views, declared)


def read_labels(path) -> np.ndarray:
    Y = read_matrix(path)
    bad = np.argwhere(~np.isin(Y, (-1.0, 0.0, 1.0)))
    if bad.size:
        r, c = bad[0]
        raise FormatError(path, r + 2, f"label entry in column {c} must be +1, -1 or 0, got {Y[r, c]!r}")
    return Y


def default_split(Y) -> dict[str, np.ndarray]:
    labeled = np.flatnonzero(np.any(Y != 0, axis=1))
    unlabeled = np.flatnonzero(~np.any(Y != 0, axis=1))
    return {"labeled": labeled, "unlabeled": unlabeled, "test": np.zeros(0, dtype=int)}


def load_truth(manifest: Manifest) -> np.ndarray:
    """Ground truth for evaluation: the truth file, or the labels file without one."""
    if manifest.truth is None:
        return read_labels(manifest.labels)
    return read_labels(manifest.truth)


def load_split(manifest: Manifest, Y) -> dict[str, np.ndarray]:
    return read_split(manifest.split) if manifest.split is not None else default_split(Y)


def load_dataset(path) -> Dataset:
    m = Manifest.read(path)
    Y = read_labels(m.labels)
    split = load_split(m, Y)
    N = Y.shape[0]
    for role, idx in split.items():
        if idx.size and (idx.min() < 0 or idx.max() >= N):
            raise FormatError(m.split, None, f"{role} index out of range for {N} samples")
    for i in np.concatenate([split["unlabeled"], split["test"]]):
        if np.any(Y[i] != 0):
            raise FormatError(m.labels, i + 2, f"row {i} is not labeled but has nonzero label entries")
    for i in split["labeled"]:
        if np.any(Y[i] == 0):
            raise FormatError(m.labels, i + 2, f"labeled row {i} has a zero entry")
    if not m.views:
        raise FormatError(m.path, None, "manifest lists no views")
    views = []
    for name, kind, metric, file in m.views:
        X = read_matrix(file)
        if X.shape[0] != N:
            raise FormatError(file, 1, f"view {name!r} has {X.shape[0]} rows, labels have {N}")
        if kind == "gram":
            if X.shape != (N, N):
                raise FormatError(file, 1, f"gram view {name!r} must be {N} x {N}")
            asym = np.max(np.abs(X - X.T), initial=0.0)
            if asym > 1e-8:
                raise FormatError(file, None, f"gram view {name!r} is not symmetric (max asymmetry {asym:.3g})")
        views.append(View(name=name, kind=kind, data=X, metric=DistanceMetric.parse(metric) if metric else None))
    truth = read_labels(m.truth) if m.truth is not None else None
    actual = {"n_samples": N, "n_labels": Y.shape[1], "n_views": len(views)}
    for key, value in actual.items():
        if key in m.declared and m.declared[key] != value:
            raise FormatError(m.path, None, f"manifest declares {key} = {m.declared[key]} but the files give {value}")
    try:
        return Dataset(views=views, Y=Y, truth=truth, **split)
    except ValueError as exc:
        raise FormatError(m.path, None, str(exc)) from None


def save_dataset(data: Dataset, out_dir) -> Path:
    """Write views, labels, truth and split beside a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        f"version = {MANIFEST_VERSION}",
        f"n_samples = {data.n_samples}",
        f"n_labels = {data.n_labels}",
        f"n_views = {len(data.views)}",
        "labels = labels.txt",
    ]
    write_matrix(out / "labels.txt", data.Y)
    if data.truth is not None:
        write_matrix(out / "truth.txt", data.truth)
        lines.append("truth = truth.txt")
    atomic_write(out / "split.txt", format_split(data.labeled, data.unlabeled, data.test))
    lines.append("split = split.txt")
    for v, view in enumerate(data.views):
        file = f"view{v}.txt"
        write_matrix(out / file, view.data)
        if view.kind == "gram":
            lines.append(f"view.{view.name} = gram {file}")
        else:
            lines.append(f"view.{view.name} = features {DistanceMetric.parse(view.metric).value} {file}")
    manifest = out / "manifest.txt"
    atomic_write(manifest, "\n".join(lines) + "\n")
    return manifest


# --- models -----------------------------------------------------------------


def _block(name, A) -> str:
    A = np.asarray(A, dtype=float)
    shape = A.shape if A.ndim == 2 else (A.size, 0)
    body = format_matrix(A.reshape(A.shape[0], -1) if A.ndim == 2 else A.reshape(1, -1)).split("\n", 1)[1]
    return f"matrix {name} {shape[0]} {shape[1]}\n{body}"


def format_model(model: ModelState) -> str:
    parts = [MODEL_MAGIC + "\n"]
    parts += [f"config.{line}\n" for line in format_config(model.config).splitlines()]
    parts.append(f"n_labeled = {model.n_labeled}\n")
    parts.append(f"n_views = {len(model.kernels)}\n")
    for v, k in enumerate(model.kernels):
        parts.append(f"view.{v}.kind = {k.kind}\n")
        parts.append(f"view.{v}.metric = {k.metric.value if k.metric else 'none'}\n")
        parts.append(f"view.{v}.scale = {fmt(k.scale)}\n")
        parts.append(f"view.{v}.trace = {fmt(k.trace)}\n")
    # one-dimensional arrays are stored as "rows 0" blocks holding a single line
    parts.append(_block("a", model.a))
    parts.append(_block("b", model.b))
    parts.append(_block("beta", model.beta))
    parts.append(_block("theta", model.theta))
    parts.append(_block("Q", model.Q))
    parts.append(_block("objective_trace", model.objective_trace))
    parts.append(_block("train_index", model.train_index))
    for v, k in enumerate(model.kernels):
        parts.append(_block(f"view.{v}.train", k.train))
    return "".join(parts)


def save_model(path, model: ModelState) -> None:
    atomic_write(path, format_model(model))


def load_model(path) -> ModelState:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise FormatError(path, 1, f"not a model file (expected header {MODEL_MAGIC!r})")
    scalars: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("matrix "):
            toks = line.split()
            if len(toks) != 4:
                raise FormatError(path, i + 1, "matrix header must be 'matrix name rows cols'")
            rows, cols = _parse_shape(" ".join(toks[2:]), path, i + 1)
            if cols == 0:
                arrays[toks[1]] = _parse_matrix(lines, i + 1, path, 1, rows)[0] if rows else np.zeros(0)
                i += 2 if rows else 1
            else:
                arrays[toks[1]] = _parse_matrix(lines, i + 1, path, rows, cols)
                i += 1 + rows
            continue
        if "=" not in line:
            raise FormatError(path, i + 1, "expected 'key = value' or a matrix block")
        key, value = (s.strip() for s in line.split("=", 1))
        scalars[key] = value
        i += 1

    def need(d, key):
        if key not in d:
            raise FormatError(path, None, f"missing {key!r}")
        return d[key]

    cfg_items = [(k[7:], v, 0) for k, v in scalars.items() if k.startswith("config.")]
    cfg = _typed_fields(TrainConfig, path, cfg_items)
    kernels = []
    for v in range(int(need(scalars, "n_views"))):
        metric = need(scalars, f"view.{v}.metric")
        kernels.append(
            ViewKernel(
                kind=need(scalars, f"view.{v}.kind"),
                metric=None if metric == "none" else DistanceMetric.parse(metric),
                train=need(arrays, f"view.{v}.train"),
                scale=float(need(scalars, f"view.{v}.scale")),
                trace=float(need(scalars, f"view.{v}.trace")),
            )
        )
    return ModelState(
        a=need(arrays, "a"),
        b=need(arrays, "b"),
        beta=need(arrays, "beta"),
        theta=need(arrays, "theta"),
        kernels=kernels,
        Q=need(arrays, "Q"),
        config=cfg,
        n_labeled=int(need(scalars, "n_labeled")),
        train_index=need(arrays, "train_index").astype(int),
        objective_trace=need(arrays, "objective_trace"),
    )


# --- reports ----------------------------------------------------------------


def format_report(report: dict) -> str:
    lines = []
    for key, value in report.items():
        text = str(value) if isinstance(value, (int, np.integer)) else fmt(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def read_report(path) -> dict[str, float]:
    return {k: float(v) for k, v, _ in read_keyvalue(path)}


def format_table(header, rows) -> str:
    out = [" ".join(header)]
    for row in rows:
        out.append(" ".join(fmt(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(out) + "\n"
