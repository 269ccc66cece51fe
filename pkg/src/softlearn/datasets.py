"""Seeded synthetic dataset generators plus CSV ingestion.

Every generator is a pure function of its ``SyntheticSpec`` (seed included):
the same spec yields bit-identical arrays on every platform and under any
parallel schedule, because all randomness flows through
``numpy.random.SeedSequence`` -> PCG64 streams derived from the spec seed.

Generator roster: friedman1/2/3, moons, circles, hastie, xor_manifold,
gaussian_classes, imbalanced_binary, sparse_linear, and a label_noise
wrapper around any classification generator. Small-n ("tiny") variants are
just specs with small n.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .core import (
    ConfigError,
    Dataset,
    DataValidationError,
    SoftlearnError,
    TaskKind,
    TaskMismatchError,
    make_classification_dataset,
    make_regression_dataset,
)

CLASSIFICATION_GENERATORS = (
    "moons",
    "circles",
    "hastie",
    "xor_manifold",
    "gaussian_classes",
    "imbalanced_binary",
    "label_noise",
)
REGRESSION_GENERATORS = ("friedman1", "friedman2", "friedman3", "sparse_linear")


class CsvParseError(SoftlearnError):
    """Malformed CSV input; message carries row and column context."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Fully deterministic description of one synthetic dataset."""

    generator: str
    n: int
    d: int = 0
    n_classes: int = 2
    noise: float = 0.0
    seed: int = 0
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in CLASSIFICATION_GENERATORS + REGRESSION_GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if not self.name:
            object.__setattr__(self, "name", f"{self.generator}_n{self.n}_s{self.seed}")

    @property
    def task(self) -> TaskKind:
        if self.generator in REGRESSION_GENERATORS:
            return TaskKind.REGRESSION
        return TaskKind.CLASSIFICATION

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "n": self.n,
            "d": self.d,
            "n_classes": self.n_classes,
            "noise": self.noise,
            "seed": self.seed,
            "name": self.name,
            "params": dict(self.params),
        }

    @staticmethod
    def from_dict(record: dict) -> "SyntheticSpec":
        known = {"generator", "n", "d", "n_classes", "noise", "seed", "name", "params"}
        unknown = set(record) - known
        if unknown:
            raise ConfigError(f"unknown SyntheticSpec fields: {sorted(unknown)}")
        if "generator" not in record or "n" not in record:
            raise ConfigError("a SyntheticSpec record needs at least 'generator' and 'n'")
        return SyntheticSpec(
            generator=record["generator"],
            n=int(record["n"]),
            d=int(record.get("d", 0)),
            n_classes=int(record.get("n_classes", 2)),
            noise=float(record.get("noise", 0.0)),
            seed=int(record.get("seed", 0)),
            name=record.get("name", ""),
            params=dict(record.get("params", {})),
        )


def _rng(seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key)))


def _embed(points: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    # Append standard-normal distractor features until the matrix has d columns.
    base = points.shape[1]
    if d <= base:
        return points
    pad = rng.normal(size=(points.shape[0], d - base))
    return np.hstack([points, pad])


def _gen_friedman1(spec: SyntheticSpec, rng: np.random.Generator):
    d = spec.d if spec.d >= 5 else 10
    x = rng.uniform(0.0, 1.0, size=(spec.n, d))
    y = friedman1_formula(x)
    if spec.noise > 0:
        y = y + spec.noise * rng.normal(size=spec.n)
    return x, y


def friedman1_formula(x: np.ndarray) -> np.ndarray:
    """Noiseless friedman1 response; only the first five columns matter."""
    return (
        10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
        + 20.0 * (x[:, 2] - 0.5) ** 2
        + 10.0 * x[:, 3]
        + 5.0 * x[:, 4]
    )


def _friedman23_inputs(n: int, rng: np.random.Generator) -> np.ndarray:
    x = np.empty((n, 4))
    x[:, 0] = rng.uniform(0.0, 100.0, size=n)
    x[:, 1] = rng.uniform(40.0 * np.pi, 560.0 * np.pi, size=n)
    x[:, 2] = rng.uniform(0.0, 1.0, size=n)
    x[:, 3] = rng.uniform(1.0, 11.0, size=n)
    return x


def _gen_friedman2(spec: SyntheticSpec, rng: np.random.Generator):
    x = _friedman23_inputs(spec.n, rng)
    y = np.sqrt(x[:, 0] ** 2 + (x[:, 1] * x[:, 2] - 1.0 / (x[:, 1] * x[:, 3])) ** 2)
    if spec.noise > 0:
        y = y + spec.noise * rng.normal(size=spec.n)
    return x, y


def _gen_friedman3(spec: SyntheticSpec, rng: np.random.Generator):
    x = _friedman23_inputs(spec.n, rng)
    y = np.arctan((x[:, 1] * x[:, 2] - 1.0 / (x[:, 1] * x[:, 3])) / x[:, 0])
    if spec.noise > 0:
        y = y + spec.noise * rng.normal(size=spec.n)
    return x, y


def _gen_sparse_linear(spec: SyntheticSpec, rng: np.random.Generator):
    d = spec.d if spec.d >= 1 else 200
    s = int(spec.params.get("sparsity", 10))
    if not 1 <= s <= d:
        raise ConfigError(f"sparsity must lie in [1, {d}]")
    x = rng.normal(size=(spec.n, d))
    w = np.zeros(d)
    support = rng.choice(d, size=s, replace=False)
    w[support] = rng.normal(size=s)
    y = x @ w
    if spec.noise > 0:
        y = y + spec.noise * rng.normal(size=spec.n)
    return x, y


def _gen_moons(spec: SyntheticSpec, rng: np.random.Generator):
    # Two interleaved half circles: class 0 on the unit circle around the
    # origin, class 1 on the unit circle around (1, 0.5), both upper arcs.
    n0 = spec.n - spec.n // 2
    n1 = spec.n // 2
    t0 = rng.uniform(0.0, np.pi, size=n0)
    t1 = rng.uniform(0.0, np.pi, size=n1)
    pts0 = np.column_stack([np.cos(t0), np.sin(t0)])
    pts1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    pts = np.vstack([pts0, pts1])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    if spec.noise > 0:
        pts = pts + spec.noise * rng.normal(size=pts.shape)
    x = _embed(pts, max(spec.d, 2), rng)
    return x, y


def _gen_circles(spec: SyntheticSpec, rng: np.random.Generator):
    factor = float(spec.params.get("factor", 0.5))
    if not 0 < factor < 1:
        raise ConfigError("factor must lie in (0, 1)")
    n0 = spec.n - spec.n // 2
    n1 = spec.n // 2
    t0 = rng.uniform(0.0, 2.0 * np.pi, size=n0)
    t1 = rng.uniform(0.0, 2.0 * np.pi, size=n1)
    pts = np.vstack(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            factor * np.column_stack([np.cos(t1), np.sin(t1)]),
        ]
    )
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    if spec.noise > 0:
        pts = pts + spec.noise * rng.normal(size=pts.shape)
    x = _embed(pts, max(spec.d, 2), rng)
    return x, y


def _gen_hastie(spec: SyntheticSpec, rng: np.random.Generator):
    d = spec.d if spec.d >= 1 else 10
    x = rng.normal(size=(spec.n, d))
    # Median of chi-square with d dof splits the classes 50:50 (9.34 at d=10).
    y = (np.sum(x * x, axis=1) > chi2.median(d)).astype(int)
    return x, y


def _gen_xor_manifold(spec: SyntheticSpec, rng: np.random.Generator):
    d = max(spec.d, 2)
    spread = spec.noise if spec.noise > 0 else 0.5
    y = np.arange(spec.n) % 2
    # Class 0 lives in the (+,+)/(-,-) quadrant pair, class 1 in the other.
    flip = rng.integers(0, 2, size=spec.n) * 2 - 1
    s1 = flip
    s2 = np.where(y == 0, flip, -flip)
    centers = np.column_stack([s1.astype(float), s2.astype(float)])
    pts = centers + spread * rng.normal(size=(spec.n, 2))
    wide = np.hstack([pts, np.zeros((spec.n, d - 2))])
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    x = wide @ q.T
    perm = rng.permutation(spec.n)
    return x[perm], y[perm]


def _gen_gaussian_classes(spec: SyntheticSpec, rng: np.random.Generator):
    c = spec.n_classes
    if c < 2:
        raise ConfigError("gaussian_classes needs n_classes >= 2")
    if spec.n < c:
        raise ConfigError("n must be at least n_classes")
    d = spec.d if spec.d >= 1 else 2
    separation = float(spec.params.get("separation", 2.0))
    sigma = spec.noise if spec.noise > 0 else 1.0
    centers = separation * rng.normal(size=(c, d))
    counts = np.full(c, spec.n // c)
    counts[: spec.n % c] += 1
    y = np.repeat(np.arange(c), counts)
    x = centers[y] + sigma * rng.normal(size=(spec.n, d))
    perm = rng.permutation(spec.n)
    return x[perm], y[perm]


def _gen_imbalanced_binary(spec: SyntheticSpec, rng: np.random.Generator):
    prior = float(spec.params.get("minority_fraction", 0.03))
    if not 0 < prior < 0.5:
        raise ConfigError("minority_fraction must lie in (0, 0.5)")
    d = spec.d if spec.d >= 1 else 2
    separation = float(spec.params.get("separation", 2.5))
    sigma = spec.noise if spec.noise > 0 else 1.0
    n1 = max(1, int(round(prior * spec.n)))
    n0 = spec.n - n1
    shift = separation / np.sqrt(d)
    x0 = sigma * rng.normal(size=(n0, d))
    x1 = shift + sigma * rng.normal(size=(n1, d))
    x = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    perm = rng.permutation(spec.n)
    return x[perm], y[perm]


_GENERATORS = {
    "friedman1": _gen_friedman1,
    "friedman2": _gen_friedman2,
    "friedman3": _gen_friedman3,
    "sparse_linear": _gen_sparse_linear,
    "moons": _gen_moons,
    "circles": _gen_circles,
    "hastie": _gen_hastie,
    "xor_manifold": _gen_xor_manifold,
    "gaussian_classes": _gen_gaussian_classes,
    "imbalanced_binary": _gen_imbalanced_binary,
}


def generate(spec: SyntheticSpec) -> Dataset:
    """Materialize a spec into a Dataset, deterministically under its seed."""
    if spec.generator == "label_noise":
        base_record = spec.params.get("base")
        if base_record is None:
            raise ConfigError("label_noise spec needs params['base']")
        p = float(spec.params.get("p", 0.3))
        base_spec = SyntheticSpec.from_dict(dict(base_record))
        base = generate(base_spec)
        noisy = inject_label_noise(base, p, seed=spec.seed)
        return Dataset(noisy.features, noisy.labels, name=spec.name, extra=dict(noisy.extra))

    gen = _GENERATORS[spec.generator]
    intended = spec.n_classes if spec.generator == "gaussian_classes" else 2
    # A degenerate draw (some class absent) retries on a spawned stream so
    # the class-count contract holds without breaking determinism.
    for attempt in range(100):
        rng = _rng(spec.seed, attempt) if attempt else _rng(spec.seed)
        x, y = gen(spec, rng)
        if spec.task is TaskKind.REGRESSION:
            return make_regression_dataset(x, y, name=spec.name)
        y = np.asarray(y, dtype=np.int64)
        if np.unique(y).size == intended:
            return make_classification_dataset(x, y, n_classes=intended, name=spec.name)
    raise DataValidationError(
        f"generator {spec.generator!r} could not produce every class in 100 attempts"
    )


def inject_label_noise(data: Dataset, p: float, seed: int) -> Dataset:
    """Flip each label with probability p to a uniformly random other class."""
    if data.task is not TaskKind.CLASSIFICATION:
        raise TaskMismatchError("label noise applies to classification only")
    if not 0 <= p < 1:
        raise ConfigError("p must lie in [0, 1)")
    c = data.n_classes
    y = None
    for attempt in range(100):
        rng = _rng(seed, 0xF11B, attempt)
        y = data.y().copy()
        flip = rng.random(data.n_samples) < p
        # Uniform over the other C-1 classes via a shifted draw.
        offsets = rng.integers(1, c, size=data.n_samples)
        flipped = (y + offsets) % c
        y[flip] = flipped[flip]
        if np.unique(y).size == c:
            break
    out = make_classification_dataset(data.features, y, n_classes=c, name=data.name)
    out.extra.update(data.extra)
    out.extra["label_noise_p"] = p
    return out


@dataclass(frozen=True)
class CsvSchema:
    """How to read a CSV file: which column is the target, and the task."""

    target: str
    task: TaskKind
    label_map: dict | None = None


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a UTF-8 comma-separated file with a header row into a Dataset.

    Classification labels are mapped to 0-based integers via the sorted
    unique label strings (or ``schema.label_map`` when given); the mapping
    is recorded in ``Dataset.extra['label_encoding']``.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise CsvParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if schema.target not in header:
        raise CsvParseError(f"{path}: target column {schema.target!r} not in header {header}")
    t_idx = header.index(schema.target)
    feat_names = [h for i, h in enumerate(header) if i != t_idx]
    feats = []
    raw_labels = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvParseError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        vals = []
        for i, cell in enumerate(row):
            if i == t_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise CsvParseError(
                    f"{path}: non-numeric cell at row {r}, column {header[i]!r}: {cell!r}"
                ) from None
        feats.append(vals)
    if not feats:
        raise CsvParseError(f"{path}: no data rows")
    x = np.asarray(feats, dtype=np.float64)

    if schema.task is TaskKind.CLASSIFICATION:
        if schema.label_map is not None:
            mapping = dict(schema.label_map)
            missing = sorted(set(raw_labels) - set(mapping))
            if missing:
                raise CsvParseError(f"{path}: labels {missing} absent from schema.label_map")
        else:
            mapping = {lab: i for i, lab in enumerate(sorted(set(raw_labels)))}
        y = np.array([mapping[lab] for lab in raw_labels], dtype=np.int64)
        data = make_classification_dataset(x, y, n_classes=len(mapping))
        data.extra["label_encoding"] = mapping
        data.extra["feature_names"] = feat_names
        return data
    try:
        y = np.array([float(lab) for lab in raw_labels])
    except ValueError:
        raise CsvParseError(f"{path}: non-numeric regression target") from None
    data = make_regression_dataset(x, y)
    data.extra["feature_names"] = feat_names
    return data


def write_csv(data: Dataset, path, target: str = "target") -> None:
    """Inverse of load_csv: header row, '.' decimals, no quoting of numbers."""
    names = data.extra.get("feature_names") or [f"x{j}" for j in range(data.n_features)]
    encoding = data.extra.get("label_encoding")
    decode = {v: k for k, v in encoding.items()} if encoding else None
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [target])
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.features[i]]
            if data.task is TaskKind.CLASSIFICATION:
                lab = int(data.y()[i])
                row.append(decode[lab] if decode else str(lab))
            else:
                row.append(repr(float(data.y()[i])))
            writer.writerow(row)


def load_manifest(path) -> list[SyntheticSpec]:
    """Read a JSON list of SyntheticSpec records."""
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ConfigError("a manifest must be a JSON list of spec records")
    return [SyntheticSpec.from_dict(r) for r in records]


def save_manifest(specs: list[SyntheticSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict() for s in specs], fh, indent=2, sort_keys=True)
        fh.write("\n")


def default_manifest() -> list[SyntheticSpec]:
    """Twelve desk-scale benchmark slots (n <= 1000) spanning every family."""
    return [
        SyntheticSpec("moons", n=480, d=2, noise=0.25, seed=101, name="moons_noisy"),
        SyntheticSpec("circles", n=480, d=8, noise=0.12, seed=102, name="circles_embedded"),
        SyntheticSpec("hastie", n=600, d=10, seed=103, name="hastie_quadratic"),
        SyntheticSpec("xor_manifold", n=480, d=12, noise=0.45, seed=104, name="xor_rotated"),
        SyntheticSpec(
            "gaussian_classes", n=600, d=12, n_classes=8, noise=1.0, seed=105,
            name="gaussians_crowded", params={"separation": 1.7},
        ),
        SyntheticSpec(
            "imbalanced_binary", n=900, d=10, noise=1.0, seed=106,
            name="imbalanced_3pct", params={"minority_fraction": 0.03, "separation": 3.5},
        ),
        SyntheticSpec(
            "label_noise", n=480, seed=107, name="moons_label_noise",
            params={"p": 0.3, "base": {"generator": "moons", "n": 480, "d": 2,
                                       "noise": 0.15, "seed": 1070}},
        ),
        SyntheticSpec(
            "gaussian_classes", n=100, d=5, n_classes=3, noise=1.0, seed=108,
            name="tiny_gaussians", params={"separation": 2.4},
        ),
        SyntheticSpec("friedman1", n=480, d=10, noise=1.0, seed=109, name="friedman1_mid"),
        SyntheticSpec("friedman2", n=480, d=4, noise=125.0, seed=110, name="friedman2_rational"),
        SyntheticSpec("friedman3", n=480, d=4, noise=0.1, seed=111, name="friedman3_arctan"),
        SyntheticSpec(
            "sparse_linear", n=400, d=60, noise=0.5, seed=112,
            name="sparse_linear_wide", params={"sparsity": 8},
        ),
    ]


def full_manifest() -> list[SyntheticSpec]:
    """Twenty-eight slots mirroring the benchmark families at full size.

    Several entries exceed n=5000-level work once inner cross-validation
    multiplies the fits; treat a run over this manifest as slow.
    """
    specs = list(default_manifest())
    specs += [
        SyntheticSpec("moons", n=2400, d=2, noise=0.2, seed=201, name="moons_large"),
        SyntheticSpec("circles", n=2400, d=2, noise=0.08, seed=202, name="circles_large"),
        SyntheticSpec("hastie", n=4000, d=10, seed=203, name="hastie_large"),
        SyntheticSpec("xor_manifold", n=2000, d=20, noise=0.5, seed=204, name="xor_rotated_20d"),
        SyntheticSpec(
            "gaussian_classes", n=3000, d=20, n_classes=8, noise=1.0, seed=205,
            name="gaussians_8way", params={"separation": 1.5},
        ),
        SyntheticSpec(
            "gaussian_classes", n=2000, d=10, n_classes=4, noise=1.0, seed=206,
            name="gaussians_4way", params={"separation": 2.0},
        ),
        SyntheticSpec(
            "gaussian_classes", n=1500, d=30, n_classes=5, noise=1.0, seed=207,
            name="gaussians_30d", params={"separation": 1.8},
        ),
        SyntheticSpec(
            "imbalanced_binary", n=4000, d=10, noise=1.0, seed=208,
            name="imbalanced_large", params={"minority_fraction": 0.03, "separation": 3.0},
        ),
        SyntheticSpec(
            "label_noise", n=2000, seed=209, name="gaussians_label_noise",
            params={"p": 0.3, "base": {"generator": "gaussian_classes", "n": 2000, "d": 8,
                                       "n_classes": 3, "noise": 1.0, "seed": 2090,
                                       "params": {"separation": 2.2}}},
        ),
        SyntheticSpec(
            "gaussian_classes", n=100, d=10, n_classes=2, noise=1.0, seed=210,
            name="tiny_2way", params={"separation": 2.0},
        ),
        SyntheticSpec("moons", n=100, d=2, noise=0.25, seed=211, name="tiny_moons"),
        SyntheticSpec("friedman1", n=2000, d=10, noise=1.0, seed=212, name="friedman1_large"),
        SyntheticSpec("friedman1", n=500, d=25, noise=5.0, seed=213, name="friedman1_noisy"),
        SyntheticSpec("friedman2", n=2000, d=4, noise=125.0, seed=214, name="friedman2_large"),
        SyntheticSpec("friedman3", n=2000, d=4, noise=0.1, seed=215, name="friedman3_large"),
        SyntheticSpec(
            "sparse_linear", n=1000, d=200, noise=0.5, seed=216,
            name="sparse_linear_200d", params={"sparsity": 10},
        ),
    ]
    return specs
