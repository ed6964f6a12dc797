"""Tabular ingestion: schemas, CSV loading, min-max / one-hot preprocessing, splits."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import yaml
from sklearn.preprocessing import MinMaxScaler, OneHotEncoder

log = logging.getLogger(__name__)

__all__ = [
    "ColumnSpec",
    "Schema",
    "Dataset",
    "PRESETS",
    "load_schema",
    "load_csv",
    "TabularPreprocessor",
    "preprocess",
    "prepare",
    "split",
    "split_indices",
    "make_imbalanced",
    "save_dataset",
    "load_dataset",
]

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass
class ColumnSpec:
    name: str
    kind: str
    categories: Optional[List[str]] = None


@dataclass
class Dataset:
    """Feature matrix with binary labels ``y`` and binary sensitive attribute ``s``."""

    X: np.ndarray
    y: np.ndarray
    s: np.ndarray
    columns: List[ColumnSpec] = field(default_factory=list)
    feature_names: List[str] = field(default_factory=list)
    note: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y).astype(np.int64).ravel()
        self.s = np.asarray(self.s).astype(np.int64).ravel()
        n = len(self.X)
        if len(self.y) != n or len(self.s) != n:
            raise ValueError("X, y and s must have the same number of rows")
        for name, v in (("labels", self.y), ("sensitive", self.s)):
            if v.size and not np.isin(v, (0, 1)).all():
                raise ValueError(f"{name} must be 0/1")

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def group_index(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.s == g)

    def subset(self, idx, note: Optional[str] = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.s[idx], self.columns, self.feature_names,
                       self.note if note is None else note)


# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------


@dataclass
class Schema:
    """Column kinds plus label / sensitive designations.

    ``label_positive`` and ``sensitive_group1`` list the raw values mapped to 1.
    """

    columns: Dict[str, str]
    label: str
    label_positive: List[str]
    sensitive: str
    sensitive_group1: List[str]
    na_values: List[str] = field(default_factory=lambda: ["?"])
    sensitive_threshold: Optional[float] = None
    categories: Dict[str, List[str]] = field(default_factory=dict)
    csv_options: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        cols = d.get("columns")
        if not isinstance(cols, dict) or not cols:
            raise ValueError("schema needs a non-empty 'columns' mapping of name -> kind")
        for name, kind in cols.items():
            if kind not in (CONTINUOUS, CATEGORICAL, "drop"):
                raise ValueError(f"column {name!r}: kind must be continuous, categorical or drop, got {kind!r}")
        label = d.get("label") or {}
        sens = d.get("sensitive") or {}
        if "column" not in label or "column" not in sens:
            raise ValueError("schema needs 'label.column' and 'sensitive.column'")
        return cls(
            columns=dict(cols),
            label=label["column"],
            label_positive=[str(v) for v in label.get("positive", ["1"])],
            sensitive=sens["column"],
            sensitive_group1=[str(v) for v in sens.get("group1", [])],
            sensitive_threshold=sens.get("threshold"),
            na_values=[str(v) for v in d.get("na_values", ["?"])],
            categories={k: [str(c) for c in v] for k, v in (d.get("categories") or {}).items()},
            csv_options=dict(d.get("csv") or {}),
        )

    @property
    def feature_columns(self) -> List[str]:
        skip = {self.label, self.sensitive}
        return [c for c, k in self.columns.items() if k != "drop" and c not in skip]

    @property
    def required_columns(self) -> List[str]:
        return list(dict.fromkeys(list(self.columns) + [self.label, self.sensitive]))


_ADULT = {
    "columns": {
        "age": CONTINUOUS, "workclass": CATEGORICAL, "fnlwgt": "drop", "education": CATEGORICAL,
        "education-num": CONTINUOUS, "marital-status": CATEGORICAL, "occupation": CATEGORICAL,
        "relationship": CATEGORICAL, "race": CATEGORICAL, "sex": "drop", "capital-gain": CONTINUOUS,
        "capital-loss": CONTINUOUS, "hours-per-week": CONTINUOUS, "native-country": CATEGORICAL,
        "income": "drop",
    },
    "label": {"column": "income", "positive": [">50K", ">50K."]},
    "sensitive": {"column": "sex", "group1": ["Male"]},
    "na_values": ["?"],
}

_GERMAN = {
    "columns": {
        "status": CATEGORICAL, "month": CONTINUOUS, "credit_history": CATEGORICAL, "purpose": CATEGORICAL,
        "credit_amount": CONTINUOUS, "savings": CATEGORICAL, "employment": CATEGORICAL,
        "investment_as_income_percentage": CONTINUOUS, "personal_status": "drop", "other_debtors": CATEGORICAL,
        "residence_since": CONTINUOUS, "property": CATEGORICAL, "age": CONTINUOUS,
        "installment_plans": CATEGORICAL, "housing": CATEGORICAL, "number_of_credits": CONTINUOUS,
        "skill_level": CATEGORICAL, "people_liable_for": CONTINUOUS, "telephone": CATEGORICAL,
        "foreign_worker": CATEGORICAL, "credit": "drop",
    },
    "label": {"column": "credit", "positive": ["1"]},
    "sensitive": {"column": "personal_status", "group1": ["A91", "A93", "A94"]},
}

_BANK = {
    "columns": {
        "age": CONTINUOUS, "job": CATEGORICAL, "marital": CATEGORICAL, "education": CATEGORICAL,
        "default": CATEGORICAL, "housing": CATEGORICAL, "loan": CATEGORICAL, "contact": CATEGORICAL,
        "month": CATEGORICAL, "day_of_week": CATEGORICAL, "duration": CONTINUOUS, "campaign": CONTINUOUS,
        "pdays": CONTINUOUS, "previous": CONTINUOUS, "poutcome": CATEGORICAL, "emp.var.rate": CONTINUOUS,
        "cons.price.idx": CONTINUOUS, "cons.conf.idx": CONTINUOUS, "euribor3m": CONTINUOUS,
        "nr.employed": CONTINUOUS, "y": "drop",
    },
    "label": {"column": "y", "positive": ["yes"]},
    "sensitive": {"column": "age", "threshold": 25},
    "na_values": ["unknown"],
    "csv": {"sep": ";"},
}

_DUTCH = {
    "columns": {
        "sex": "drop", "age": CATEGORICAL, "household_position": CATEGORICAL, "household_size": CATEGORICAL,
        "prev_residence_place": CATEGORICAL, "citizenship": CATEGORICAL, "country_birth": CATEGORICAL,
        "edu_level": CATEGORICAL, "economic_status": CATEGORICAL, "cur_eco_activity": CATEGORICAL,
        "Marital_status": CATEGORICAL, "occupation": "drop",
    },
    "label": {"column": "occupation", "positive": ["1", "5_4_9"]},
    "sensitive": {"column": "sex", "group1": ["1", "male"]},
}

PRESETS = {"adult": _ADULT, "german": _GERMAN, "bank": _BANK, "dutch": _DUTCH}

# loss / matching batch sizes used with each preset
PRESET_BATCH_SIZES = {"adult": 1024, "german": 200, "dutch": 1024, "bank": 512}


def load_schema(source) -> Schema:
    """Schema from a preset name, a dict, or a YAML/JSON file."""
    if isinstance(source, Schema):
        return source
    if isinstance(source, dict):
        return Schema.from_dict(source)
    if str(source) in PRESETS:
        return Schema.from_dict(PRESETS[str(source)])
    text = Path(source).read_text(encoding="utf-8")
    return Schema.from_dict(yaml.safe_load(text))


# ---------------------------------------------------------------------------
# loading and preprocessing
# ---------------------------------------------------------------------------


def load_csv(path, schema) -> pd.DataFrame:
    """Read an RFC-4180 CSV with a header row and type its columns per ``schema``.

    Rows containing any NA marker are dropped (count logged). Continuous
    columns must parse as numbers; the first bad cell is reported by row and
    column.
    """
    schema = load_schema(schema)
    opts = {"sep": ",", **schema.csv_options}
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, **opts)
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in schema.required_columns if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    df = df[schema.required_columns].apply(lambda col: col.str.strip())
    na = df.isin(schema.na_values) | (df == "")
    bad_rows = na.any(axis=1)
    if bad_rows.any():
        log.info("dropping %d row(s) with missing values from %s", int(bad_rows.sum()), path)
        df = df.loc[~bad_rows].reset_index(drop=True)
    numeric = [c for c, k in schema.columns.items() if k == CONTINUOUS]
    if schema.sensitive_threshold is not None:
        numeric.append(schema.sensitive)
    for col in numeric:
        values = pd.to_numeric(df[col], errors="coerce")
        if values.isna().any():
            row = int(np.flatnonzero(values.isna().to_numpy())[0])
            raise ValueError(f"{path}: unparseable number {df[col].iloc[row]!r} at row {row + 1}, column {col!r}")
        df[col] = values.astype(float)
    return df


class TabularPreprocessor:
    """Min-max scales continuous columns and one-hot encodes categorical ones.

    Scaling statistics come from the rows passed to :meth:`fit` only.
    Category lists come from the schema when given, else from ``categories``
    passed at construction, else from the fitted rows. A category never seen
    at fit time is an error at transform time.
    """

    def __init__(self, schema, categories: Optional[Dict[str, List[str]]] = None):
        self.schema = load_schema(schema)
        self.categories = categories

    def fit(self, raw: pd.DataFrame) -> "TabularPreprocessor":
        sch = self.schema
        self.continuous_ = [c for c in sch.feature_columns if sch.columns[c] == CONTINUOUS]
        self.categorical_ = [c for c in sch.feature_columns if sch.columns[c] == CATEGORICAL]
        cats = []
        for c in self.categorical_:
            if c in sch.categories:
                cats.append(list(sch.categories[c]))
            elif self.categories and c in self.categories:
                cats.append(list(self.categories[c]))
            else:
                cats.append(sorted(raw[c].astype(str).unique()))
        self.scaler_ = MinMaxScaler().fit(raw[self.continuous_].to_numpy(float)) if self.continuous_ else None
        self.encoder_ = (
            OneHotEncoder(categories=cats, handle_unknown="error", sparse_output=False).fit(
                raw[self.categorical_].astype(str).to_numpy()
            )
            if self.categorical_
            else None
        )
        return self

    @property
    def columns_(self) -> List[ColumnSpec]:
        specs = [ColumnSpec(c, CONTINUOUS) for c in self.continuous_]
        if self.encoder_ is not None:
            specs += [ColumnSpec(c, CATEGORICAL, list(map(str, cats)))
                      for c, cats in zip(self.categorical_, self.encoder_.categories_)]
        return specs

    @property
    def feature_names_(self) -> List[str]:
        names = list(self.continuous_)
        for spec in self.columns_[len(self.continuous_):]:
            names += [f"{spec.name}={v}" for v in spec.categories]
        return names

    def transform(self, raw: pd.DataFrame, note: str = "") -> Dataset:
        sch = self.schema
        blocks = []
        if self.scaler_ is not None:
            cont = raw[self.continuous_].to_numpy(float)
            # degenerate range: MinMaxScaler divides by 1, so constant columns map to 0
            blocks.append(self.scaler_.transform(cont))
        if self.encoder_ is not None:
            cat = raw[self.categorical_].astype(str).to_numpy()
            for k, (col, known) in enumerate(zip(self.categorical_, self.encoder_.categories_)):
                unseen = sorted(set(cat[:, k]) - set(map(str, known)))
                if unseen:
                    raise ValueError(f"column {col!r}: unseen categor{'y' if len(unseen) == 1 else 'ies'} {unseen}")
            blocks.append(self.encoder_.transform(cat))
        X = np.hstack(blocks) if blocks else np.zeros((len(raw), 0))
        y = raw[sch.label].astype(str).isin(sch.label_positive).to_numpy().astype(int)
        if sch.sensitive_threshold is not None:
            s = (raw[sch.sensitive].astype(float) >= float(sch.sensitive_threshold)).to_numpy().astype(int)
        else:
            s = raw[sch.sensitive].astype(str).isin(sch.sensitive_group1).to_numpy().astype(int)
        return Dataset(X, y, s, self.columns_, self.feature_names_, note)


def preprocess(raw: pd.DataFrame, schema, fit_rows=None) -> Dataset:
    """Fit on ``raw`` (or only its ``fit_rows``) and transform all of ``raw``."""
    fit_frame = raw if fit_rows is None else raw.iloc[np.asarray(fit_rows)]
    cats = {c: sorted(raw[c].astype(str).unique()) for c, k in load_schema(schema).columns.items() if k == CATEGORICAL}
    return TabularPreprocessor(schema, cats).fit(fit_frame).transform(raw)


def split_indices(n: int, ratio: float = 0.8, seed=0):
    """Seeded shuffle, then the first ``floor(n * ratio)`` rows go to train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * ratio))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(data, ratio: float = 0.8, seed=0):
    """Split a :class:`Dataset` (or DataFrame) into ``(train, test)``."""
    train_idx, test_idx = split_indices(len(data), ratio, seed) if isinstance(data, pd.DataFrame) else split_indices(data.n, ratio, seed)
    if isinstance(data, pd.DataFrame):
        return data.iloc[train_idx].reset_index(drop=True), data.iloc[test_idx].reset_index(drop=True)
    return data.subset(train_idx), data.subset(test_idx)


def prepare(path, schema, ratio: float = 0.8, seed=0):
    """Load a CSV, split it, fit preprocessing on train rows, and transform both splits.

    Category vocabularies are taken from the whole file so rare categories
    landing only in the test split are still encodable; scaling uses train
    rows only.
    """
    schema = load_schema(schema)
    raw = load_csv(path, schema)
    cats = {c: sorted(raw[c].astype(str).unique()) for c in schema.feature_columns if schema.columns[c] == CATEGORICAL}
    train_raw, test_raw = split(raw, ratio, seed)
    prep = TabularPreprocessor(schema, cats).fit(train_raw)
    note = f"{Path(path).name} seed={seed} ratio={ratio}"
    return prep.transform(train_raw, note + " train"), prep.transform(test_raw, note + " test")


def make_imbalanced(train: Dataset, minority_frac: float = 0.05, seed=0) -> Dataset:
    """Keep all of group 1 and subsample group 0 down to a ``minority_frac`` share."""
    if not 0.0 < minority_frac < 1.0:
        raise ValueError("minority_frac must lie in (0, 1)")
    idx0, idx1 = train.group_index(0), train.group_index(1)
    k = int(round(minority_frac * len(idx1) / (1.0 - minority_frac)))
    k = max(1, min(k, len(idx0)))
    keep0 = np.random.default_rng(seed).choice(idx0, size=k, replace=False)
    return train.subset(np.sort(np.concatenate([keep0, idx1])), note=f"{train.note} imbalanced({minority_frac})")


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def save_dataset(path, data: Dataset) -> None:
    """Write a compressed ``.npz`` cache of a preprocessed dataset."""
    meta = {
        "columns": [vars(c) for c in data.columns],
        "feature_names": data.feature_names,
        "note": data.note,
    }
    with open(path, "wb") as fh:
        np.savez_compressed(fh, X=data.X, y=data.y, s=data.s, meta=np.array(json.dumps(meta)))


def load_dataset(path) -> Dataset:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        return Dataset(z["X"], z["y"], z["s"], [ColumnSpec(**c) for c in meta["columns"]],
                       meta["feature_names"], meta["note"])
