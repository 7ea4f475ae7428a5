"""Random-intercept formulas and the indicator design matrices they imply.

Only models of the form ``y ~ (1|f1) + (1|f2) + (1|f1:f2)`` are handled.
Levels of each term are numbered in order of first appearance.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import MixedModelData, ValidationError

_NAME = re.compile(r"[A-Za-z_.][A-Za-z0-9_.]*")


class FormulaSyntaxError(ValidationError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ModelSpec:
    response_name: str
    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValidationError("a model needs at least one random term")
        if len(set(terms)) != len(terms):
            raise ValidationError(f"duplicate random terms in {terms}")
        object.__setattr__(self, "terms", terms)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def __str__(self):
        return self.response_name + "~" + "+".join(f"(1|{t})" for t in self.terms)


class _Cursor:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char):
        if self.peek() != char:
            found = self.peek() or "end of input"
            raise FormulaSyntaxError(f"expected {char!r}, found {found!r}", self._offset())
        self.pos += 1

    def name(self):
        self.skip_ws()
        m = _NAME.match(self.text, self.pos)
        if not m:
            raise FormulaSyntaxError("expected a variable name", self._offset())
        self.pos = m.end()
        return m.group(0)

    def _offset(self):
        return len(self.text[: self.pos].encode("utf-8"))


def parse_formula(text: str) -> ModelSpec:
    """Parse ``resp ~ (1|term) + ...`` where a term is ``name`` or ``name:name``.

    >>> parse_formula("y_ijk~(1|a)+(1|b)+(1|a:b)").terms
    ('a', 'b', 'a:b')
    """
    cur = _Cursor(text)
    response = cur.name()
    cur.expect("~")
    terms = []
    while True:
        cur.expect("(")
        start = cur.pos
        cur.skip_ws()
        if cur.text.startswith("1", cur.pos) and cur.text[cur.pos + 1 :].lstrip().startswith("|"):
            cur.pos += 1
            cur.expect("|")
        else:
            close = cur.text.find(")", start)
            if "|" in cur.text[start : close if close >= 0 else None]:
                offset = len(cur.text[:start].encode("utf-8"))
                raise FormulaSyntaxError("only random intercepts supported", offset)
            raise FormulaSyntaxError("expected '1|' after '('", cur._offset())
        term = cur.name()
        if cur.peek() == ":":
            cur.pos += 1
            term = f"{term}:{cur.name()}"
        cur.expect(")")
        terms.append(term)
        nxt = cur.peek()
        if nxt == "":
            break
        cur.expect("+")
    try:
        return ModelSpec(response, tuple(terms))
    except ValidationError as exc:
        raise FormulaSyntaxError(str(exc), cur._offset()) from None


def _indicator(codes, n_levels):
    z = np.zeros((codes.size, n_levels))
    z[np.arange(codes.size), codes] = 1.0
    return z


@dataclass(frozen=True)
class DesignMatrices:
    """Per-term 0/1 matrices ``Z_c`` (rows = observations, one 1 per row).

    The residual term is implicit: it is always the identity of size
    ``n_rows``.
    """

    names: tuple
    matrices: tuple
    levels: tuple | None = None

    def __post_init__(self):
        names = tuple(self.names)
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if len(names) != len(mats) or not names:
            raise ValidationError("need one matrix per term and at least one term")
        rows = {m.shape[0] for m in mats}
        if len(rows) != 1 or any(m.ndim != 2 for m in mats):
            raise ValidationError("all design matrices need the same number of rows")
        for name, m in zip(names, mats):
            if m.shape[0] < 1 or m.shape[1] < 1:
                raise ValidationError(f"design matrix {name!r} is empty")
            if not np.all((m == 0) | (m == 1)):
                raise ValidationError(f"design matrix {name!r} must contain only 0/1")
            if not np.all(m.sum(axis=1) == 1):
                raise ValidationError(f"every row of design matrix {name!r} needs exactly one 1")
            m.flags.writeable = False
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_rows(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def n_levels(self) -> tuple:
        return tuple(m.shape[1] for m in self.matrices)

    @property
    def residual(self) -> np.ndarray:
        return np.eye(self.n_rows)

    def __getitem__(self, name) -> np.ndarray:
        return self.matrices[self.names.index(name)]

    def kernels(self) -> np.ndarray:
        """Stack of ``Z_c Z_c^T`` plus the identity, shape (C+1, n, n)."""
        ks = [m @ m.T for m in self.matrices]
        ks.append(np.eye(self.n_rows))
        return np.stack(ks)

    def covariance(self, sigma2) -> np.ndarray:
        sigma2 = np.asarray(sigma2, dtype=float)
        return np.tensordot(sigma2, self.kernels(), axes=1)

    def codes(self) -> tuple:
        """Level index of every row, per term."""
        return tuple(m.argmax(axis=1) for m in self.matrices)

    def aligned(self, names: Sequence[str]) -> "DesignMatrices":
        """Reorder the terms to ``names``; every name must be present."""
        names = tuple(names)
        if set(names) != set(self.names) or len(names) != len(self.names):
            raise ValidationError(
                f"future design terms {self.names} do not match model terms {names}"
            )
        idx = [self.names.index(n) for n in names]
        levels = None if self.levels is None else tuple(self.levels[i] for i in idx)
        return DesignMatrices(names, tuple(self.matrices[i] for i in idx), levels)


def build_design_matrices(data: MixedModelData, spec: ModelSpec) -> DesignMatrices:
    mats, levels = [], []
    for term in spec.terms:
        parts = term.split(":")
        for p in parts:
            if p not in data.factors:
                raise ValidationError(f"unknown factor {p!r} in term {term!r}")
        if len(parts) > 1:
            for p in parts:
                if any(":" in v for v in data.factors[p]):
                    raise ValidationError(
                        f"factor {p!r} has labels containing ':', cannot form {term!r}"
                    )
        labels = [":".join(vals) for vals in zip(*(data.factors[p] for p in parts))]
        order = {}
        for lab in labels:
            order.setdefault(lab, len(order))
        codes = np.array([order[lab] for lab in labels])
        mats.append(_indicator(codes, len(order)))
        levels.append(tuple(order))
    return DesignMatrices(spec.terms, tuple(mats), tuple(levels))


def subset_rows(dm: DesignMatrices, futvec: Sequence[int]) -> DesignMatrices:
    """Keep the 1-based rows in ``futvec``; unoccupied level columns are kept."""
    idx = _check_futvec(futvec, dm.n_rows)
    return DesignMatrices(dm.names, tuple(m[idx] for m in dm.matrices), dm.levels)


def _check_futvec(futvec, n_rows):
    idx = np.asarray(futvec)
    if idx.ndim != 1 or idx.size < 1:
        raise ValidationError("futvec must be a non-empty vector of row numbers")
    if not np.all(idx == np.round(idx)):
        raise ValidationError("futvec must contain integers")
    idx = idx.astype(int)
    if np.any(idx < 1) or np.any(idx > n_rows):
        raise ValidationError(f"futvec entries must lie in 1..{n_rows}")
    if np.unique(idx).size != idx.size:
        raise ValidationError("futvec entries must be distinct")
    return idx - 1


# future designs ------------------------------------------------------------


@dataclass(frozen=True)
class Unstructured:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError("m must be a positive integer")

    @property
    def size(self):
        return int(self.m)


@dataclass(frozen=True)
class RowSubset:
    futvec: tuple

    def __post_init__(self):
        object.__setattr__(self, "futvec", tuple(int(i) for i in self.futvec))
        _check_futvec(self.futvec, max(self.futvec) if self.futvec else 0)

    @property
    def size(self):
        return len(self.futvec)

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.futvec) - 1


@dataclass(frozen=True)
class ExplicitMatrices:
    design: DesignMatrices

    @property
    def size(self):
        return self.design.n_rows


@dataclass(frozen=True)
class ClusterSizes:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(self.sizes)
        if not sizes or any(int(s) != s or s < 1 for s in sizes):
            raise ValidationError("future cluster sizes must be positive integers")
        object.__setattr__(self, "sizes", tuple(int(s) for s in sizes))

    @property
    def size(self):
        return len(self.sizes)


@dataclass(frozen=True)
class CountRepeats:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError("m must be a positive integer")

    @property
    def size(self):
        return int(self.m)


FutureDesign = Unstructured | RowSubset | ExplicitMatrices | ClusterSizes | CountRepeats


# futmat_list files ----------------------------------------------------------


def futmat_from_dict(doc: dict) -> DesignMatrices:
    if not isinstance(doc, dict) or not isinstance(doc.get("terms"), list):
        raise ValidationError("futmat_list document needs a 'terms' list")
    names, mats = [], []
    for i, entry in enumerate(doc["terms"]):
        if not isinstance(entry, dict) or "name" not in entry or "matrix" not in entry:
            raise ValidationError(f"futmat_list term #{i} needs 'name' and 'matrix'")
        mat = np.asarray(entry["matrix"], dtype=float)
        if mat.ndim != 2:
            raise ValidationError(f"futmat_list term {entry['name']!r} is not a matrix")
        if entry["name"] == "Residual":
            if mat.shape[0] != mat.shape[1] or not np.array_equal(mat, np.eye(mat.shape[0])):
                raise ValidationError("futmat_list residual matrix must be an identity")
            continue
        names.append(str(entry["name"]))
        mats.append(mat)
    return DesignMatrices(tuple(names), tuple(mats))


def futmat_to_dict(dm: DesignMatrices) -> dict:
    return {
        "terms": [
            {"name": n, "matrix": m.astype(int).tolist()}
            for n, m in zip(dm.names, dm.matrices)
        ]
    }


def load_futmat(path) -> DesignMatrices:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        return futmat_from_dict(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_futmat(dm: DesignMatrices, path) -> None:
    Path(path).write_text(json.dumps(futmat_to_dict(dm), indent=1), encoding="utf-8")
