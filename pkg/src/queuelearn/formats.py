"""Plain-text input formats shared by the command-line tools.

All files accept ``#`` comments and blank lines.

* payoff tensor: a header ``p q n`` followed by ``p * q`` lines of ``n``
  numbers, player action varying slowest;
* matrix: one row of numbers per line;
* schedules: one nonnegative integer vector per line;
* target set: ``orthant``, ``singleton:x1,x2,...``,
  ``halfspace:n1,n2,...;offset``, ``box:lo1,...;hi1,...`` or ``value``
  (the half-space at the value of a one-dimensional game).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .blackwell import PayoffTensor
from .geometry import Box, HalfSpace, NonpositiveOrthant, Singleton
from .matrix_game import solve_matrix_game


def _rows(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(v) for v in line.replace(",", " ").split()])
    return rows


def load_matrix(path):
    rows = _rows(path)
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: expected a nonempty rectangular matrix")
    return np.array(rows)


def load_schedules(path):
    m = load_matrix(path)
    if np.any(m != np.round(m)):
        raise ValueError(f"{path}: schedules must be integer vectors")
    return m.astype(np.int64)


def load_tensor(path):
    rows = _rows(path)
    if not rows or len(rows[0]) != 3:
        raise ValueError(f"{path}: first line must be 'p q n'")
    p, q, n = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != p * q or any(len(r) != n for r in body):
        raise ValueError(f"{path}: expected {p * q} lines of {n} numbers")
    return PayoffTensor(np.array(body).reshape(p, q, n))


def save_tensor(path, tensor: PayoffTensor):
    lines = [f"{tensor.p} {tensor.q} {tensor.n}"]
    for i in range(tensor.p):
        for j in range(tensor.q):
            lines.append(" ".join(repr(float(v)) for v in tensor.R[i, j]))
    Path(path).write_text("\n".join(lines) + "\n")


def _vector(text):
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_target(text, tensor: PayoffTensor):
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    if kind == "orthant":
        return NonpositiveOrthant(tensor.n)
    if kind == "singleton":
        return Singleton(_vector(arg)) if arg else Singleton.origin(tensor.n)
    if kind == "halfspace":
        normal, _, offset = arg.partition(";")
        return HalfSpace(_vector(normal), float(offset))
    if kind == "box":
        lo, _, hi = arg.partition(";")
        return Box(_vector(lo), _vector(hi))
    if kind == "value":
        if tensor.n != 1:
            raise ValueError("the 'value' target needs a one-dimensional payoff")
        return HalfSpace([1.0], solve_matrix_game(tensor.R[:, :, 0])[2])
    raise ValueError(f"unknown target set {text!r}")
