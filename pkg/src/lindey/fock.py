"""Two-mode Fock bases and operator matrices.

States are labelled ``(n_a, n_b)``.  A fixed-N basis lists
``|N,0>, |N-1,1>, ..., |0,N>``; a truncated basis stacks the fixed-N' blocks
for ``N' = N_max, N_max-1, ..., 0`` so that every particle-number sector is a
contiguous index range.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, UnsupportedOperator


class BasisKind(enum.Enum):
    FIXED_N = "fixed"
    TRUNCATED = "truncated"


class InputState(enum.Enum):
    N0 = "n0"
    TF = "tf"
    NOON = "noon"


def _frozen(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind
    n: int
    states: tuple[tuple[int, int], ...] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @cached_property
    def _index(self) -> dict[tuple[int, int], int]:
        return {s: i for i, s in enumerate(self.states)}

    def index(self, state: tuple[int, int]) -> int:
        try:
            return self._index[tuple(state)]
        except KeyError:
            raise InvalidArgument(f"state {state} is not in {self.kind.value} basis with N={self.n}") from None

    def __contains__(self, state) -> bool:
        return tuple(state) in self._index

    @cached_property
    def totals(self) -> np.ndarray:
        """Total particle number of every basis state."""
        return _frozen(np.array([na + nb for na, nb in self.states], dtype=int))

    @cached_property
    def occupations(self) -> tuple[np.ndarray, np.ndarray]:
        na = np.array([s[0] for s in self.states], dtype=float)
        nb = np.array([s[1] for s in self.states], dtype=float)
        return _frozen(na), _frozen(nb)

    def sector(self, total: int) -> np.ndarray:
        """Indices of the states carrying ``total`` particles."""
        return np.flatnonzero(self.totals == total)


def _fixed_states(n: int) -> list[tuple[int, int]]:
    return [(na, n - na) for na in range(n, -1, -1)]


def build_basis(kind: BasisKind | str, n: int) -> BasisSpec:
    kind = BasisKind(kind)
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgument(f"particle count must be an integer >= 1, got {n!r}")
    n = int(n)
    if kind is BasisKind.FIXED_N:
        states = _fixed_states(n)
    else:
        states = [s for total in range(n, -1, -1) for s in _fixed_states(total)]
    return BasisSpec(kind, n, tuple(states))


def hopping_b_from_a(basis: BasisSpec) -> np.ndarray:
    """Matrix of b^dagger a (moves one particle from mode a to mode b)."""
    m = np.zeros((basis.dim, basis.dim))
    for j, (na, nb) in enumerate(basis.states):
        if na > 0:
            m[basis.index((na - 1, nb + 1)), j] = np.sqrt(na * (nb + 1))
    return m


def annihilation_operators(basis: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mode annihilators ``a`` and ``b``; only defined on truncated bases."""
    if basis.kind is not BasisKind.TRUNCATED:
        raise UnsupportedOperator("single-mode annihilators leave a fixed-N sector; use a truncated basis")
    a = np.zeros((basis.dim, basis.dim))
    b = np.zeros((basis.dim, basis.dim))
    for j, (na, nb) in enumerate(basis.states):
        if na > 0:
            a[basis.index((na - 1, nb)), j] = np.sqrt(na)
        if nb > 0:
            b[basis.index((na, nb - 1)), j] = np.sqrt(nb)
    return a, b


def mode_combination(basis: BasisSpec, ca: complex, cb: complex) -> np.ndarray:
    """Loss operator ``ca * a + cb * b`` on a truncated basis."""
    a, b = annihilation_operators(basis)
    return (ca * a + cb * b).astype(complex)


@dataclass(frozen=True)
class OperatorSet:
    basis: BasisSpec
    h_j: np.ndarray
    h_delta: np.ndarray
    s_z: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    n_imbalance: np.ndarray
    parity_b: np.ndarray
    n_total: np.ndarray
    alpha: np.ndarray | None = None

    def loss_operator(self) -> np.ndarray:
        if self.alpha is None:
            raise UnsupportedOperator("the loss operator alpha needs a truncated basis")
        return self.alpha


def build_operators(basis: BasisSpec, J: float = 1.0, delta: float = 0.0) -> OperatorSet:
    na, nb = basis.occupations
    s_minus = hopping_b_from_a(basis).astype(complex)
    s_plus = s_minus.conj().T.copy()
    alpha = None
    if basis.kind is BasisKind.TRUNCATED:
        alpha = mode_combination(basis, 1 / np.sqrt(2), 1 / np.sqrt(2))
    nb_int = np.rint(nb).astype(int)
    mats = dict(
        h_j=-J * (s_minus + s_plus),
        h_delta=np.diag(0.5 * delta * (na - nb)).astype(complex),
        s_z=np.diag(0.5 * (na - nb)).astype(complex),
        s_plus=s_plus,
        s_minus=s_minus,
        n_imbalance=np.diag(nb - na).astype(complex),
        parity_b=np.diag(np.where(nb_int % 2 == 0, 1.0, -1.0)).astype(complex),
        n_total=np.diag(na + nb).astype(complex),
    )
    if alpha is not None:
        mats["alpha"] = alpha
    return OperatorSet(basis=basis, **{k: _frozen(v) for k, v in mats.items()})


def input_vector(basis: BasisSpec, which: InputState | str, n: int | None = None) -> np.ndarray:
    which = InputState(which)
    n = basis.n if n is None else n
    if n < 1 or n > basis.n:
        raise InvalidArgument(f"input particle number {n} exceeds basis capacity {basis.n}")
    if basis.kind is BasisKind.FIXED_N and n != basis.n:
        raise InvalidArgument("a fixed-N basis only holds states with exactly N particles")
    psi = np.zeros(basis.dim, dtype=complex)
    if which is InputState.N0:
        psi[basis.index((n, 0))] = 1.0
    elif which is InputState.TF:
        if n % 2:
            raise InvalidArgument(f"twin-Fock input needs an even particle number, got N={n}")
        psi[basis.index((n // 2, n // 2))] = 1.0
    else:
        psi[basis.index((n, 0))] = 1 / np.sqrt(2)
        psi[basis.index((0, n))] = 1 / np.sqrt(2)
    return psi


def build_input_state(basis: BasisSpec, which: InputState | str, n: int | None = None) -> np.ndarray:
    """Pure-state density matrix of one of the three interferometer inputs."""
    psi = input_vector(basis, which, n)
    return np.outer(psi, psi.conj())
