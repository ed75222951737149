"""Dense linear algebra for polarization qubits.

Basis convention used everywhere in the package: ``H`` is ``|0>``, ``V`` is
``|1>``, and qubit 1 is the most significant bit of a basis index. So for
three photons the index of ``|H V V>`` is ``0b011 == 3`` and ``|V H H>`` is 4.

Outcome indices follow the same rule: bit ``i`` (counting from the most
significant) is 0 when photon ``i`` gives the first label of its axis
(``H``, ``+`` or ``R``) and 1 for the second label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 10

TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = -1e-10
IMAG_DISCARD_TOL = 1e-10
IMAG_ERROR_TOL = 1e-8

_S = 1.0 / math.sqrt(2.0)


class NumericalIntegrityError(ArithmeticError):
    """A quantity that must be real came out with a sizeable imaginary part."""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


_KETS = {
    "H": (1.0, 0.0),
    "V": (0.0, 1.0),
    "+": (_S, _S),
    "-": (_S, -_S),
    "R": (_S, 1j * _S),
    "L": (_S, -1j * _S),
}
# unicode minus is accepted wherever "-" is
_ALIASES = {"−": "-"}


def _check_n(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or n_qubits < 1:
        raise ValueError(f"n_qubits must be a positive integer, got {n_qubits!r}")
    if n_qubits > MAX_QUBITS:
        raise ValueError(f"n_qubits={n_qubits} exceeds the cap of {MAX_QUBITS}")


@dataclass(frozen=True, eq=False)
class PureState:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        _check_n(self.n_qubits)
        amps = _frozen(np.ravel(self.amplitudes))
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes: Iterable[complex]) -> PureState:
        amps = np.asarray(list(amplitudes), dtype=complex)
        n = int(round(math.log2(amps.size))) if amps.size else 0
        return cls(n, amps)

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_qubits: int
    elements: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        _check_n(self.n_qubits)
        dim = 2**self.n_qubits
        rho = _frozen(self.elements)
        if rho.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise ValueError("density matrix has non-finite entries")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        trace = np.trace(rho)
        if abs(trace - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {trace!r}, expected 1")
        lowest = float(np.linalg.eigvalsh(rho)[0])
        if lowest < POSITIVITY_TOL:
            raise ValueError(f"density matrix is not positive semidefinite (eigenvalue {lowest:.3e})")
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> DensityMatrix:
        return cls(n_qubits, np.eye(2**n_qubits) / 2**n_qubits)


def as_density(state: PureState | DensityMatrix) -> DensityMatrix:
    if isinstance(state, PureState):
        return state.density()
    if isinstance(state, DensityMatrix):
        return state
    raise TypeError(f"expected PureState or DensityMatrix, got {type(state).__name__}")


@dataclass(frozen=True, eq=False)
class Axis:
    """A projective polarization measurement with two outcomes.

    ``plus`` and ``minus`` are the eigenvectors for the first and second label;
    the observable is ``|plus><plus| - |minus><minus|``.
    """

    name: str
    labels: tuple[str, str]
    plus: np.ndarray = field(repr=False)
    minus: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "plus", _frozen(self.plus))
        object.__setattr__(self, "minus", _frozen(self.minus))

    @property
    def operator(self) -> np.ndarray:
        return np.outer(self.plus, self.plus.conj()) - np.outer(self.minus, self.minus.conj())

    @property
    def bloch(self) -> np.ndarray:
        op = self.operator
        return np.array([op[0, 1].real, -op[0, 1].imag, op[0, 0].real])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Axis):
            return NotImplemented
        return bool(np.allclose(self.bloch, other.bloch, atol=1e-12))

    def __hash__(self) -> int:
        return hash(tuple(np.round(self.bloch, 9)))


Z = Axis("Z", ("H", "V"), _KETS["H"], _KETS["V"])
X = Axis("X", ("+", "-"), _KETS["+"], _KETS["-"])
Y = Axis("Y", ("R", "L"), _KETS["R"], _KETS["L"])
AXES = {"Z": Z, "X": X, "Y": Y}


def equatorial(angle: float) -> Axis:
    """Linear-polarization-plane axis ``cos(angle) sigma_x + sin(angle) sigma_y``."""
    angle = float(angle)
    if math.isclose(math.remainder(angle, 2 * math.pi), 0.0, abs_tol=1e-15):
        return X
    phase = complex(math.cos(angle), math.sin(angle))
    tag = f"{angle:.12g}"
    return Axis(f"M({tag})", (f"+{tag}", f"-{tag}"), (_S, _S * phase), (_S, -_S * phase))


@dataclass(frozen=True)
class MeasurementSetting:
    axes: tuple[Axis, ...]

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        if not axes:
            raise ValueError("a measurement setting needs at least one axis")
        for axis in axes:
            if not isinstance(axis, Axis):
                raise TypeError(f"expected Axis, got {type(axis).__name__}")
        _check_n(len(axes))
        object.__setattr__(self, "axes", axes)

    @classmethod
    def parse(cls, text: str) -> MeasurementSetting:
        """``MeasurementSetting.parse("XYY")``; letters Z, X, Y only."""
        try:
            return cls(tuple(AXES[ch] for ch in text.upper()))
        except KeyError as exc:
            raise ValueError(f"unknown basis letter {exc.args[0]!r} in {text!r}") from None

    @property
    def n_qubits(self) -> int:
        return len(self.axes)

    def __str__(self) -> str:
        if all(a.name in AXES for a in self.axes):
            return "".join(a.name for a in self.axes)
        return ",".join(a.name for a in self.axes)

    def outcome_labels(self) -> list[str]:
        labels = []
        for index in range(2**self.n_qubits):
            bits = _bits(index, self.n_qubits)
            parts = [axis.labels[b] for axis, b in zip(self.axes, bits)]
            joiner = "" if all(len(p) == 1 for p in parts) else ","
            labels.append(joiner.join(parts))
        return labels

    def outcome_index(self, label: str) -> int:
        """Index of an outcome such as ``"+-+"`` or ``"HVV"``."""
        label = "".join(_ALIASES.get(ch, ch) for ch in label)
        try:
            return self.outcome_labels().index(label)
        except ValueError:
            raise ValueError(f"{label!r} is not an outcome of setting {self}") from None


def _bits(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - i)) & 1 for i in range(n))


def parity_signs(n_qubits: int) -> np.ndarray:
    """+1 for outcomes with an even number of second-label results, else -1."""
    idx = np.arange(2**n_qubits)
    ones = np.array([bin(i).count("1") for i in idx])
    return np.where(ones % 2 == 0, 1.0, -1.0)


def ket(label: str) -> PureState:
    key = _ALIASES.get(label, label)
    if key not in _KETS:
        raise ValueError(f"unknown polarization label {label!r}; expected one of H, V, +, -, R, L")
    return PureState(1, np.array(_KETS[key], dtype=complex))


def tensor(*states: PureState | Sequence[PureState]) -> PureState:
    """Kronecker product in the order given; accepts varargs or one list."""
    if len(states) == 1 and not isinstance(states[0], PureState):
        states = tuple(states[0])
    if not states:
        raise ValueError("tensor() needs at least one state")
    amps = reduce(np.kron, (s.amplitudes for s in states))
    return PureState(sum(s.n_qubits for s in states), amps)


def _check_dims(rho: DensityMatrix, setting: MeasurementSetting) -> None:
    if setting.n_qubits != rho.n_qubits:
        raise ValueError(
            f"setting {setting} acts on {setting.n_qubits} qubits but the state has {rho.n_qubits}"
        )


def _real_or_raise(value: complex, what: str) -> float:
    imag = abs(complex(value).imag)
    if imag > IMAG_ERROR_TOL:
        raise NumericalIntegrityError(f"{what} has imaginary residue {imag:.3e}")
    return float(complex(value).real)


def observable(setting: MeasurementSetting) -> np.ndarray:
    return reduce(np.kron, (axis.operator for axis in setting.axes))


def expectation(state: PureState | DensityMatrix, setting: MeasurementSetting) -> float:
    """Tr(rho * A_1 (x) ... (x) A_n) for the axes of ``setting``."""
    rho = as_density(state)
    _check_dims(rho, setting)
    value = np.trace(rho.elements @ observable(setting))
    return _real_or_raise(value, f"<{setting}>")


def product_basis(setting: MeasurementSetting) -> np.ndarray:
    """Unitary whose column ``o`` is the product eigenvector of outcome ``o``."""
    columns = [np.column_stack([axis.plus, axis.minus]) for axis in setting.axes]
    return reduce(np.kron, columns)


def outcome_probabilities(state: PureState | DensityMatrix, setting: MeasurementSetting) -> np.ndarray:
    rho = as_density(state)
    _check_dims(rho, setting)
    basis = product_basis(setting)
    diag = np.einsum("io,ij,jo->o", basis.conj(), rho.elements, basis)
    worst = float(np.max(np.abs(diag.imag)))
    if worst > IMAG_ERROR_TOL:
        raise NumericalIntegrityError(f"outcome probabilities have imaginary residue {worst:.3e}")
    probs = diag.real
    # tiny negatives come from eigenvalues at the positivity tolerance
    probs = np.where((probs < 0) & (probs > -1e-10), 0.0, probs)
    return probs


def mix(components: Sequence[tuple[float, PureState | DensityMatrix]]) -> DensityMatrix:
    if not components:
        raise ValueError("mix() needs at least one component")
    weights = np.array([float(w) for w, _ in components])
    if np.any(weights < 0):
        raise ValueError("mixture weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
    rhos = [as_density(s) for _, s in components]
    n = rhos[0].n_qubits
    if any(r.n_qubits != n for r in rhos):
        raise ValueError("all mixture components must have the same number of qubits")
    total = sum(w * r.elements for w, r in zip(weights, rhos))
    return DensityMatrix(n, total)
