"""Independent reference implementations used by the tests.

Nothing here imports the package. Each oracle recomputes a quantity the slow,
obvious way so the tests compare two different routes to the same number.
"""

import itertools
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def kron_all(mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def pauli_string(letters):
    return kron_all([PAULI[ch] for ch in letters])


def pauli_expectation(rho, letters):
    return float(np.real(np.trace(rho @ pauli_string(letters))))


def ghz_vector(phase=0.0):
    """(|HVV> + e^{i phase}|VHH>)/sqrt(2) written out by index, H=0, V=1."""
    v = np.zeros(8, dtype=complex)
    v[0b011] = 1 / math.sqrt(2)
    v[0b100] = np.exp(1j * phase) / math.sqrt(2)
    return v


def mermin_by_trace(rho):
    return (
        pauli_expectation(rho, "XXX")
        + pauli_expectation(rho, "YXY")
        + pauli_expectation(rho, "YYX")
        - pauli_expectation(rho, "XYY")
    )


def ghz_fidelity_by_trace(rho, phase=0.0):
    v = ghz_vector(phase)
    return float(np.real(v.conj() @ rho @ v))


def random_density(rng, n_qubits=3, rank=None):
    """Ginibre-distributed mixed state of the given rank (full rank by default)."""
    dim = 2**n_qubits
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_qubit(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def random_product_density(rng, n_qubits=3):
    psi = kron_all([random_qubit(rng).reshape(2, 1) for _ in range(n_qubits)]).ravel()
    return np.outer(psi, psi.conj())


def grid_argmax_ratio(p_e, step=1e-4, hi=1.0):
    mu = np.arange(step, hi, step)
    r = 2 * mu / (mu**2 + 2 * p_e + p_e * mu)
    return float(mu[np.argmax(r)])


def closed_form_components(f, mu, p_e, eta):
    """Eight threefold rates indexed HHH=0 ... VVV=7 from the leading-order formulas."""
    e3 = eta**3
    desired = 0.25 * f * p_e * mu * e3
    split = f * p_e * mu**2 * e3 / 8
    double = 0.25 * f * p_e**2 * e3
    triple = f * p_e**2 * mu * e3 / 8
    out = np.zeros(8)
    for idx, value in (
        ((0b011, 0b100), desired),
        ((0b010, 0b110), split),
        ((0b001, 0b101), double),
        ((0b000, 0b111), triple),
    ):
        out[list(idx)] = value
    return out


def _poisson(mean, n_max):
    return [(n, math.exp(-mean) * mean**n / math.factorial(n)) for n in range(n_max + 1)]


def enumerate_source(mu, p_e, eta, pass_prob, max_sps=3, max_pairs=2):
    """Per-pulse probability of each of the 8 threefold outcomes, by brute force.

    Walks over every photon number, polarization assignment and per-photon
    survival pattern. Photons are routed H1/V1 to path 1, the partner to
    path 2 if H else 3, and laser photons to path 3 if H else 2.
    ``pass_prob(path, pol, bit)`` is the chance that a surviving photon of
    polarization ``pol`` passes the analyzer of ``path`` set to outcome
    ``bit``. A path clicks when at least one surviving photon passes.

    All photons are treated as independent, so this is only the full answer
    when the analyzers are Z or the GHZ coherence is zero.
    """
    probs = np.zeros(8)
    for n, pn in _poisson(mu, max_sps):
        for k, pk in _poisson(p_e, max_pairs):
            for laser in itertools.product("HV", repeat=n):
                for pairs in itertools.product(("HV", "VH"), repeat=k):
                    weight = pn * pk * 0.5 ** (n + k)
                    photons = []
                    for first, second in pairs:
                        photons.append((0, first))
                        photons.append((1 if second == "H" else 2, second))
                    photons.extend((2 if pol == "H" else 1, pol) for pol in laser)
                    for alive in itertools.product((0, 1), repeat=len(photons)):
                        w = weight * math.prod(eta if a else 1 - eta for a in alive)
                        kept = [p for p, a in zip(photons, alive) if a]
                        if {path for path, _ in kept} != {0, 1, 2}:
                            continue
                        for outcome in range(8):
                            bits = [(outcome >> (2 - i)) & 1 for i in range(3)]
                            click = 1.0
                            for path in range(3):
                                miss = math.prod(
                                    1 - pass_prob(path, pol, bits[path]) for p, pol in kept if p == path
                                )
                                click *= 1 - miss
                            probs[outcome] += w * click
    return probs


def z_pass(path, pol, bit):
    return 1.0 if (pol == "V") == bool(bit) else 0.0


def equator_pass(path, pol, bit):
    return 0.5
