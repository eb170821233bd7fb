"""Closed element-wise equations of motion on the seven reachable states.

Two sets are provided:

* :func:`bloch_rhs_truncated` -- populations and coherences of a physical
  state started in ``|m,0>``;
* :func:`shifted_rhs` -- the elements ``<a|X|b>`` (``a`` in {m, u, Y, G'},
  ``b`` in {y, G, g}, plus ``<y|X|g>`` and ``<G|X|g>``) of the non-Hermitian
  operands met in the regression chains, e.g. ``X = rho a1^H``.

Labels: ``m = |m,0>, u = |u,0>, Y = |y,1>, Gp = |g,2>, y = |y,0>, G = |g,1>,
g = |g,0>``.  Elements are keyed by ``(row, column)`` label tuples.

Both functions take ``errata``.  With ``errata=True`` (the default) the
equations are the ones generated mechanically by the master equation and
agree with :func:`qdtimebin.propagator.lindblad_rhs` to rounding.  With
``errata=False`` they reproduce the widely circulated printed form of these
equations, whose differences are listed in :data:`ERRATA`.
"""

from __future__ import annotations

import math

import numpy as np

from .model import PulsePair, SystemParams, pump_envelope
from .propagator import StepperConfig, n_steps

POPULATIONS = [(s, s) for s in ("m", "u", "Y", "Gp", "G", "y", "g")]
COHERENCES = [("u", "m"), ("u", "Y"), ("Y", "Gp"), ("m", "Y"), ("u", "Gp"), ("m", "Gp"), ("y", "G")]
BLOCH_ELEMENTS = POPULATIONS + COHERENCES + [(b, a) for a, b in COHERENCES]

SHIFTED_ELEMENTS = [
    ("Y", "y"), ("Gp", "G"), ("G", "g"), ("u", "y"), ("Gp", "y"), ("Y", "G"), ("y", "g"),
    ("m", "y"), ("u", "G"), ("m", "G"), ("Gp", "g"), ("Y", "g"), ("u", "g"), ("m", "g"),
]

# term-by-term differences between the printed equations and the generator
ERRATA = {
    "all coherences": "detuning terms carry the opposite sign to -i[H, rho] for the "
                      "Hamiltonian as written; the generator's sign is used",
    ("G", "G"): "printed i g2 (rho_Gy + rho_yG); generator gives i g2 (rho_Gy - rho_yG)",
    ("u", "Y"): "printed damping term multiplies rho_um; generator multiplies rho_uY",
    ("u", "Gp"): "printed damping (gamma_d + kappa + gamma2); generator gives gamma_d + kappa + gamma1",
    ("y", "G"): "printed form lacks the cavity-jump feed + sqrt(2) kappa rho_YG'",
    ("Y", "y"): "printed damping (gamma2 + kappa/2 + gamma_d); generator gives gamma2 + kappa/2 "
                "(Y and y share the QD level, so dephasing cancels)",
    ("G", "g"): "printed form lacks the jump feeds + gamma2 rho_Yy + sqrt(2) kappa rho_G'G",
    ("y", "g"): "printed form lacks the jump feed + kappa rho_YG",
}


def _energies(p: SystemParams) -> dict:
    e_g = p.delta1 + p.delta2
    return {"m": p.delta_p, "u": 0.0, "Y": p.delta1, "Gp": e_g, "y": p.delta1, "G": e_g, "g": e_g}


def _require(elements, labels):
    missing = [lbl for lbl in labels if lbl not in elements]
    if missing:
        raise KeyError(f"element map is missing {missing}")


def bloch_rhs_truncated(elements: dict, t: float, params: SystemParams, pulses: PulsePair,
                        errata: bool = True) -> dict:
    """Time derivative of every element in :data:`BLOCH_ELEMENTS`."""
    _require(elements, BLOCH_ELEMENTS)
    r = lambda a, b: elements[(a, b)]  # noqa: E731
    p = params
    om = pump_envelope(pulses, t)
    g1, g2, k = p.g1, p.g2, p.kappa
    G1, G2, gd = p.gamma1, p.gamma2, p.gamma_d
    s2 = math.sqrt(2.0)
    E = _energies(p)
    sgn = 1.0 if errata else -1.0

    def det(a, b):
        return -1j * sgn * (E[a] - E[b]) * r(a, b)

    d = {}
    d["m", "m"] = 1j * om * (r("m", "u") - r("u", "m")) + G1 * r("u", "u")
    d["u", "u"] = (-1j * om * (r("m", "u") - r("u", "m")) + 1j * g1 * (r("u", "Y") - r("Y", "u"))
                   - 2 * G1 * r("u", "u"))
    d["Y", "Y"] = (-1j * g1 * (r("u", "Y") - r("Y", "u")) + 1j * s2 * g2 * (r("Y", "Gp") - r("Gp", "Y"))
                   - (k + G2) * r("Y", "Y"))
    d["Gp", "Gp"] = -1j * s2 * g2 * (r("Y", "Gp") - r("Gp", "Y")) - 2 * k * r("Gp", "Gp")
    if errata:
        flow = 1j * g2 * (r("G", "y") - r("y", "G"))
    else:
        flow = 1j * g2 * (r("G", "y") + r("y", "G"))
    d["G", "G"] = flow + 2 * k * r("Gp", "Gp") + G2 * r("Y", "Y") - k * r("G", "G")
    d["y", "y"] = (-1j * g2 * (r("G", "y") - r("y", "G")) + k * r("Y", "Y") + G1 * r("u", "u")
                   - G2 * r("y", "y"))
    d["g", "g"] = k * r("G", "G") + G2 * r("y", "y")

    d["u", "m"] = (det("u", "m") - 1j * om * r("m", "m") - 1j * g1 * r("Y", "m") + 1j * om * r("u", "u")
                   - (G1 + 1.5 * gd) * r("u", "m"))
    damped = r("u", "Y") if errata else r("u", "m")
    d["u", "Y"] = (det("u", "Y") - 1j * om * r("m", "Y") - 1j * g1 * r("Y", "Y") + 1j * g1 * r("u", "u")
                   + 1j * s2 * g2 * r("u", "Gp") - (G1 + 0.5 * (k + G2 + 3 * gd)) * damped)
    d["Y", "Gp"] = (det("Y", "Gp") - 1j * g1 * r("u", "Gp") - 1j * s2 * g2 * r("Gp", "Gp")
                    + 1j * s2 * g2 * r("Y", "Y") - 0.5 * (3 * k + G2 + gd) * r("Y", "Gp"))
    d["m", "Y"] = (det("m", "Y") - 1j * om * r("u", "Y") + 1j * g1 * r("m", "u")
                   + 1j * s2 * g2 * r("m", "Gp") - (gd + 0.5 * (k + G2)) * r("m", "Y"))
    d["u", "Gp"] = (det("u", "Gp") - 1j * om * r("m", "Gp") - 1j * g1 * r("Y", "Gp")
                    + 1j * s2 * g2 * r("u", "Y") - (gd + k + (G1 if errata else G2)) * r("u", "Gp"))
    d["m", "Gp"] = (det("m", "Gp") - 1j * om * r("u", "Gp") + 1j * s2 * g2 * r("m", "Y")
                    - (k + 0.5 * gd) * r("m", "Gp"))
    d["y", "G"] = (det("y", "G") - 1j * g2 * r("G", "G") + 1j * g2 * r("y", "y")
                   - 0.5 * (k + G2 + gd) * r("y", "G"))
    if errata:
        d["y", "G"] += s2 * k * r("Y", "Gp")

    for a, b in COHERENCES:
        d[b, a] = np.conj(d[a, b])
    return d


def shifted_rhs(elements: dict, t: float, params: SystemParams, pulses: PulsePair,
                errata: bool = True) -> dict:
    """Time derivative of every element in :data:`SHIFTED_ELEMENTS`.

    The operand need not be Hermitian; conjugate elements are not implied.
    """
    _require(elements, SHIFTED_ELEMENTS)
    r = lambda a, b: elements[(a, b)]  # noqa: E731
    p = params
    om = pump_envelope(pulses, t)
    g1, g2, k = p.g1, p.g2, p.kappa
    G1, G2, gd = p.gamma1, p.gamma2, p.gamma_d
    s2 = math.sqrt(2.0)
    E = _energies(p)
    sgn = 1.0 if errata else -1.0

    def det(a, b):
        return -1j * sgn * (E[a] - E[b]) * r(a, b)

    d = {}
    d["Y", "y"] = (-1j * g1 * r("u", "y") - 1j * s2 * g2 * r("Gp", "y") + 1j * g2 * r("Y", "G")
                   - (G2 + 0.5 * k + (0.0 if errata else gd)) * r("Y", "y"))
    d["Gp", "G"] = 1j * g2 * r("Gp", "y") - 1j * s2 * g2 * r("Y", "G") - 1.5 * k * r("Gp", "G")
    d["G", "g"] = -1j * g2 * r("y", "g") - 0.5 * k * r("G", "g")
    d["u", "y"] = (det("u", "y") - 1j * om * r("m", "y") - 1j * g1 * r("Y", "y") + 1j * g2 * r("u", "G")
                   - (G1 + 0.5 * G2 + 1.5 * gd) * r("u", "y"))
    d["Gp", "y"] = (det("Gp", "y") - 1j * s2 * g2 * r("Y", "y") + 1j * g2 * r("Gp", "G")
                    - (k + 0.5 * G2 + 0.5 * gd) * r("Gp", "y"))
    d["Y", "G"] = (det("Y", "G") - 1j * g1 * r("u", "G") - 1j * s2 * g2 * r("Gp", "G") + 1j * g2 * r("Y", "y")
                   - (k + 0.5 * G2 + 0.5 * gd) * r("Y", "G"))
    d["y", "g"] = det("y", "g") - 1j * g2 * r("G", "g") - 0.5 * (G2 + gd) * r("y", "g")
    d["m", "y"] = (det("m", "y") - 1j * om * r("u", "y") + 1j * g2 * r("m", "G")
                   - (0.5 * G2 + gd) * r("m", "y"))
    d["u", "G"] = (det("u", "G") - 1j * om * r("m", "G") - 1j * g1 * r("Y", "G") + 1j * g2 * r("u", "y")
                   - (0.5 * k + G1 + gd) * r("u", "G"))
    d["m", "G"] = det("m", "G") - 1j * om * r("u", "G") + 1j * g2 * r("m", "y") - 0.5 * (k + gd) * r("m", "G")
    d["Gp", "g"] = -1j * s2 * g2 * r("Y", "g") - k * r("Gp", "g")
    d["Y", "g"] = (det("Y", "g") - 1j * s2 * g2 * r("Gp", "g") - 1j * g1 * r("u", "g")
                   - 0.5 * (k + G2 + gd) * r("Y", "g"))
    d["u", "g"] = det("u", "g") - 1j * om * r("m", "g") - 1j * g1 * r("Y", "g") - (G1 + gd) * r("u", "g")
    d["m", "g"] = det("m", "g") - 1j * om * r("u", "g") - 0.5 * gd * r("m", "g")
    if errata:
        d["G", "g"] += G2 * r("Y", "y") + s2 * k * r("Gp", "G")
        d["y", "g"] += k * r("Y", "G")
    return d


def elements_from_matrix(rho, space, labels) -> dict:
    rho = np.asarray(rho)
    return {(a, b): complex(rho[space.index(a), space.index(b)]) for a, b in labels}


def matrix_from_elements(elements: dict, space) -> np.ndarray:
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for (a, b), v in elements.items():
        out[space.index(a), space.index(b)] = v
    return out


def evolve_elements(rhs, elements0: dict, t0: float, t1: float, params: SystemParams,
                    pulses: PulsePair, stepper: StepperConfig | None = None, errata: bool = True,
                    record: bool = False):
    """Fixed-step RK4 on an element map with the same step rule as the generic path.

    Returns the final element map, or ``(times, {label: series})`` with ``record``.
    """
    stepper = stepper or StepperConfig()
    labels = list(elements0)
    y = np.array([elements0[lbl] for lbl in labels], dtype=complex)

    def f(t, v):
        d = rhs(dict(zip(labels, v)), t, params, pulses, errata=errata)
        return np.array([d[lbl] for lbl in labels])

    n = n_steps(t0, t1, stepper.dt)
    h = (t1 - t0) / n if n else 0.0
    times, samples = [t0], [y.copy()]
    for i in range(n):
        t = t0 + i * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if record and ((i + 1) % stepper.record_stride == 0 or i == n - 1):
            times.append(t + h)
            samples.append(y.copy())
    if record:
        samples = np.array(samples)
        return np.array(times), {lbl: samples[:, j] for j, lbl in enumerate(labels)}
    return dict(zip(labels, y))
