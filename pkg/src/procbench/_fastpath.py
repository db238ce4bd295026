"""Optional numba-compiled batched rollouts for the oracle's hot loop.

The oracle evaluates its objective on a batch of control sequences (one
unperturbed row plus one finite-difference row per decision variable), and
each evaluation is a full multiple-shooting rollout. The numpy kernels in
the models module dominate that loop through per-op dispatch overhead, so
each model gets a scalar-arithmetic derivative compiled with numba. The
numbers match the numpy kernels to rounding (see the parity tests); when
numba is unavailable the oracle falls back to the numpy path.
"""

from __future__ import annotations

import numpy as np

from .models import ModelDescriptor

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally installed
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


def _make_rollout(deriv, n_x: int):
    @njit(cache=False)
    def rollout(x0, U, D, dt, substeps):
        B, N, _ = U.shape
        out = np.empty((B, N + 1, n_x))
        h = dt / substeps
        x = np.empty(n_x)
        k1 = np.empty(n_x)
        k2 = np.empty(n_x)
        k3 = np.empty(n_x)
        k4 = np.empty(n_x)
        tmp = np.empty(n_x)
        for b in range(B):
            for i in range(n_x):
                x[i] = x0[i]
                out[b, 0, i] = x0[i]
            for k in range(N):
                u = U[b, k]
                d = D[k]
                for _ in range(substeps):
                    deriv(x, u, d, k1)
                    for i in range(n_x):
                        tmp[i] = x[i] + 0.5 * h * k1[i]
                    deriv(tmp, u, d, k2)
                    for i in range(n_x):
                        tmp[i] = x[i] + 0.5 * h * k2[i]
                    deriv(tmp, u, d, k3)
                    for i in range(n_x):
                        tmp[i] = x[i] + h * k3[i]
                    deriv(tmp, u, d, k4)
                    for i in range(n_x):
                        x[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i]
                                                   + 2.0 * k3[i] + k4[i])
                for i in range(n_x):
                    out[b, k + 1, i] = x[i]
        return out

    return rollout


def _cstr_deriv(p):
    q_V = p["q"] / p["V"]
    k0 = p["k0"]
    EA_R = p["EA_over_R"]
    heat = -p["dH_r"] / p["rho_Cp"]
    cool = p["UA"] / (p["rho_Cp"] * p["V"])

    @njit(cache=False)
    def deriv(x, u, d, out):
        rA = k0 * np.exp(-EA_R / x[1]) * x[0]
        out[0] = q_V * (d[1] - x[0]) - rA
        out[1] = q_V * (d[0] - x[1]) + heat * rA + cool * (u[0] - x[1])

    return deriv


def _extraction_deriv(p):
    Vl, Vg, m, Kla, e = p["Vl"], p["Vg"], p["m"], p["Kla"], p["eq_exponent"]

    @njit(cache=False)
    def deriv(x, u, d, out):
        L, G = u[0], u[1]
        for n in range(5):
            X = x[n]
            Y = x[5 + n]
            F = Kla * (X - Y ** e / m) * Vl
            x_in = d[0] if n == 0 else x[n - 1]
            y_in = d[1] if n == 4 else x[5 + n + 1]
            out[n] = (L * (x_in - X) - F) / Vl
            out[5 + n] = (G * (y_in - Y) + F) / Vg

    return deriv


def _crystallization_deriv(p):
    ka, kb, kc, kd = p["ka"], p["kb"], p["kc"], p["kd"]
    kg, k1c, k2c = p["kg"], p["k1"], p["k2"]
    a, b = p["a"], p["b"]
    conc_coeff = -0.5 * p["rho"] * p["alpha"]

    @njit(cache=False)
    def deriv(x, u, d, out):
        TK = u[0] + 273.15
        C_eq = -686.2686 + 3.579165 * TK - 0.00292874 * TK ** 2
        S = x[4] * 1e3 - C_eq
        S_pos = S if S > 0.0 else 0.0
        mu3_pos = x[3] if x[3] > 0.0 else 0.0
        B0 = ka * np.exp(kb / TK) * S_pos ** kc * mu3_pos ** kd
        Ginf = kg * np.exp(k1c / TK) * S_pos ** k2c
        term2 = a * x[1] * 1e-4 + b * x[2] * 1e-8
        term3 = a * x[2] * 1e-8 + b * x[3] * 1e-12
        out[0] = B0
        out[1] = Ginf * (a * x[0] + b * x[1] * 1e-4) * 1e4
        out[2] = 2.0 * Ginf * term2 * 1e8
        out[3] = 3.0 * Ginf * term3 * 1e12
        out[4] = conc_coeff * Ginf * term3

    return deriv


def _four_tank_deriv(p):
    g = p["g"]
    gamma1, gamma2 = p["gamma1"], p["gamma2"]
    k1, k2 = p["k1"], p["k2"]
    a1, a2, a3, a4 = p["a1"], p["a2"], p["a3"], p["a4"]
    A1, A2, A3, A4 = p["A1"], p["A2"], p["A3"], p["A4"]

    @njit(cache=False)
    def deriv(x, u, d, out):
        s1 = np.sqrt(2.0 * g * (x[0] if x[0] > 0.0 else 0.0))
        s2 = np.sqrt(2.0 * g * (x[1] if x[1] > 0.0 else 0.0))
        s3 = np.sqrt(2.0 * g * (x[2] if x[2] > 0.0 else 0.0))
        s4 = np.sqrt(2.0 * g * (x[3] if x[3] > 0.0 else 0.0))
        out[0] = (-a1 * s1 + a3 * s3 + gamma1 * k1 * u[0]) / A1
        out[1] = (-a2 * s2 + a4 * s4 + gamma2 * k2 * u[1]) / A2
        out[2] = (-a3 * s3 + (1.0 - gamma2) * k2 * u[1]) / A3
        out[3] = (-a4 * s4 + (1.0 - gamma1) * k1 * u[0]) / A4

    return deriv


_DERIV_FACTORIES = {
    "cstr": _cstr_deriv,
    "multistage_extraction": _extraction_deriv,
    "crystallization": _crystallization_deriv,
    "four_tank": _four_tank_deriv,
}

_cache: dict[str, object] = {}


def batch_rollout(model: ModelDescriptor):
    """Compiled rollout(x0, U_raw, D, dt, substeps) -> (B, N+1, n_x), or None."""
    if not HAVE_NUMBA or model.name not in _DERIV_FACTORIES:
        return None
    if model.name not in _cache:
        deriv = _DERIV_FACTORIES[model.name](model.params)
        _cache[model.name] = _make_rollout(deriv, model.n_x)
    return _cache[model.name]
