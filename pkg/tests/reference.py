"""Independent dense reference: Liouvillian matrix exponential, no RK4 and no package code."""
import numpy as np
from scipy.linalg import expm


def fixed_basis(n):
    return [(na, n - na) for na in range(n, -1, -1)]


def truncated_basis(n):
    return [s for m in range(n, -1, -1) for s in fixed_basis(m)]


def ladder(states):
    idx = {s: i for i, s in enumerate(states)}
    d = len(states)
    a, b = np.zeros((d, d)), np.zeros((d, d))
    for (na, nb), j in idx.items():
        if (na - 1, nb) in idx:
            a[idx[(na - 1, nb)], j] = np.sqrt(na)
        if (na, nb - 1) in idx:
            b[idx[(na, nb - 1)], j] = np.sqrt(nb)
    return a, b


def operators(n, truncated=False):
    full = truncated_basis(n)
    a, b = ladder(full)
    states = full if truncated else fixed_basis(n)
    sel = [full.index(s) for s in states]

    def r(m):
        return m[np.ix_(sel, sel)]

    ops = dict(
        hj=r(-(a.T @ b + b.T @ a)),
        na=r(a.T @ a),
        nb=r(b.T @ b),
        sminus=r(b.T @ a),
    )
    ops["splus"] = ops["sminus"].T
    ops["sz"] = (ops["na"] - ops["nb"]) / 2
    if truncated:
        ops["alpha"] = (a + b) / np.sqrt(2)
    return states, ops


def liouvillian(h, jumps):
    d = h.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, g in jumps:
        ldl = op.conj().T @ op
        out += g * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return out


def final_state(n, inp, noise, gamma, delta, t_hold, tbs1=np.pi / 4, tbs2=np.pi / 4, truncated=False,
                whole=False):
    states, ops = operators(n, truncated)
    d = len(states)
    psi = np.zeros(d, complex)
    if inp == "n0":
        psi[states.index((n, 0))] = 1
    elif inp == "tf":
        psi[states.index((n // 2, n // 2))] = 1
    else:
        psi[states.index((n, 0))] = psi[states.index((0, n))] = 2 ** -0.5
    rho = np.outer(psi, psi.conj()).reshape(-1)
    key = {"sz": "sz", "s-": "sminus", "s+": "splus", "alpha": "alpha"}.get(noise)
    jumps = [(ops[key], gamma)] if key and gamma else []
    hd = delta / 2 * (ops["na"] - ops["nb"])
    bs_jumps = jumps if whole else []
    rho = expm(liouvillian(ops["hj"], bs_jumps) * tbs1) @ rho
    rho = expm(liouvillian(hd, jumps) * t_hold) @ rho
    rho = expm(liouvillian(ops["hj"], bs_jumps) * tbs2) @ rho
    return rho.reshape(d, d), ops


def sensitivity(n, inp, noise, gamma, delta, t_hold, parity=False, h=1e-5, **kw):
    rho, ops = final_state(n, inp, noise, gamma, delta, t_hold, **kw)
    if parity:
        obs = np.diag((-1.0) ** np.rint(np.diag(ops["nb"])))
    else:
        obs = ops["nb"] - ops["na"]

    def mean(r):
        return np.trace(r @ obs).real

    up = final_state(n, inp, noise, gamma, delta + h, t_hold, **kw)[0]
    dn = final_state(n, inp, noise, gamma, delta - h, t_hold, **kw)[0]
    slope = (mean(up) - mean(dn)) / (2 * h)
    var = np.trace(rho @ obs @ obs).real - mean(rho) ** 2
    return np.sqrt(max(var, 0.0)) / abs(slope)
