"""Minimal independent SDPA sparse reader and a cvxopt-based reference solve."""

import numpy as np


def read_sdpa(text):
    """Return (c, blocks) with blocks[k] = (size, F0, [F1..Fm]) as dense arrays."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and ln[0] not in '"*']
    vals = []
    pos = 0
    while len(vals) < 2:
        vals += [int(t) for t in lines[pos].replace(",", " ").split()]
        pos += 1
    m, nb = vals[0], vals[1]
    sizes = []
    while len(sizes) < nb:
        sizes += [int(float(t)) for t in lines[pos].replace(",", " ").replace("{", " ").replace("}", " ").split()]
        pos += 1
    c = []
    while len(c) < m:
        c += [float(t) for t in lines[pos].replace(",", " ").replace("{", " ").replace("}", " ").split()]
        pos += 1
    mats = [[np.zeros((abs(s), abs(s))) for _ in range(m + 1)] for s in sizes]
    for ln in lines[pos:]:
        k, b, i, j, v = ln.split()
        F = mats[int(b) - 1][int(k)]
        i, j = int(i) - 1, int(j) - 1
        F[i, j] = F[j, i] = float(v)
    return np.array(c), [(abs(s), ms[0], ms[1:]) for s, ms in zip(sizes, mats)]


def constant_of(text):
    for ln in text.splitlines():
        if ln.startswith("* herwc constant"):
            return float(ln.split()[-1])
    return 0.0


def cvxopt_solve(text):
    """Minimize c.x s.t. sum_i x_i F_i - F_0 PSD with cvxopt; returns the objective incl. constant."""
    from cvxopt import matrix, solvers

    c, blocks = read_sdpa(text)
    Gs, hs = [], []
    for n, F0, Fs in blocks:
        # cvxopt form: h - G x PSD, so h = -F0 and column i of G is -vec(F_i)
        Gs.append(matrix(np.column_stack([-F.ravel(order="F") for F in Fs])))
        hs.append(matrix(-F0))
    solvers.options.update({"show_progress": False, "abstol": 1e-10, "reltol": 1e-10, "feastol": 1e-10})
    res = solvers.sdp(matrix(c), Gs=Gs, hs=hs)
    return res["status"], float(res["primal objective"]) + constant_of(text)
