"""Shared generators and oracles for the test suite."""

import itertools

import numpy as np
import sympy

from extensor.smoothexpr import evaluate


def random_expression(rng, depth=5, names=("x1", "x2", "x3")):
    """Source text of a random smooth expression, finite everywhere on the reals."""
    if depth <= 1 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return names[int(rng.integers(len(names)))]
        return repr(round(float(rng.uniform(-2, 2)), 3))
    a = lambda: random_expression(rng, depth - 1, names)  # noqa: E731
    k = int(rng.integers(12))
    if k == 0:
        return f"({a()} + {a()})"
    if k == 1:
        return f"({a()} - {a()})"
    if k == 2:
        return f"({a()} * {a()})"
    if k == 3:
        return f"{a()} / (2 + cos({a()}))"
    if k == 4:
        return f"sin({a()})"
    if k == 5:
        return f"cos({a()})"
    if k == 6:
        return f"exp(sin({a()}))"
    if k == 7:
        return f"log(1 + ({a()})^2)"
    if k == 8:
        return f"sqrt(1.5 + sin({a()}))"
    if k == 9:
        return f"atan2({a()}, 2 + cos({a()}))"
    if k == 10:
        return f"tan(0.5 * sin({a()}))"
    return f"({a()})^2"


def fd_gradient(e, env, seeds, h=1e-5):
    g = np.zeros(len(seeds))
    for k, name in enumerate(seeds):
        hi, lo = dict(env), dict(env)
        step = h * max(1.0, abs(env[name]))
        hi[name] += step
        lo[name] -= step
        g[k] = (evaluate(e, hi) - evaluate(e, lo)) / (2 * step)
    return g


def fd_hessian(e, env, seeds, h=1e-4):
    m = len(seeds)
    H = np.zeros((m, m))

    def at(shifts):
        p = dict(env)
        for name, d in shifts:
            p[name] += d
        return evaluate(e, p)

    for i, a in enumerate(seeds):
        for j, b in enumerate(seeds):
            if i == j:
                H[i, i] = (at([(a, h)]) - 2 * evaluate(e, env) + at([(a, -h)])) / h**2
            else:
                H[i, j] = (at([(a, h), (b, h)]) - at([(a, h), (b, -h)]) - at([(a, -h), (b, h)]) + at([(a, -h), (b, -h)])) / (
                    4 * h * h
                )
    return H


def rel_error(got, want):
    """Largest absolute error, relative to the larger of the oracle's scale and 1."""
    got, want = np.asarray(got, float), np.asarray(want, float)
    return float(np.max(np.abs(got - want)) / max(1.0, float(np.max(np.abs(want)))))


def fd_field_partials(f, q, h=1e-6):
    """Central differences of a field over every flattened bundle coordinate."""
    spec = f.spec
    x0 = q.flatten()
    cols = []
    for k in range(x0.size):
        hi, lo = x0.copy(), x0.copy()
        hi[k] += h
        lo[k] -= h
        cols.append((f.evaluate(spec.unflatten(hi)).array - f.evaluate(spec.unflatten(lo)).array) / (2 * h))
    return np.stack(cols, axis=-1)


def riemann_oracle(metric, coords):
    """R^k_hij = d_i G^k_jh - d_j G^k_ih + G^k_ia G^a_jh - G^k_ja G^a_ih from a metric, with sympy."""
    n = len(coords)
    g = sympy.Matrix(metric)
    gi = g.inv()
    G = [[[sum(gi[k, l] * (sympy.diff(g[l, j], coords[i]) + sympy.diff(g[l, i], coords[j]) - sympy.diff(g[i, j], coords[l]))
               for l in range(n)) / 2 for i in range(n)] for j in range(n)] for k in range(n)]  # G[k][j][i]
    R = {}
    for k, h, i, j in itertools.product(range(n), repeat=4):
        e = sympy.diff(G[k][j][h], coords[i]) - sympy.diff(G[k][i][h], coords[j])
        e += sum(G[k][i][a] * G[a][j][h] - G[k][j][a] * G[a][i][h] for a in range(n))
        R[k, h, i, j] = sympy.lambdify(coords, sympy.simplify(e))
    return R


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
