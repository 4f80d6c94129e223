"""Independent reference computations used to check the package.

Nothing here imports the code under test; each routine is the slow, obvious
version of the quantity it checks.
"""

import math

import numpy as np


def central_diff(f, x, h=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def central_diff4(f, x, h=1e-3):
    """Fourth-order central differences; truncation O(h^4) allows a larger step, so less roundoff."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        vals = []
        for step in (2 * h, h, -h, -2 * h):
            flat[i] = old + step
            vals.append(f(x))
        flat[i] = old
        gf[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def jacobi_eigh(s, tol=1e-15, max_sweeps=100):
    """Eigenvalues and vectors of a symmetric matrix by cyclic two-sided Jacobi rotations."""
    a = np.array(s, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum((a - np.diag(np.diag(a))) ** 2)))
        if off <= tol * max(1.0, math.sqrt(float(np.sum(a * a)))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # the exact formula's limit; theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                sn = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = sn, -sn
                a = rot.T @ a @ rot
                v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def spectrum_oracle(z):
    """(sigma, kappa, d_eff) from the eigenvalues of Z^T Z or Z Z^T, whichever is smaller."""
    z = np.asarray(z, dtype=np.float64)
    gram = z.T @ z if z.shape[1] <= z.shape[0] else z @ z.T
    lam, _ = jacobi_eigh(gram)
    lam = np.clip(lam, 0.0, None)
    sigma = np.sqrt(lam)
    kappa = sigma[0] / sigma[-1] if sigma[-1] > 0 else math.inf
    d_eff = lam.sum() ** 2 / np.sum(lam**2)
    return sigma, kappa, d_eff


def brute_chamfer(a, b):
    """O(N*M) double loop, squared distances, mean per direction."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)

    def one_way(src, dst):
        total = 0.0
        for p in src:
            best = math.inf
            for q in dst:
                d = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2
                best = min(best, d)
            total += best
        return total / len(src)

    return one_way(a, b) + one_way(b, a)


def torus_mean_xy_radius(major, minor, n=20001):
    """Area-weighted mean of sqrt(x^2 + y^2) on a torus, by trapezoid quadrature.

    The area element is minor * (major + minor cos v) du dv; the integrand does
    not depend on u, so only the v integral is needed.
    """
    v = np.linspace(0.0, 2 * np.pi, n)
    rho = major + minor * np.cos(v)
    return float(np.trapezoid(rho * rho, v) / np.trapezoid(rho, v))


def gelu_ref(x):
    return x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def layernorm_ref(x, gain, bias, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((xi - mu) ** 2 for xi in x) / len(x)
    return [(xi - mu) / math.sqrt(var + eps) * g + b for xi, g, b in zip(x, gain, bias)]


def dense_ref(x, w, b):
    """Row vector x times matrix w plus b, written as explicit loops."""
    out = []
    for j in range(len(b)):
        s = b[j]
        for i in range(len(x)):
            s += x[i] * w[i][j]
        out.append(s)
    return out


def gram_term_ref(z):
    z = np.asarray(z, dtype=np.float64)
    b = z.shape[0]
    total = 0.0
    for i in range(b):
        for j in range(b):
            dot = sum(z[i, k] * z[j, k] for k in range(z.shape[1]))
            total += (dot - (1.0 if i == j else 0.0)) ** 2
    return total / b**2
