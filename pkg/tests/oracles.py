"""Independent reference computations used to freeze expected values.

Pure Python/numpy, fixed-step RK4, no code shared with the package.
Run this file directly to regenerate the frozen constants.
"""
import math

import numpy as np

SIGMA, RHO, BETA = 10.0, 28.0, 8.0 / 3.0


def lorenz(x, s=SIGMA, r=RHO, b=BETA):
    return np.array([s * (x[1] - x[0]), x[0] * (r - x[2]) - x[1], x[0] * x[1] - b * x[2]])


def rk4_flow(fun, x, t, dt):
    n = int(round(t / dt))
    h = t / n
    x = np.array(x, dtype=float)
    for _ in range(n):
        k1 = fun(x)
        k2 = fun(x + 0.5 * h * k1)
        k3 = fun(x + 0.5 * h * k2)
        k4 = fun(x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _lorenz_var(s):
    # s = (x, y, z, 9 entries of the frame row-major); scalar arithmetic for speed
    x, y, z = s[0], s[1], s[2]
    out = [SIGMA * (y - x), x * (RHO - z) - y, x * y - BETA * z]
    J = ((-SIGMA, SIGMA, 0.0), (RHO - z, -1.0, -x), (y, x, -BETA))
    for i in range(3):
        for j in range(3):
            out.append(J[i][0] * s[3 + j] + J[i][1] * s[6 + j] + J[i][2] * s[9 + j])
    return out


def benettin_lorenz(x0=(1.0, 1.0, 1.0), t_transient=100.0, t_average=2000.0, dt=0.01, renorm_every=10):
    """Lyapunov spectrum by fixed-step RK4 + Gram-Schmidt renormalisation."""
    x = rk4_flow(lorenz, x0, t_transient, dt)
    s = list(x) + [1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0]
    n_steps = int(round(t_average / dt))
    sums = [0.0, 0.0, 0.0]
    h = dt
    for step in range(1, n_steps + 1):
        k1 = _lorenz_var(s)
        k2 = _lorenz_var([a + 0.5 * h * b for a, b in zip(s, k1)])
        k3 = _lorenz_var([a + 0.5 * h * b for a, b in zip(s, k2)])
        k4 = _lorenz_var([a + h * b for a, b in zip(s, k3)])
        s = [a + h / 6 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(s, k1, k2, k3, k4)]
        if step % renorm_every == 0:
            cols = [[s[3 + j], s[6 + j], s[9 + j]] for j in range(3)]
            ortho = []
            for j, v in enumerate(cols):
                for u in ortho:
                    d = sum(a * b for a, b in zip(v, u))
                    v = [a - d * b for a, b in zip(v, u)]
                nv = math.sqrt(sum(a * a for a in v))
                sums[j] += math.log(nv)
                ortho.append([a / nv for a in v])
            for j in range(3):
                s[3 + j], s[6 + j], s[9 + j] = ortho[j]
    return [v / t_average for v in sums]


if __name__ == "__main__":
    print("RK4 Lorenz X_1(1,1,1) at dt=1e-5:", repr(rk4_flow(lorenz, [1.0, 1.0, 1.0], 1.0, 1e-5).tolist()))
    print("Benettin spectrum:", benettin_lorenz())
