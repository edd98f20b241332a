"""Optional figures rendered next to the CSV outputs.

Only imported when figures are requested; the CSVs stay the primary
output and every figure is drawn from data that is also written there.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def trajectory(points, path, axes=(0, 2)):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        P = np.asarray(points)
        if P.shape[1] == 1:
            ax.plot(P[:, 0], lw=0.6)
            ax.set_xlabel("index")
            ax.set_ylabel("x0")
        else:
            i, j = axes
            ax.plot(P[:, i], P[:, j], lw=0.3)
            ax.set_xlabel(f"x{i}")
            ax.set_ylabel(f"x{j}")
        return _save(fig, path)


def lyapunov_history(history, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        H = np.asarray(history)
        for k in range(1, H.shape[1]):
            ax.plot(H[:, 0], H[:, k], label=rf"$\lambda_{k}$")
        ax.set_xlabel("t")
        ax.set_ylabel("running estimate")
        ax.legend()
        return _save(fig, path)


def rate_curves(times, curves, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for name, v in curves.items():
            ax.plot(times, v, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("log quantity")
        ax.legend()
        return _save(fig, path)


def stability(eps, distances, floors, path, analytic=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        eps = np.asarray(eps)
        ax.errorbar(eps, distances, yerr=floors, marker="o", capsize=3, label="d(mu_eps, mu)")
        if analytic is not None:
            ax.plot(eps, analytic, "k--", label="closed form")
        ax.set_xscale("log")
        ax.set_xlabel("eps")
        ax.set_ylabel("weak distance")
        ax.invert_xaxis()
        ax.legend()
        return _save(fig, path)


def avoidance(eps, probs, lo, hi, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        probs = np.asarray(probs)
        yerr = np.vstack([probs - np.asarray(lo), np.asarray(hi) - probs])
        ax.errorbar(eps, probs, yerr=yerr, marker="o", capsize=3)
        ax.set_xscale("log")
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.set_xlabel("eps")
        ax.set_ylabel("P(near Sing)")
        return _save(fig, path)


def shadow_deviation(ns, deviations, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.loglog(ns, deviations, "o", alpha=0.4)
        ax.set_xlabel("n")
        ax.set_ylabel("max deviation")
        return _save(fig, path)


def rectangle_ratios(etas, ratios, groups, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        etas, ratios, groups = map(np.asarray, (etas, ratios, groups))
        for g in np.unique(groups):
            sel = groups == g
            ax.plot(etas[sel], ratios[sel], "o-", ms=3)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("eta")
        ax.set_ylabel("mass / mes_u")
        return _save(fig, path)


def marginals(mu, path):
    with plt.rc_context(RC):
        m = mu.partition.box.dimension
        fig, axs = plt.subplots(1, m, figsize=(3.0 * m, 2.6), squeeze=False)
        for k in range(m):
            b = mu.partition.box
            edges = np.linspace(b.lo[k], b.hi[k], mu.partition.resolution[k] + 1)
            axs[0, k].stairs(mu.marginal(k), edges)
            axs[0, k].set_xlabel(f"x{k}")
        return _save(fig, path)
