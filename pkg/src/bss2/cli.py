"""Scenario-driven command line front end.

Scenarios are JSON files naming a registered source model, a nonlinearity,
a mixing matrix (explicit or seeded random), step size, iteration budget,
seed list and an expectation-engine configuration.  Subcommands:

    bss simulate <scenario>      per-seed trajectory CSVs + run summary
    bss stability <scenario>     equilibrium, F, G, Routh-Hurwitz verdict
    bss separability <scenario>  separable / non-separable classification
    bss reproduce fig2|fig3|fig4 contour + trajectory studies

Exit codes: 0 ok, 1 parse error, 2 divergence during simulation,
3 missing model capability.  BSS_THREADS caps the per-seed worker pool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import adaptive, meanfield, nonlinearity, sources, stability

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_DIVERGED = 2
EXIT_CAPABILITY = 3


class ScenarioError(ValueError):
    pass


def build_model(spec: dict) -> sources.SourceModel:
    spec = dict(spec)
    name = spec.pop("name", None)
    if name == "gaussian_pair":
        return sources.make_gaussian_pair(spec.get("var1", 1.0), spec.get("var2", 1.0))
    if name == "gaussian_scale_mixture":
        return sources.make_gaussian_scale_mixture()
    if name == "laplace_pair":
        return sources.make_laplace_pair(spec.get("var1", 1.0), spec.get("var2", 1.0))
    if name == "uniform_pair":
        return sources.make_uniform_pair(spec.get("var1", 1.0), spec.get("var2", 1.0))
    if name == "polar":
        return sources.make_polar_dependent(spec.get("d", 0.0))
    if name == "contaminated":
        def pair(key):
            items = spec.get(key)
            if not isinstance(items, list) or len(items) != 2:
                raise ScenarioError(f"contaminated model needs a 2-item {key!r} list")
            return tuple(
                sources.marginal_by_name(m["name"], m.get("var", 1.0)) for m in items
            )
        return sources.make_contaminated(
            spec.get("epsilon", 0.0), pair("nominal"), pair("alternative")
        )
    if name == "elliptical":
        omega, omega_prime = sources.named_omega(spec.get("omega_name", "gaussian"))
        return sources.make_elliptical(
            spec.get("K1", 1.0), spec.get("K2", 1.0), omega, omega_prime
        )
    raise ScenarioError(f"unknown model {name!r}")


def build_h(spec: dict, model=None) -> nonlinearity.HMatrix:
    name = spec.get("name")
    if name == "classical_cubic":
        return nonlinearity.make_classical_cubic()
    if name == "absvalue":
        return nonlinearity.make_absvalue()
    if name == "classical":
        return nonlinearity.make_classical(nonlinearity.odd_pair(spec.get("g", "cubic")))
    if name == "score_based":
        if model is None:
            raise ScenarioError("score_based H needs the scenario model")
        return nonlinearity.make_score_based(model, spec.get("diag_offset", False))
    raise ScenarioError(f"unknown H matrix {name!r}")


def build_engine(spec: dict | None) -> meanfield.ExpectationEngine:
    spec = spec or {}
    mode = spec.get("mode", "quad")
    if mode == "mc":
        return meanfield.ExpectationEngine(
            mode="mc", n_samples=spec.get("n", 200_000), seed=spec.get("seed", 0)
        )
    return meanfield.ExpectationEngine(mode="quad", nodes=spec.get("nodes", 64))


@dataclass
class Scenario:
    model_spec: dict
    h_spec: dict
    mu: float = 1e-4
    n_steps: int = 200_000
    seeds: list = field(default_factory=lambda: list(range(10)))
    thinning: int = 100
    mixing: dict = field(default_factory=lambda: {"seed": 7})
    engine_spec: dict = field(default_factory=dict)
    out_dir: str = "out"
    convergence_tol: float = 0.15

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            raw = json.load(fh)
        if "model" not in raw or "h" not in raw:
            raise ScenarioError("scenario must define 'model' and 'h'")
        return Scenario(
            model_spec=raw["model"],
            h_spec=raw["h"],
            mu=raw.get("mu", 1e-4),
            n_steps=raw.get("n_steps", 200_000),
            seeds=raw.get("seeds", list(range(10))),
            thinning=raw.get("thinning", 100),
            mixing=raw.get("mixing", {"seed": 7}),
            engine_spec=raw.get("expectation", {}),
            out_dir=raw.get("out_dir", "out"),
            convergence_tol=raw.get("convergence_tol", 0.15),
        )

    def mixing_matrix(self) -> np.ndarray:
        if "matrix" in self.mixing:
            return adaptive.check_mixing(np.array(self.mixing["matrix"], dtype=float))
        return adaptive.random_mixing(self.mixing.get("seed", 7))


def _pool_size() -> int:
    cap = os.environ.get("BSS_THREADS")
    if cap:
        return max(1, int(cap))
    return min(8, os.cpu_count() or 1)


@dataclass
class RunSummary:
    final_indices: list
    converged_fraction: float
    mean_index: float
    min_index: float
    max_index: float
    wall_time: float
    any_diverged: bool

    def text(self) -> str:
        lines = [
            "final_indices: " + " ".join("%.6g" % v for v in self.final_indices),
            f"converged_fraction: {self.converged_fraction:.3f}",
            f"mean_index: {self.mean_index:.6g}",
            f"min_index: {self.min_index:.6g}",
            f"max_index: {self.max_index:.6g}",
            f"wall_time_s: {self.wall_time:.2f}",
            f"any_diverged: {self.any_diverged}",
        ]
        return "\n".join(lines)


def simulate_scenario(sc: Scenario):
    model = build_model(sc.model_spec)
    H = build_h(sc.h_spec, model)
    A = sc.mixing_matrix()
    t0 = time.time()

    def one(seed):
        return seed, adaptive.run(model, A, H, sc.mu, sc.n_steps, seed, sc.thinning)

    with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
        results = dict(pool.map(one, sc.seeds))
    trajs = [results[s] for s in sc.seeds]

    finals = [tr.final_index for tr in trajs]
    conv = sum(1 for v in finals if v < sc.convergence_tol) / len(finals)
    summary = RunSummary(
        final_indices=finals,
        converged_fraction=conv,
        mean_index=float(np.mean(finals)),
        min_index=float(np.min(finals)),
        max_index=float(np.max(finals)),
        wall_time=time.time() - t0,
        any_diverged=any(tr.diverged for tr in trajs),
    )
    return trajs, summary


def cmd_simulate(args) -> int:
    try:
        sc = Scenario.load(args.scenario)
        os.makedirs(sc.out_dir, exist_ok=True)
        trajs, summary = simulate_scenario(sc)
    except (ScenarioError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except sources.CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    for seed, tr in zip(sc.seeds, trajs):
        tr.to_csv(os.path.join(sc.out_dir, f"trajectory_seed{seed}.csv"))
    with open(os.path.join(sc.out_dir, "summary.txt"), "w") as fh:
        fh.write(summary.text() + "\n")
    print(summary.text())
    return EXIT_DIVERGED if summary.any_diverged else EXIT_OK


def cmd_stability(args) -> int:
    try:
        sc = Scenario.load(args.scenario)
        model = build_model(sc.model_spec)
        H = build_h(sc.h_spec, model)
        engine = build_engine(sc.engine_spec)
        report = stability.stability_report(H, model, engine)
    except (ScenarioError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except sources.CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    os.makedirs(sc.out_dir, exist_ok=True)
    with open(os.path.join(sc.out_dir, "stability.txt"), "w") as fh:
        fh.write(report.text() + "\n")
    with open(os.path.join(sc.out_dir, "stability.csv"), "w") as fh:
        fh.write(report.CSV_HEADER + "\n" + report.csv_row() + "\n")
    print(report.text())
    return EXIT_OK


def cmd_separability(args) -> int:
    try:
        sc = Scenario.load(args.scenario)
        model = build_model(sc.model_spec)
        engine = build_engine(sc.engine_spec)
        verdict = stability.classify_separability(model, engine)
    except (ScenarioError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except sources.CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    os.makedirs(sc.out_dir, exist_ok=True)
    with open(os.path.join(sc.out_dir, "separability.txt"), "w") as fh:
        fh.write(verdict.text() + "\n")
    with open(os.path.join(sc.out_dir, "separability.csv"), "w") as fh:
        fh.write(verdict.CSV_HEADER + "\n" + verdict.csv_row() + "\n")
    print(verdict.text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Figure studies
# ---------------------------------------------------------------------------

_FIGURES = {
    "fig2": {
        "model": {"name": "gaussian_scale_mixture"},
        "hs": ["classical_cubic", "absvalue"],
        "mu": 1e-4,
        "n_steps": 400_000,
    },
    "fig3": {
        "model": {"name": "polar", "d": 1.0},
        "hs": ["classical_cubic"],
        "mu": 2e-4,
        "n_steps": 200_000,
    },
    "fig4": {
        "model": {"name": "polar", "d": 0.0},
        "hs": ["classical_cubic"],
        "mu": 2e-4,
        "n_steps": 200_000,
    },
}


def _contour_csv(model, path, n_grid=200, n_hist=1_000_000, seed=0):
    """Joint-density panel: analytic grid, or a 2-D histogram for sampler-only models."""
    if model.has_pdf:
        lim1 = (model.support[0] if model.support else (-4 * model.std[0], 4 * model.std[0]))
        lim2 = (model.support[1] if model.support else (-4 * model.std[1], 4 * model.std[1]))
        g1 = np.linspace(*lim1, n_grid)
        g2 = np.linspace(*lim2, n_grid)
        A, B = np.meshgrid(g1, g2, indexing="ij")
        F = model.pdf(A, B)
    else:
        s = model.sample(n_hist, seed)
        F, e1, e2 = np.histogram2d(s[:, 0], s[:, 1], bins=n_grid, density=True)
        g1 = 0.5 * (e1[:-1] + e1[1:])
        g2 = 0.5 * (e2[:-1] + e2[1:])
        A, B = np.meshgrid(g1, g2, indexing="ij")
    with open(path, "w") as fh:
        fh.write("s1,s2,pdf\n")
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                fh.write("%.8g,%.8g,%.8g\n" % (A[i, j], B[i, j], F[i, j]))
    return g1, g2, F


def _plot_trajectory(tr, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["c11", "c12", "c21", "c22"]
    series = [tr.C[:, 0, 0], tr.C[:, 0, 1], tr.C[:, 1, 0], tr.C[:, 1, 1]]
    for lab, y in zip(labels, series):
        ax.plot(tr.t, y, label=lab)
    ax.plot(tr.t, tr.index, "k--", label="index")
    ax.set_xlabel("iteration")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_contours(g1, g2, F, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    finite = np.isfinite(F)
    levels = np.quantile(F[finite & (F > 0)], np.linspace(0.5, 0.98, 9))
    ax.contour(g1, g2, F.T, levels=np.unique(levels))
    ax.set_xlabel("s1")
    ax.set_ylabel("s2")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_reproduce(args) -> int:
    spec = _FIGURES.get(args.figure)
    if spec is None:
        print(f"error: unknown figure {args.figure!r}", file=sys.stderr)
        return EXIT_PARSE
    out_dir = args.out_dir or f"out_{args.figure}"
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(spec["model"])
    seed = args.seed if args.seed is not None else 0
    A = adaptive.random_mixing(seed + 7)

    g1, g2, F = _contour_csv(model, os.path.join(out_dir, "pdf_contour.csv"), seed=seed)
    if not args.no_plots:
        _plot_contours(g1, g2, F, os.path.join(out_dir, "pdf_contour.png"))
    for h_name in spec["hs"]:
        H = build_h({"name": h_name}, model)
        tr = adaptive.run(model, A, H, spec["mu"], spec["n_steps"], seed)
        tr.to_csv(os.path.join(out_dir, f"trajectory_{h_name}.csv"))
        if not args.no_plots:
            _plot_trajectory(tr, os.path.join(out_dir, f"trajectory_{h_name}.png"))
        print(
            f"{args.figure} {h_name}: final index {tr.final_index:.4f}"
            + (" (diverged)" if tr.diverged else "")
        )
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bss",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run a scenario, write trajectory CSVs")
    ps.add_argument("scenario")
    ps.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("stability", help="equilibrium + F/G + Routh-Hurwitz verdict")
    pt.add_argument("scenario")
    pt.set_defaults(func=cmd_stability)

    pp = sub.add_parser("separability", help="separable / non-separable classification")
    pp.add_argument("scenario")
    pp.set_defaults(func=cmd_separability)

    pr = sub.add_parser("reproduce", help="figure-style contour + trajectory studies")
    pr.add_argument("figure", choices=sorted(_FIGURES))
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out-dir", default=None)
    pr.add_argument("--no-plots", action="store_true")
    pr.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
