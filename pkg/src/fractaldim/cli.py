"""Command line: stationary, dimension, unfold, rscc, validate.

Primary outputs depend only on the config and the seed.  Anything
run-specific (timings, thread count, creation time) goes to manifest.json,
which also lists every output file with its sha256.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import logging
import os
import platform
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .config import SystemConfig, parse_sequence, sequence_from_dict
from .dimension import (box_dimension, dimension_formula, entropy_estimate, exact_dimensionality_test,
                        lyapunov, projection_entropy)
from .errors import CombinatorialBlowup, FractalError, SymbolOutOfAlphabet, TailUncertified, ValidationError
from .ifs import code_point, check_non_accumulation
from .measures import (RefinedMeasure, chaos_ensemble, chaos_game, chaos_game_chains, gibbs_approximation,
                       ks_distance, stationary_measure, two_sided_gibbs)
from .rscc import (FiniteRSCC, UrnScheme, empirical_frequency, ifs_to_rscc, simulate_chain, smale_to_rscc,
                   transfer_probability_mn, transfer_probability_mn_states)
from .symbolic import Sequence, TwoSidedSequence
from .unfolding import (MaximalSmaleSystem, fiber_dimension, fiber_fractal_sample, psi_s, smale_project,
                        summability_bound)
from .weights import potential_from_weights

log = logging.getLogger("fractaldim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
MANIFEST = "manifest.json"


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command, cfg, args):
        self.command = command
        self.cfg = cfg
        self.args = args
        self.out = args.out
        self.files = []
        self.timings = {}
        os.makedirs(self.out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    @contextmanager
    def timed(self, label):
        t0 = time.perf_counter()
        yield
        self.timings[label] = round(time.perf_counter() - t0, 6)

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump({**obj, "manifest": MANIFEST}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def finish(self):
        import scipy

        def sha(name):
            with open(os.path.join(self.out, name), "rb") as fh:
                return hashlib.sha256(fh.read()).hexdigest()

        man = {
            "command": self.command,
            "config_path": self.cfg.path,
            "config_sha256": self.cfg.sha256(),
            "seed": self.cfg.seed,
            "threads": self.args.threads,
            "argv": self.args.argv,
            "versions": {"fractaldim": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "timings_s": self.timings,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "outputs": {name: sha(name) for name in self.files},
        }
        with open(os.path.join(self.out, MANIFEST), "w") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg, args):
    run = Run("validate", cfg, args)
    sysd = cfg.system
    x = code_point(sysd, Sequence.constant(1))
    run.write_json("validate.json", {
        "valid": True,
        "N": sysd.N,
        "dim": sysd.dim,
        "has_weights": cfg.weights is not None,
        "non_accumulation_at_fixed_point_1": bool(check_non_accumulation(sysd, x)),
    })
    with open(run.path("config.normalized.json"), "w") as fh:
        fh.write(cfg.emit())
    run.finish()
    print(f"config ok: N={sysd.N}, dim={sysd.dim}")
    return EXIT_OK


def _need_weights(cfg):
    if cfg.weights is None:
        raise ValidationError("this command needs a 'weights' section")
    return cfg.weights


def cmd_stationary(cfg, args):
    run = Run("stationary", cfg, args)
    sec = cfg.sections["stationary"]
    res = args.resolution or sec["resolution"]
    n_steps = args.steps or sec["n_steps"]
    sysd, w = cfg.system, _need_weights(cfg)
    with run.timed("grid"):
        grid = stationary_measure(sysd, w, res, sec["tol_tv"], sec["max_iter"])
    with run.timed("chaos_game"):
        emp = chaos_game_chains(sysd, w, sec["chains"], n_steps, sec["burn_in"], cfg.seed, args.threads)
    grid.to_csv(run.path("stationary_grid.csv"))
    if sysd.dim == 2:
        grid.to_pgm(run.path("stationary_density.pgm"))
    run.write_csv("convergence.csv", ["iteration", "tv_change"],
                  [[k, repr(float(v))] for k, v in enumerate(grid.info["history"], 1)])
    emp.to_jsonl(run.path("chaos_game.jsonl"))
    summary = {k: grid.info[k] for k in ("iterations", "residual_tv", "attractivity_tv", "attractive")}
    summary.update(resolution=res, n_points=len(emp), chains=sec["chains"], seed=cfg.seed)
    if sysd.dim == 1:
        summary["ks_distance"] = ks_distance(grid, emp)
    else:
        idx = grid.bin_index(emp.points)
        hist = np.bincount(idx, minlength=grid.mass.size) / len(emp)
        summary["histogram_tv"] = 0.5 * float(np.abs(hist - grid.mass.ravel()).sum())
    run.write_json("stationary.json", summary)
    run.finish()
    cross = summary.get("ks_distance", summary.get("histogram_tv"))
    print(f"stationary: {summary['iterations']} iterations, residual {summary['residual_tv']:.3g}, "
          f"cross-check {cross:.4g}")
    return EXIT_OK


def cmd_dimension(cfg, args):
    run = Run("dimension", cfg, args)
    sec = cfg.sections["dimension"]
    sysd, w = cfg.system, _need_weights(cfg)
    depth = args.depth or sec["gibbs_depth"]
    with run.timed("symbolic"):
        psi = potential_from_weights(sysd, w)
        mu = gibbs_approximation(psi, depth)
        ent = entropy_estimate(mu)
        traj = chaos_game(sysd, w, sec["trajectory_steps"], 100, cfg.seed)
        lyap = lyapunov(sysd, mu, traj)
        chi = lyap.value
        pe = projection_entropy(sysd, mu, h_sigma=ent.h)
        formula = dimension_formula(pe.h, chi)
    with run.timed("local"):
        # refined ball masses visit ~ (sum_i |phi_i'|)^k nodes at depth k
        contraction_sum = sum(f.sup_deriv(sysd.V) for f in sysd.maps)
        if sysd.dim == 1 and contraction_sum <= 1 + 1e-9:
            st = cfg.sections["stationary"]
            grid = stationary_measure(sysd, w, st["resolution"], st["tol_tv"], st["max_iter"])
            target = RefinedMeasure(sysd, w, grid)
        else:
            target = chaos_ensemble(sysd, w, sec["ensemble_chains"], sec["ensemble_steps"], seed=cfg.seed)
        report = exact_dimensionality_test(target, args.points or sec["n_points"], seed=cfg.seed,
                                           threads=args.threads, std_tol=sec["std_tol"], r2_tol=sec["r2_tol"])
    with run.timed("box"):
        n_ch = max(1, sec["box_points"] // 1000)
        cloud = chaos_ensemble(sysd, w, n_ch, 1050, burn_in=50, seed=cfg.seed)
        report.box_dim = box_dimension(cloud.points)
    report.formula_dim = formula
    report.extra.update(
        h_sigma=ent.h,
        h_S=pe.h,
        overlap_entropy_drop=bool(pe.h < ent.h - 0.02),
        chi=chi,
        chi_cylinder=lyap.cylinder,
        chi_trajectory=lyap.trajectory,
        upper_bound=ent.h / chi,
        gibbs_depth=depth,
        entropy_increments=ent.increments,
    )
    report.to_csv(run.path("local_dimensions.csv"))
    run.write_csv("projection_entropy.csv", ["delta", "h_S"],
                  [[repr(float(d)), repr(float(v))] for d, v in zip(pe.deltas, pe.values)])
    run.write_json("dimension.json", report.summary())
    run.finish()
    flag = " (h_S < h_sigma: overlaps lose entropy)" if report.extra["overlap_entropy_drop"] else ""
    print(f"dimension: formula {formula:.4f}, local mean {report.mean_dim:.4f} +- {report.std_dim:.4f}, "
          f"passed={report.passed}{flag}")
    return EXIT_OK


def _omega(cfg, args):
    if args.omega:
        return parse_sequence(args.omega)
    return sequence_from_dict(cfg.sections["unfold"]["omega"])


def cmd_unfold(cfg, args):
    run = Run("unfold", cfg, args)
    sec = cfg.sections["unfold"]
    sysd = cfg.system
    omega = _omega(cfg, args).check_alphabet(sysd.N)
    K = args.K or sec["K"]
    depth = args.depth or sec["depth"]
    s = args.s or sec["s"]
    x = code_point(sysd, omega)
    if not check_non_accumulation(sysd, x):
        raise ValidationError(f"non-accumulation fails at pi(omega) = {x}; unfolding not attempted")
    smax = MaximalSmaleSystem(sysd, K, sec["n_max"])
    with run.timed("indices"):
        idx = smax.indices(omega)
        fibers = [smax.fiber_map(omega, i) for i in range(1, smax.K + 1)]
    with run.timed("sample"):
        sample = fiber_fractal_sample(smax, omega, depth, s=s)
    with run.timed("fiber_dimension"):
        fd = fiber_dimension(smax, s, sec["gibbs_depth"], omega, sample_depth=depth)
    sums, geo = summability_bound(smax, s)
    psi = psi_s(smax, s)
    out = idx.to_json()
    out["fibers"] = [{"symbol": f.symbol, "word": list(f.word), "image": f.image.to_dict(),
                      "deriv_bound": f.deriv_bound} for f in fibers]
    out["fiber_osc"] = smax.check_fiber_osc()
    out["deriv_bounds_ok"] = smax.check_deriv_bounds()
    run.write_json("unfold_indices.json", out)
    sample.to_csv(run.path("fiber_points.csv"))
    run.write_json("summability.json", {
        "s": s,
        "psi_s_at_past_1_omega": psi.value(TwoSidedSequence(Sequence.constant(1), omega)),
        "partial_sums": sums.tolist(),
        "geometric_bound": geo.tolist(),
        "dominated": bool(np.all(sums <= geo * (1 + 1e-12))),
    })
    run.write_json("fiber_dimension.json", {**fd.report, "agree_within_0.05": abs(fd.hd - fd.local_estimate) <= 0.05})
    run.finish()
    print(f"unfold: n = {list(idx.n)}, hd {fd.hd:.4f}, local {fd.local_estimate:.4f}")
    return EXIT_OK


def _build_rscc(cfg, sec):
    """(rscc, w0, extras) for the configured kind."""
    kind = sec["kind"]
    if kind == "urn":
        urn = UrnScheme(sec["a"], sec["d"])
        return urn.rscc(), tuple(sec["w0"] or urn.a), {}
    if kind == "finite":
        fin = FiniteRSCC.random(sec["states"], sec["indices"], cfg.seed)
        return fin.rscc(), int(sec["w0"] or 0), {}
    if kind == "ifs":
        w0 = cfg.system.V.center if sec["w0"] is None else sec["w0"]
        return ifs_to_rscc(cfg.system, _need_weights(cfg)), w0, {}
    if kind == "smale":
        smax = MaximalSmaleSystem(cfg.system, cfg.sections["unfold"]["K"], cfg.sections["unfold"]["n_max"])
        mu = two_sided_gibbs(psi_s(smax, sec["s"]), sec["past"], sec["future"])
        omega = sequence_from_dict(cfg.sections["unfold"]["omega"])
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1])))
        past = Sequence.periodic(tuple(int(a) for a in rng.integers(1, smax.K + 1, size=3)))
        tau = TwoSidedSequence(past, omega)
        m0 = 40
        x0, _ = smale_project(smax, tau, m0)
        return smale_to_rscc(smax, mu), (omega, x0), {"smax": smax, "tau": tau, "m0": m0}
    raise ValidationError(f"unknown rscc kind {kind!r}")


def _smale_table(r, w0, extras, T, seed):
    smax, tau, m0 = extras["smax"], extras["tau"], extras["m0"]
    tr = simulate_chain(r, w0, T, seed, 0)
    rows = []
    for k, (_, x) in enumerate(tr.states, 1):
        tau = tau.shift()
        ref, rad = smale_project(smax, tau, m0 + k)
        diff = abs(x - ref)
        tol = 2 * smax.lam ** (-(m0 + k)) * smax.sys.V.diam + 1e-12
        rows.append([k, repr(float(np.real(x))), repr(float(np.real(ref))), repr(float(diff)), repr(tol),
                     "pass" if diff <= tol else "fail"])
    return rows


def cmd_rscc(cfg, args):
    run = Run("rscc", cfg, args)
    sec = dict(cfg.sections["rscc"])
    if args.kind:
        sec["kind"] = args.kind
    for k in ("n", "m", "chains"):
        v = getattr(args, k)
        if v:
            sec[k] = v
    r, w0, extras = _build_rscc(cfg, sec)
    n, m, chains = sec["n"], sec["m"], sec["chains"]
    A = [tuple(a) for a in sec["A"]]
    if any(len(a) != m for a in A):
        raise ValidationError(f"every word of A must have length m={m}")
    if sec["kind"] == "smale":
        # indices are past words; A constrains their symbol at position -1
        Aset = set(A)
        A_pred = lambda word: tuple(p[-1] for p in word) in Aset
        key = lambda st: (st[0].key(), float(st[1]))
    else:
        A_pred = A
        key = lambda st: st
    with run.timed("exact"):
        path = transfer_probability_mn(r, w0, n, m, A_pred)
        states = transfer_probability_mn_states(r, w0, n, m, A_pred, key=key)
    with run.timed("empirical"):
        p_emp, hits = empirical_frequency(r, w0, n, m, A_pred, chains, cfg.seed)
    sigma = float(np.sqrt(max(path.value * (1 - path.value), 1e-300) / chains))
    within = abs(p_emp - path.value) <= 3 * sigma + path.halfwidth
    run.write_csv("frequencies.csv",
                  ["n", "m", "A", "exact_path", "exact_states", "exact_kind", "empirical", "hits", "chains",
                   "sigma", "within_3sigma"],
                  [[n, m, " ".join("".join(map(str, a)) for a in A), repr(path.value), repr(states),
                    "exact" if path.exact else "monte_carlo", repr(p_emp), hits, chains, repr(sigma), within]])
    T = sec["T"]
    with open(run.path("trajectories.jsonl"), "w") as fh:
        for c in range(min(sec["save_chains"], chains)):
            tr = simulate_chain(r, w0, T, cfg.seed, c)
            fh.write(json.dumps({"chain": c, "n": 0, "index": None, "state": r.encode(w0)}) + "\n")
            for k, (x, w) in enumerate(zip(tr.indices, tr.states), 1):
                fh.write(json.dumps({"chain": c, "n": k, "index": r.index_encode(x), "state": r.encode(w)}) + "\n")
    summary = {"kind": sec["kind"], "n": n, "m": m, "exact": path.value, "exact_states": states,
               "routes_agree": abs(path.value - states) <= 1e-12, "empirical": p_emp, "within_3sigma": within}
    if sec["kind"] == "ifs":
        cg = chaos_game(cfg.system, cfg.weights, T, 0, cfg.seed, x0=w0)
        tr = simulate_chain(r, w0, T, cfg.seed, 0)
        summary["bitwise_match_chaos_game"] = bool(
            np.array_equal(cg.points, np.array(tr.states)) and np.array_equal(cg.symbols, np.array(tr.indices)))
    if sec["kind"] == "smale":
        rows = _smale_table(r, w0, extras, T, cfg.seed)
        run.write_csv("u_consistency.csv", ["step", "chain_x", "projection_x", "abs_diff", "tolerance", "status"],
                      rows)
        summary["u_consistency_all_pass"] = all(row[-1] == "pass" for row in rows)
    run.write_json("rscc.json", summary)
    run.finish()
    print(f"rscc[{sec['kind']}]: exact {path.value:.6g}, empirical {p_emp:.6g}, within 3 sigma: {within}")
    return EXIT_OK


COMMANDS = {"stationary": cmd_stationary, "dimension": cmd_dimension, "unfold": cmd_unfold,
            "rscc": cmd_rscc, "validate": cmd_validate}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON system config")
    common.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (overrides config)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fractaldim", description="Overlapping conformal IFS toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    st = sub.add_parser("stationary", parents=[common], help="stationary measure: grid iteration and chaos game")
    st.add_argument("--resolution", type=int)
    st.add_argument("--steps", type=int)
    dm = sub.add_parser("dimension", parents=[common], help="entropy, Lyapunov exponent and local dimensions")
    dm.add_argument("--points", type=int)
    dm.add_argument("--depth", type=int, help="Gibbs cylinder depth")
    un = sub.add_parser("unfold", parents=[common], help="maximal Smale system along omega")
    un.add_argument("--omega", help="'1,2' = (1 2)^inf, '3;1' = 3 (1)^inf")
    un.add_argument("--K", type=int)
    un.add_argument("--depth", type=int)
    un.add_argument("--s", type=float)
    rs = sub.add_parser("rscc", parents=[common], help="chains with complete connections")
    rs.add_argument("--kind", choices=["urn", "finite", "ifs", "smale"])
    rs.add_argument("--n", type=int)
    rs.add_argument("--m", type=int)
    rs.add_argument("--chains", type=int)
    sub.add_parser("validate", parents=[common], help="parse and check a config")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        cfg = SystemConfig.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValidationError, SymbolOutOfAlphabet, TailUncertified) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CombinatorialBlowup as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except FractalError as exc:
        print(f"numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
