"""Command-line orchestration: config ingestion, experiment drivers, and
bit-stable JSON/CSV emission.

Commands
--------
spectrum    discrete eigenvalues (two grid levels, with deltas)
svals       singular values of S(k) over a real grid
bc          limit set of the eigenvalue flow of Qtilde(i eps)
kappa-scan  critical amplitudes kappa with refinement confirmation
classify    kernel-subspace analysis and singularity classification
asymptotics residual-decay fits for the S and S^{-1} expansions at z = 0
evolve      time-domain run, norms to CSV
growth      deflated remainder growth and verdict
validate    schema + physics checks only

Every JSON report carries the sha256 of the canonical config, the grid levels
used, and two-grid deltas for the reported quantities.  CSV columns are
documented in the README.  Exit codes: 0 success (an 'unresolved' verdict is
still success), 2 config/schema violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .discretize import CollisionKernel, Profile, build_grid
from .spectra import (
    SpectralSolver,
    ac_splitting_profile,
    admissible_delta_bound,
    asymptotics_fit,
    bc_set,
    classify_singularity,
    confirm_critical_kappas,
    discrete_spectrum_isotropic,
    eta_flow,
    kappa_scan,
    s_zero,
)
from .transport import (
    TransportSim,
    deflate_and_measure,
    eigenmode_reconstruct,
    growth_fit,
    growth_study,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_schema() -> dict:
    with resources.files("slabspectra.schemas").joinpath("config.schema.json").open() as f:
        return json.load(f)


def validate_config(path) -> dict:
    """Schema check plus the physics preconditions; raises ConfigError."""
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    import jsonschema
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(f"schema violation at {list(e.absolute_path)}: {e.message}") from e

    profile = parse_profile(cfg)
    collision = parse_collision(cfg)
    # orthonormality of the collision basis
    gram = collision.gram()
    gerr = np.abs(gram - np.eye(collision.n_terms)).max()
    if gerr > 1e-12:
        raise ConfigError(f"collision polynomials not orthonormal (Gram defect {gerr:.2e})")
    # the constant function must be an eigenfunction of K
    defect = collision.constant_eigenfunction_defect()
    if defect > 1e-10:
        raise ConfigError(
            f"collision kernel does not keep the constant function as an "
            f"eigenfunction (defect {defect:.2e})")
    task = cfg.get("task", {})
    if "delta" in task and not profile.is_zero:
        bound = admissible_delta_bound(profile, collision, cfg.get("c_n", 1.0))
        if task["delta"] > bound:
            raise ConfigError(
                f"delta = {task['delta']} exceeds the admissible bound "
                f"min(1/(2a), C_N/(a ||K||^2 |c|_1^2)) = {bound:.6g}")
    return cfg


def parse_profile(cfg) -> Profile:
    return Profile(tuple(tuple(s) for s in cfg["profile"]["segments"]))


def parse_collision(cfg) -> CollisionKernel:
    coll = cfg.get("collision", {"mode": "isotropic"})
    if coll.get("mode", "isotropic") == "isotropic":
        return CollisionKernel.isotropic()
    return CollisionKernel.legendre(coll["weights"], coll["degrees"])


def config_hash(cfg) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _grid_cells(cfg) -> int:
    return int(cfg.get("grid", {}).get("cells", 128))


def solver_levels(cfg):
    profile = parse_profile(cfg)
    collision = parse_collision(cfg)
    cells = _grid_cells(cfg)
    coarse = SpectralSolver(profile, build_grid(profile, cells), collision)
    fine = SpectralSolver(profile, coarse.grid.refined(), collision)
    return coarse, fine


def write_json(payload, outdir: Path, name: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_csv(rows, header, outdir: Path, name: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])
    return path


def base_report(cfg, coarse_cells, fine_cells) -> dict:
    return {
        "config_hash": config_hash(cfg),
        "grid_levels": [coarse_cells, fine_cells],
        "profile": cfg["profile"],
        "collision": cfg.get("collision", {"mode": "isotropic"}),
        "seed": cfg.get("seed", 0),
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_spectrum(cfg, outdir: Path) -> int:
    coarse, fine = solver_levels(cfg)
    hits_c, notes_c = discrete_spectrum_isotropic(coarse)
    hits_f, notes_f = discrete_spectrum_isotropic(fine)
    eigs = []
    for h in hits_f:
        match = min(hits_c, key=lambda g: abs(g.z - h.z)) if hits_c else None
        delta = abs(match.z - h.z) if match is not None else None
        eigs.append({"re": h.z.real, "im": h.z.imag, "residual": h.residual,
                     "two_grid_delta": delta})
    report = base_report(cfg, coarse.grid.n_cells, fine.grid.n_cells)
    report.update({"eigenvalues": eigs,
                   "count": {"coarse": len(hits_c), "fine": len(hits_f)},
                   "boundary_warning": notes_c["boundary_warning"] or
                                       notes_f["boundary_warning"]})
    write_json(report, outdir, "spectrum.json")
    return EXIT_OK


def cmd_svals(cfg, outdir: Path) -> int:
    task = cfg.get("task", {})
    k_grid = np.linspace(task.get("k_min", -3.0), task.get("k_max", 3.0),
                         int(task.get("n_k", 25)))
    beta = task.get("beta", 0.5)
    coarse, fine = solver_levels(cfg)
    prof_c = ac_splitting_profile(coarse, k_grid, beta)
    prof_f = ac_splitting_profile(fine, k_grid, beta)
    n_show = min(8, prof_c.singular_values.shape[1])
    rows = [[k] + list(sv[:n_show])
            for k, sv in zip(k_grid, prof_c.singular_values[:, ::-1])]
    write_csv(rows, ["k"] + [f"sigma_{i}" for i in range(1, n_show + 1)],
              outdir, "svals.csv")
    report = base_report(cfg, coarse.grid.n_cells, fine.grid.n_cells)
    report.update({
        "beta": beta,
        "max_ker_dim": {"coarse": prof_c.max_ker_dim, "fine": prof_f.max_ker_dim},
        "dim_below": {"coarse": prof_c.dim_below.tolist(),
                      "fine": prof_f.dim_below.tolist()},
        "min_sigma": {"coarse": float(prof_c.singular_values.min()),
                      "fine": float(prof_f.singular_values.min())},
    })
    write_json(report, outdir, "svals.json")
    return EXIT_OK


def cmd_bc(cfg, outdir: Path) -> int:
    coarse, fine = solver_levels(cfg)
    flows = {}
    reports = {}
    for tag, solver in (("coarse", coarse), ("fine", fine)):
        flow = eta_flow(solver)
        flows[tag] = flow
        reports[tag] = bc_set(flow)
    deltas = []
    for k_f, e_f in reports["fine"]:
        k_c = min((k for k, _ in reports["coarse"]), key=lambda k: abs(k - k_f),
                  default=None)
        deltas.append(abs(k_c - k_f) if k_c is not None else None)
    flow = flows["fine"]
    rows = [[e] + list(vals) for e, vals in zip(flow.eps, flow.values)]
    write_csv(rows, ["eps"] + [f"eta_{i}" for i in range(1, flow.values.shape[1] + 1)],
              outdir, "bc_trajectories.csv")
    report = base_report(cfg, coarse.grid.n_cells, fine.grid.n_cells)
    report.update({
        "limits": [{"k": k, "error": e, "two_grid_delta": d}
                   for (k, e), d in zip(reports["fine"], deltas)],
        "ambiguous_matchings": len(flow.ambiguous),
    })
    write_json(report, outdir, "bc.json")
    return EXIT_OK


def cmd_kappa_scan(cfg, outdir: Path) -> int:
    task = cfg.get("task", {})
    kmax = task.get("kappa_max", 50.0)
    coarse, fine = solver_levels(cfg)
    scan = kappa_scan(coarse, kappa_max=kmax)
    confirms = confirm_critical_kappas(coarse.profile, cells=coarse.grid.n_cells,
                                       kappa_max=kmax)
    entries = []
    for item in scan:
        kap = item["kappa"]
        conf = min(confirms, key=lambda d: abs(d["kappa"] - kap), default=None)
        entry = {"kappa": kap, "error": item["error"]}
        if conf is not None and abs(conf["kappa"] - kap) < 0.05 * kap:
            entry.update({"kappa_refined": conf["kappa"], "kind": conf["kind"],
                          "s0_sigma_min": conf["s0_sigma_min"],
                          "shrink_factor": conf["shrink_factor"]})
        entries.append(entry)
    report = base_report(cfg, coarse.grid.n_cells, fine.grid.n_cells)
    report.update({"critical_amplitudes": entries, "count": len(entries)})
    write_json(report, outdir, "kappa_scan.json")
    return EXIT_OK


def cmd_classify(cfg, outdir: Path) -> int:
    coarse, fine = solver_levels(cfg)
    reps = {}
    for tag, solver in (("coarse", coarse), ("fine", fine)):
        # refinement-coupled tolerances come from the compressed-limit margin
        rep = classify_singularity(solver, kernel_tol=1e-8,
                                   critical_tol=cfg.get("task", {}).get(
                                       "critical_tol", 1e-6))
        reps[tag] = rep
    verdict = reps["coarse"].classification
    if reps["fine"].classification != verdict:
        verdict = "unresolved"
    payload = base_report(cfg, coarse.grid.n_cells, fine.grid.n_cells)

    def summarize(rep):
        out = {"classification": rep.classification,
               "critical_margin": rep.critical_margin,
               "in_critical_set": rep.in_critical_set,
               "notes": rep.notes}
        co = rep.coefficients
        out["kernel_info"] = co.get("kernel_info")
        for key in ("xi", "rho", "vartheta", "m_cond", "delta_shift",
                    "distance_to_minus_one"):
            if key in co:
                out[key] = co[key]
        if "pole_coefficient" in co:
            out["pole_coefficient_norm"] = float(
                np.linalg.norm(co["pole_coefficient"], 2))
        return out

    payload.update({"verdict": verdict,
                    "coarse": summarize(reps["coarse"]),
                    "fine": summarize(reps["fine"])})
    write_json(payload, outdir, "classify.json")
    return EXIT_OK


def cmd_asymptotics(cfg, outdir: Path) -> int:
    coarse, _ = solver_levels(cfg)
    task = cfg.get("task", {})
    mags = np.geomspace(task.get("mag_hi", 1e-1), task.get("mag_lo", 1e-4),
                        int(task.get("n_mag", 7)))
    delta = task.get("delta",
                     min(0.9 * admissible_delta_bound(coarse.profile, coarse.collision),
                         0.05))
    out = {}
    sz = s_zero(coarse, delta)
    fit0 = asymptotics_fit(coarse, "szero", sz, mags=mags)
    out["szero"] = {"exponents": fit0.exponents.tolist(),
                    "exponent_mean": fit0.exponent_mean,
                    "residuals": fit0.residuals.tolist()}
    rep = classify_singularity(coarse)
    out["classification"] = rep.classification
    if rep.classification == "logarithmic":
        fit = asymptotics_fit(coarse, "log", rep.coefficients, mags=mags)
        out["log"] = {"exponents": fit.exponents.tolist(),
                      "exponent_mean": fit.exponent_mean,
                      "residuals": fit.residuals.tolist()}
    elif rep.classification == "first_order":
        fit = asymptotics_fit(coarse, "pole", rep.coefficients, mags=mags)
        out["pole"] = {"exponents": fit.exponents.tolist(),
                       "exponent_mean": fit.exponent_mean,
                       "residuals": fit.residuals.tolist()}
    fitp = asymptotics_fit(coarse, "power", {}, mags=mags)
    out["power"] = {"growth_exponents": fitp.exponents.tolist(),
                    "growth_exponent_mean": fitp.exponent_mean}
    payload = base_report(cfg, coarse.grid.n_cells, 2 * coarse.grid.n_cells)
    payload.update({"fits": out, "mags": mags.tolist(), "delta": delta})
    write_json(payload, outdir, "asymptotics.json")
    return EXIT_OK


def _build_sim(cfg, profile, collision, scale=1):
    g = cfg.get("grid", {})
    return TransportSim(profile, collision,
                        x_max=g.get("x_max", 32.0),
                        n_x=scale * g.get("n_x", 4096),
                        n_mu=g.get("mu_nodes", 32) + (16 if scale > 1 else 0),
                        dt=g.get("dt"))


def _initial_field(sim, task, rng):
    spec = task.get("u0", {"type": "gaussian"})
    kind = spec.get("type", "gaussian")
    if kind == "gaussian":
        return sim.gaussian_field(center=spec.get("center", 0.0),
                                  width=spec.get("width", 1.0))
    if kind == "random":
        return sim.random_field(rng, width=spec.get("width", 1.5))
    raise ConfigError(f"unknown initial datum type {kind!r}")


def cmd_evolve(cfg, outdir: Path) -> int:
    profile = parse_profile(cfg)
    collision = parse_collision(cfg)
    task = cfg.get("task", {})
    rng = np.random.default_rng(cfg.get("seed", 0))
    sim = _build_sim(cfg, profile, collision)
    u0 = _initial_field(sim, task, rng)
    t_final = sim.dt * sim.steps_for(round(task.get("t_final", 10.0) / sim.dt) * sim.dt)
    every = max(1, sim.steps_for(t_final) // int(task.get("n_samples", 200)))
    times, norms, _ = sim.evolve_norms(u0, t_final, every=every)
    write_csv(zip(times, norms), ["t", "norm"], outdir, "evolve.csv")
    tail = times > 0.5 * times.max()
    rate = float(np.polyfit(times[tail], np.log(norms[tail]), 1)[0]) \
        if tail.sum() > 2 else None
    payload = base_report(cfg, sim.n_x, sim.n_x)
    payload.update({"t_final": t_final, "final_norm": float(norms[-1]),
                    "tail_log_slope": rate,
                    "sim": {"n_x": sim.n_x, "n_mu": len(sim.mu),
                            "dt": sim.dt, "x_max": sim.x_max}})
    write_json(payload, outdir, "evolve.json")
    return EXIT_OK


def cmd_growth(cfg, outdir: Path) -> int:
    profile = parse_profile(cfg)
    collision = parse_collision(cfg)
    task = cfg.get("task", {})
    rng = np.random.default_rng(cfg.get("seed", 0))
    t_final = task.get("t_final", 100.0)
    n_random = int(task.get("n_random", 2))
    solver = SpectralSolver(profile, _grid_cells(cfg), collision)
    hits, _ = discrete_spectrum_isotropic(solver)

    results = {}
    series_paths = {}
    for tag, scale in (("coarse", 1), ("fine", 2)):
        sim = _build_sim(cfg, profile, collision, scale=scale)
        modes = []
        for h in hits:
            _, phi = solver.kernel_vector(h.z)
            modes.append(eigenmode_reconstruct(solver, h.z, phi, sim))
        u0_list = [sim.random_field(rng) for _ in range(n_random)]
        extra = task.get("u0_direction")
        if extra == "singular":
            u0_list.append(_singular_direction_field(solver, sim))
        times, norms = growth_study(sim, modes, u0_list, t_final,
                                    checkpoint=task.get("checkpoint", 1.0))
        verdict = growth_fit(times, norms)
        results[tag] = verdict
        series_paths[tag] = write_csv(zip(times, norms), ["t", "norm"], outdir,
                                      f"growth_{tag}.csv")
    agreed = results["coarse"].verdict == results["fine"].verdict
    payload = base_report(cfg, _grid_cells(cfg), 2 * _grid_cells(cfg))
    payload.update({
        "verdict": results["fine"].verdict if agreed else "unresolved",
        "resolutions_agree": agreed,
        "eigenvalue_count": len(hits),
        "per_resolution": {
            tag: {"verdict": v.verdict, "p": v.p, "p_interval": v.p_interval,
                  "residual_ratio": v.residual_ratio, "residuals": v.residuals}
            for tag, v in results.items()},
    })
    write_json(payload, outdir, "growth.json")
    return EXIT_OK


def _singular_direction_field(solver, sim):
    """Initial datum along the singular direction at z = 0 (kernel-subspace
    vector when present, else the near-kernel of S(0)), embedded in phase
    space through sqrt(V)."""
    from .spectra import n_subspace
    from .transport import embed_collision_range_field
    basis, _ = n_subspace(solver, tol=1e-6)
    if basis.shape[1] > 0:
        h = basis[:, 0]
    else:
        delta = min(0.9 * admissible_delta_bound(solver.profile, solver.collision), 0.05)
        s0 = s_zero(solver, delta)["s0"].entries
        _, sig, vh = np.linalg.svd(s0)
        h = vh[-1].conj().real
    return embed_collision_range_field(solver, h, sim)


def cmd_validate(cfg, outdir: Path) -> int:
    payload = {"config_hash": config_hash(cfg), "valid": True}
    write_json(payload, outdir, "validate.json")
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "svals": cmd_svals,
    "bc": cmd_bc,
    "kappa-scan": cmd_kappa_scan,
    "classify": cmd_classify,
    "asymptotics": cmd_asymptotics,
    "evolve": cmd_evolve,
    "growth": cmd_growth,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slab-spectra",
        description="spectral analysis of the dissipative slab transport operator")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)
    outdir = Path(args.out)
    try:
        cfg = validate_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, outdir)
    except (ConfigError,) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # numerical failure: emit diagnostic artifact
        diag = {"error": type(e).__name__, "message": str(e),
                "config_hash": config_hash(cfg)}
        write_json(diag, outdir, "failure.json")
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
