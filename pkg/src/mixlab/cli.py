"""Command-line front end.

Every subcommand reads a JSON config (a file path or an inline JSON object),
writes CSV/JSON files into ``--out`` and a ``.meta.json`` sidecar next to each
file.  Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 bound violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import verify_bounds
from .chain import CylinderFunction, TransitionKernel, kernel_from_potential, sample_paths
from .coupling import BlockSchedule, sample_block_coupled_paths, sample_coupled_paths
from .errors import BoundViolation, ConfigError, NumericalError
from .io import base_meta, write_csv, write_json
from .potential import Potential, normalize
from .renewal import (
    GammaSequence,
    classify_decay,
    condpoly_alpha,
    radius_estimate,
    renewal_radius,
    return_probabilities,
)
from .sequences import Context

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VIOLATION = 0, 2, 3, 4


def load_config(text: str) -> dict:
    """Inline JSON object or path to a JSON file."""
    s = text.strip()
    try:
        if s.startswith("{"):
            cfg = json.loads(s)
        else:
            cfg = json.loads(Path(s).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {text!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _potential(cfg: dict, base: Path | None = None) -> Potential:
    spec = cfg.get("potential")
    if spec is None:
        raise ConfigError("config needs a 'potential'")
    if isinstance(spec, str):
        path = Path(spec)
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            spec = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read potential file {str(path)!r}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"potential file {str(path)!r} is not valid JSON: {exc}") from exc
    return Potential.from_json(spec)


def _kernel(phi: Potential, cfg: dict) -> tuple[TransitionKernel, dict]:
    info = {}
    if phi.is_finite and not phi.normalized:
        res = normalize(phi)
        phi = res.psi
        info["log_lambda"] = res.log_lambda
    return kernel_from_potential(phi, cfg.get("indexing", "rr30")), info


def _context(phi: Potential, word: str, cfg: dict) -> Context:
    return Context(phi.alphabet, word, cfg.get("extension", "pad"), cfg.get("pad"))


def _int(cfg, key, default=None, minimum=0):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"config needs '{key}'")
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"'{key}' must be an integer >= {minimum}")
    return v


def _seed(cfg, args):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    return seed


def cmd_simulate(cfg, args, out: Path, base: Path | None):
    phi = _potential(cfg, base)
    kernel, info = _kernel(phi, cfg)
    seed = _seed(cfg, args)
    n = _int(cfg, "n", minimum=1)
    runs = _int(cfg, "runs", 1, minimum=1)
    past = _context(phi, cfg.get("past", ""), cfg)
    paths = sample_paths(kernel, past, n, runs, seed, args.threads)
    syms = phi.alphabet.symbols
    meta = base_meta("simulate", cfg, seed) | {"depth": kernel.depth, **info}
    if runs == 1:
        rows = ((seed, t, syms[a]) for t, a in enumerate(paths[0].tolist()))
        write_csv(out / "trajectory.csv", ["seed", "t", "symbol"], rows, meta)
    else:
        rows = ((r, seed, t, syms[a]) for r in range(runs) for t, a in enumerate(paths[r].tolist()))
        write_csv(out / "trajectory.csv", ["run", "seed", "t", "symbol"], rows, meta)
    return EXIT_OK


def cmd_couple(cfg, args, out: Path, base: Path | None):
    phi = _potential(cfg, base)
    kernel, info = _kernel(phi, cfg)
    seed = _seed(cfg, args)
    runs = _int(cfg, "runs", 1, minimum=1)
    x = _context(phi, cfg.get("x", ""), cfg)
    y = _context(phi, cfg.get("y", ""), cfg)
    meta = base_meta("couple", cfg, seed) | info
    if "schedule" in cfg:
        sched = BlockSchedule.from_json(cfg["schedule"])
        M = _int(cfg, "blocks", minimum=1)
        s, _ = sample_block_coupled_paths(kernel, x, y, sched, M, runs, seed, args.threads)
    else:
        n = _int(cfg, "n", minimum=1)
        s = sample_coupled_paths(kernel, x, y, n, runs, seed, args.threads)
    syms = phi.alphabet.symbols
    rows = ((t, syms[a], syms[b], c) for t, (a, b, c) in enumerate(zip(s.u[0].tolist(), s.v[0].tolist(), s.clock[0].tolist())))
    write_csv(out / "coupled_path.csv", ["t", "u", "v", "clock"], rows, meta)
    p0 = (s.clock == 0).mean(axis=0)
    se = np.sqrt(p0 * (1 - p0) / runs)
    gstar = return_probabilities(kernel.gamma, s.u.shape[1]).gamma_star
    write_csv(out / "disagreement.csv", ["n", "p_hat", "stderr", "gamma_star"],
              ((t + 1, p0[t], se[t], gstar[t + 1]) for t in range(len(p0))), meta)
    summary = {
        "runs": runs,
        "steps": int(s.u.shape[1]),
        "disagreements": int((s.u != s.v).sum()),
        "p_hat_T_eq_0": p0,
        "stderr": se,
        "gamma_star": gstar[1:],
        "max_excess_over_gamma_star_in_sigmas": float(np.max((p0 - gstar[1:]) / np.maximum(se, 1e-300))) if runs > 1 else None,
    }
    write_json(out / "summary.json", summary, meta)
    return EXIT_OK


def _gamma(cfg) -> GammaSequence:
    spec = cfg.get("gamma")
    if spec is None:
        raise ConfigError("config needs 'gamma'")
    return GammaSequence.from_json(spec)


def _classification(gamma: GammaSequence, cfg) -> dict:
    horizon = _int(cfg, "horizon", 1000, minimum=100)
    window = cfg.get("window")
    rep = classify_decay(gamma, horizon, tuple(window) if window else None).to_json()
    if gamma.summable:
        r = radius_estimate(gamma)
        rep["radius_F"] = r.value
        rep["radius_G"] = renewal_radius(gamma)
        try:
            a = condpoly_alpha(gamma)
            rep["condpoly"] = {"alpha": a.alpha, "threshold": a.threshold, "holds": a.holds}
        except NumericalError as exc:
            rep["condpoly"] = {"error": str(exc)}
    else:
        rep["radius_G"] = 1.0
    return rep


def cmd_renewal(cfg, args, out: Path, base: Path | None):
    gamma = _gamma(cfg)
    n_max = _int(cfg, "n_max", 1000, minimum=1)
    prof = return_probabilities(gamma, n_max)
    meta = base_meta("renewal", cfg, None)
    write_csv(out / "renewal.csv", ["n", "gamma_n", "gamma_star_n", "tau_pmf_n"], prof.rows(), meta)
    rep = _classification(gamma, cfg)
    rep["tau_infinity"] = prof.tau.infinity
    rep["tau_infinity_bounds"] = list(prof.tau.infinity_bounds)
    rep["renewal_residual"] = prof.residual
    write_json(out / "classification.json", rep, meta)
    return EXIT_OK


def cmd_classify(cfg, args, out: Path, base: Path | None):
    gamma = _gamma(cfg)
    write_json(out / "classification.json", _classification(gamma, cfg), base_meta("classify", cfg, None))
    return EXIT_OK


def cmd_verify(cfg, args, out: Path, base: Path | None):
    phi = _potential(cfg, base)
    f = CylinderFunction.from_json(phi.alphabet, cfg.get("f", {"indicator": phi.alphabet.symbols[0]}))
    g = CylinderFunction.from_json(phi.alphabet, cfg.get("g", {"indicator": phi.alphabet.symbols[0]}))
    method = cfg.get("method", "exact")
    seed = _seed(cfg, args) if method == "montecarlo" else (args.seed if args.seed is not None else cfg.get("seed"))
    sched = BlockSchedule.from_json(cfg["schedule"]) if "schedule" in cfg else None
    rep = verify_bounds(
        phi, f, g, _int(cfg, "n_max", 100), method=method, seed=seed, runs=_int(cfg, "runs", 100_000, minimum=2),
        indexing=cfg.get("indexing", "rr30"), gamma_scale=float(cfg.get("gamma_scale", 1.0)),
        schedule=sched, theta=cfg.get("theta"), threads=args.threads,
    )
    meta = base_meta("verify", cfg, seed)
    write_csv(out / "bounds.csv", ["n", "measured", "ci", "sum_bound", "C_bound", "t2_bound", "holder", "single_coord"],
              rep.rows(), meta | {"header": rep.header()})
    write_json(out / "bounds.json", rep.header(), meta)
    rep.raise_on_violation()
    return EXIT_OK


def cmd_normalize(cfg, args, out: Path, base: Path | None):
    phi = _potential(cfg, base)
    res = normalize(phi)
    meta = base_meta("normalize", cfg, None)
    write_json(out / "psi.json", res.psi.to_json(), meta)
    A = len(phi.alphabet)
    k = res.memory_order
    words = [phi.alphabet.decode(np.unravel_index(i, (A,) * k)) if k else "" for i in range(A**k)]
    write_csv(out / "rho.csv", ["context", "rho"], zip(words, res.rho.tolist()), meta)
    write_json(out / "summary.json", {"log_lambda": res.log_lambda, "memory_order": k}, meta)
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "sample trajectories of the chain with a given past"),
    "couple": (cmd_couple, "sample the maximally coupled pair and its disagreement clock"),
    "renewal": (cmd_renewal, "return probabilities and first-return law of the dominating chain"),
    "verify": (cmd_verify, "compare measured correlations with the upper bounds"),
    "classify": (cmd_classify, "classify the decay of the return probabilities"),
    "normalize": (cmd_normalize, "normalize a finite-memory potential"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mixlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON file or inline JSON object")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $MIXLAB_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        base = None if args.config.strip().startswith("{") else Path(args.config).resolve().parent
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return fn(cfg, args, out, base)
    except BoundViolation as exc:
        print(f"mixlab: bound violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except NumericalError as exc:
        print(f"mixlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"mixlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
