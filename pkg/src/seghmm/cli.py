"""Command-line front end for batch runs.

Commands: simulate, fit, decode, prob, sample, summary, marginals. All
randomness flows from the --seed flag through one generator, so identical
configurations reproduce their outputs byte for byte. Exit codes: 0 on
success, 1 on runtime failures (zero-probability events, infeasible
queries), 2 on configuration errors.

Numeric results are written as JSON/CSV only; files are plot-ready but no
plotting happens here.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .counting import CountingSpec
from .hmm import EmOptions, em_fit
from .kseg import ZeroProbabilityError, kmax_summary, kseg_sample, kseg_prob, kseg_viterbi
from .learning import ConjugatePrior, constrained_em, constrained_marginals, gibbs_fit
from .model import simulate

__all__ = ["main"]


class ConfigError(Exception):
    """Bad flags, missing files, or unparseable inputs (exit code 2)."""


def _load(loader, path, what):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} file not found: {p}")
    try:
        return loader(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"could not parse {what} file {p}: {exc}")


def _load_spec(args) -> CountingSpec:
    if getattr(args, "spec", None):
        return _load(sio.load_counting_spec, args.spec, "counting spec")
    return CountingSpec.standard()


def _parse_constraint_arg(text):
    try:
        return sio.parse_constraint(text)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _require_seed(args):
    if args.seed is None:
        raise ConfigError("this command draws random numbers; --seed is required")
    return np.random.default_rng(args.seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


def _cmd_simulate(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    if args.length < 1:
        raise ConfigError("--length must be >= 1")
    rng = _require_seed(args)
    out = _out_dir(args)
    states, obs = simulate(model, args.length, rng)
    sio.save_observations(obs, out / "observations.csv")
    sio.save_path(states, out / "states.csv")
    return 0


def _fit_em(args, model, obs, spec, out: Path) -> int:
    opts = EmOptions(max_iter=args.max_iter, tol=args.tol,
                     fixed_emissions=tuple(args.fix_emission))
    if args.constraint:
        constraint = _parse_constraint_arg(args.constraint)
        result = constrained_em(model, obs, spec, constraint, opts)
        fitted, trace = result.model, result.trace
    else:
        fitted, trace = em_fit(model, obs, opts)
    sio.save_model(fitted, out / "model.json")
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,log_likelihood\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},{float(v)!r}\n")
    return 0


def _fit_gibbs(args, model, obs, spec, out: Path) -> int:
    if not args.constraint:
        raise ConfigError("gibbs fitting requires --constraint")
    constraint = _parse_constraint_arg(args.constraint)
    rng = _require_seed(args)
    samples = gibbs_fit(ConjugatePrior(), model, obs, spec, constraint,
                        iters=args.iters, rng=rng, burn_in=args.burn_in)
    for i, sample in enumerate(samples.models):
        sio.save_model(sample, out / f"sample_{i:04d}.json")
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write("sample,score\n")
        for i, score in enumerate(samples.scores):
            fh.write(f"{i},{float(score)!r}\n")
    return 0


def _cmd_fit(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    bad = [i for i in args.fix_emission if not 0 <= i < model.num_states]
    if bad:
        raise ConfigError(f"--fix-emission index out of range: {bad}")
    out = _out_dir(args)
    if args.method == "gibbs":
        if args.fix_emission:
            raise ConfigError("--fix-emission applies to EM fitting only")
        return _fit_gibbs(args, model, obs, spec, out)
    return _fit_em(args, model, obs, spec, out)


def _cmd_decode(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    if args.kmax < 1:
        raise ConfigError("--kmax must be >= 1")
    out = _out_dir(args)
    paths, log_joints = kseg_viterbi(model, obs, spec, args.kmax)
    entries = []
    for k in sorted(log_joints):
        entry = {"k": int(k), "log_joint": _finite_or_none(log_joints[k]), "path_file": None}
        if k in paths:
            name = f"path_k{k}.csv"
            sio.save_path(paths[k], out / name)
            entry["path_file"] = name
        entries.append(entry)
    _write_json({"kmax": args.kmax, "entries": entries}, out / "decode.json")
    return 0


def _cmd_prob(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    constraint = _parse_constraint_arg(args.constraint)
    value = kseg_prob(model, obs, spec, constraint)
    doc = {"constraint": sio.format_constraint(constraint), "probability": value}
    print(json.dumps(doc))
    if args.out:
        out = _out_dir(args)
        _write_json(doc, out / "probability.json")
    return 0


def _cmd_sample(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    constraint = _parse_constraint_arg(args.constraint)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    rng = _require_seed(args)
    out = _out_dir(args)
    draws = kseg_sample(model, obs, spec, constraint, args.n, rng)
    files = []
    for i, path in enumerate(draws):
        name = f"sample_{i:04d}.csv"
        sio.save_path(path, out / name)
        files.append(name)
    _write_json({"constraint": sio.format_constraint(constraint), "n": args.n,
                 "path_files": files}, out / "samples.json")
    return 0


def _cmd_summary(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    if args.kmax < 1:
        raise ConfigError("--kmax must be >= 1")
    out = _out_dir(args)
    summary = kmax_summary(model, obs, spec, args.kmax)
    entries = []
    for label, prob, log_joint, path in summary.entries():
        entry = {
            "k": label,
            "probability": float(prob),
            "log_joint": _finite_or_none(log_joint),
            "path_file": None,
        }
        if path is not None:
            name = f"path_k{label}.csv" if isinstance(label, int) else f"path_gt{args.kmax}.csv"
            sio.save_path(path, out / name)
            entry["path_file"] = name
        entries.append(entry)
    _write_json(
        {
            "kmax": args.kmax,
            "log_evidence": summary.log_evidence,
            "probability_sum": float(summary.probabilities.sum()),
            "entries": entries,
        },
        out / "summary.json",
    )
    return 0


def _cmd_marginals(args) -> int:
    model = _load(sio.load_model, args.model, "model")
    obs = _load(sio.load_observations, args.obs, "observations")
    spec = _load_spec(args)
    constraint = _parse_constraint_arg(args.constraint)
    out = _out_dir(args)
    site, pair = constrained_marginals(model, obs, spec, constraint)
    m = model.num_states
    with open(out / "site_marginals.csv", "w", encoding="utf-8") as fh:
        fh.write("position," + ",".join(f"state_{x}" for x in range(m)) + "\n")
        for n, row in enumerate(site):
            fh.write(f"{n}," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(out / "pair_marginals.csv", "w", encoding="utf-8") as fh:
        fh.write("position,from_state,to_state,probability\n")
        for n in range(pair.shape[0]):
            for i in range(m):
                for j in range(m):
                    fh.write(f"{n},{i},{j},{float(pair[n, i, j])!r}\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seghmm",
        description="HMM inference under segment-count constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, constraint=False, kmax=False, n=False):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--obs", help="observation CSV file")
        p.add_argument("--spec", help="counting-spec JSON file (default: standard counting)")
        if constraint:
            p.add_argument("--constraint", help="exact:K | atmost:K | range:K1:K2 | greater:K")
        if kmax:
            p.add_argument("--kmax", type=int, required=True, help="largest exact count")
        if n:
            p.add_argument("--n", type=int, default=1, help="number of draws")
        p.add_argument("--seed", type=int, help="root random seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="draw a hidden path and observations from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit parameters by EM or constrained Gibbs sampling")
    add_common(p, constraint=True)
    p.add_argument("--method", choices=("em", "gibbs"), default="em")
    p.add_argument("--max-iter", type=int, default=500, help="EM update cap")
    p.add_argument("--tol", type=float, default=1e-6, help="EM relative tolerance")
    p.add_argument("--iters", type=int, default=200, help="Gibbs sweeps")
    p.add_argument("--burn-in", type=float, default=0.2, help="Gibbs burn-in fraction")
    p.add_argument("--fix-emission", type=int, action="append", default=[], metavar="INDEX",
                   help="hold this state's emission distribution fixed (repeatable)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("decode", help="optimal path per segment count up to --kmax")
    add_common(p, kmax=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("prob", help="posterior probability of a count event")
    add_common(p, constraint=True)
    p.set_defaults(func=_cmd_prob)

    p = sub.add_parser("sample", help="draw paths conditional on a count event")
    add_common(p, constraint=True, n=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("summary", help="count posteriors and optimal paths up to --kmax")
    add_common(p, kmax=True)
    p.set_defaults(func=_cmd_summary)

    p = sub.add_parser("marginals", help="state posteriors conditional on a count event")
    add_common(p, constraint=True)
    p.set_defaults(func=_cmd_marginals)

    return parser


_NEEDS = {
    "fit": ("obs", "out"),
    "decode": ("obs", "out"),
    "prob": ("obs", "constraint"),
    "sample": ("obs", "constraint", "out"),
    "summary": ("obs", "out"),
    "marginals": ("obs", "constraint", "out"),
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        for field in _NEEDS.get(args.command, ()):
            if getattr(args, field, None) in (None, ""):
                raise ConfigError(f"--{field.replace('_', '-')} is required for {args.command}")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ZeroProbabilityError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
