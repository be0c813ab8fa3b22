"""Command-line surface: fit, predict, cv, discover, simulate, embed-check.

File formats:
  fingerprints.csv   header ``id,bits``; bits is a fixed-length 0/1 string
  experiments.csv    header ``compound_id,y,x1..xp``; y is a 1-based class
  model.json         everything needed to reload and predict exactly
  predictions.csv    ``candidate_id,mean_u,var_u,var_u_corrected,p_1..p_C``

Every output embeds the config and seed that produced it.  Exit codes:
0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from .chemspace import (
    build_space,
    embeddability_gram,
    naive_gaussian_counterexample,
    read_fingerprint_csv,
    sqrt_distance_gram_rank,
)
from .discover import GAConfig, run_ga
from .errors import ConfigError, DataError, NumericalError
from .evalcv import cross_validate
from .fit import fit_mle, load_model, save_model, standard_errors
from .kernel import FAMILIES
from .laplace import Dataset, ModelParams
from .link import LINKS
from .predict import predict_one
from .simstudy import (
    SimDesign,
    render_boxplot_svg,
    study_estimation,
    study_ga,
    study_variance,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are exit code 1, not argparse's 2
        raise ConfigError(message)


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = secrets.randbelow(2**31)
    print(f"no --seed given; drew seed {seed}", file=sys.stderr)
    return seed


def _config_dict(args, seed: int) -> dict:
    skip = {"func", "command"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    cfg["command"] = args.command
    cfg["seed"] = seed
    return cfg


def _write_csv(path, header: list[str], rows, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {json.dumps(config, default=str)}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_experiments(path, id_to_index: dict[str, int]):
    """Parse experiments.csv into (y, X, compound_index, p)."""
    with open(path, newline="") as fh:
        rows = [
            (lineno, row)
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and not row[0].lstrip().startswith("#")
        ]
    if not rows:
        raise DataError(f"{path}: no rows")
    _, header = rows[0]
    header = [h.strip() for h in header]
    if header[:2] != ["compound_id", "y"]:
        raise DataError(
            f"{path}: expected header starting 'compound_id,y', got {header[:2]}"
        )
    x_cols = header[2:]
    for i, name in enumerate(x_cols, start=1):
        if name != f"x{i}":
            raise DataError(f"{path}: missing covariate column x{i} (found {name!r})")
    p = len(x_cols)
    y, X, ci = [], [], []
    for lineno, row in rows[1:]:
        if len(row) != 2 + p:
            raise DataError(f"{path}:{lineno}: expected {2 + p} fields, got {len(row)}")
        ident = row[0].strip()
        if ident not in id_to_index:
            raise DataError(f"{path}:{lineno}: unknown compound id {ident!r}")
        try:
            y.append(int(row[1]))
            X.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        ci.append(id_to_index[ident])
    return np.array(y), np.array(X).reshape(len(y), p), np.array(ci), p


def _load_dataset(fp_path, exp_path, classes: int | None) -> Dataset:
    ids, fps = read_fingerprint_csv(fp_path)
    space = build_space(fps, ids=ids)
    id_to_index = {ident: i for i, ident in enumerate(ids)}
    y, X, ci, _ = _read_experiments(exp_path, id_to_index)
    C = int(np.max(y)) if classes is None else classes
    return Dataset(y=y, X=X, compound_index=ci, space=space, C=C)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_fit(args) -> int:
    seed = _resolve_seed(args)
    data = _load_dataset(args.fingerprints, args.experiments, args.classes)
    init = None
    restarts = args.restarts
    if args.init is not None:
        init_model = load_model(args.init)
        init = init_model.params
        if restarts is None:
            restarts = 0
    if restarts is None:
        restarts = 3
    model = fit_mle(
        data, args.kernel, args.link, init=init, restarts=restarts, seed=seed
    )
    save_model(model, args.out, config=_config_dict(args, seed))

    ses = standard_errors(model)
    print(f"fitted {args.link} {args.kernel} model on n={data.n}, m={data.space.m}")
    print(f"approximate log-likelihood: {model.laplace.loglik:.6f}")
    print(f"converged: {model.converged}")
    theta = dict(
        zip(
            ses.keys(),
            np.concatenate(
                (model.params.alphas, model.params.beta,
                 [model.params.kernel.sigma2, model.params.kernel.phi])
            ),
        )
    )
    for name, value in theta.items():
        if name == "phi" and not model.params.kernel.uses_phi:
            continue
        se = ses[name]
        se_txt = "n/a" if se is None else f"{se:.4f}"
        print(f"  {name:>8s} = {value: .4f}  (SE {se_txt})")
    print(f"model written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    seed = _resolve_seed(args)
    model = load_model(args.model)
    ids, fps = read_fingerprint_csv(args.candidates)
    x_star = None
    if args.x is not None:
        x_star = np.array([float(v) for v in args.x.split(",")])
    C = model.data.C
    header = ["candidate_id", "mean_u", "var_u", "var_u_corrected"] + [
        f"p_{j}" for j in range(1, C + 1)
    ]
    rows = []
    for ident, fp in zip(ids, fps):
        pred = predict_one(model, fp, x_star)
        rows.append(
            [ident, repr(pred.mean_u), repr(pred.var_u), repr(pred.var_u_corrected)]
            + [repr(float(p)) for p in pred.class_probs]
        )
    _write_csv(args.out, header, rows, _config_dict(args, seed))
    print(f"{len(rows)} prediction(s) written to {args.out}")
    return 0


def _parse_model_menu(text: str) -> list[tuple[str, str]]:
    if text.strip() == "all":
        return [(family, link) for link in LINKS for family in FAMILIES]
    specs = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            link, family = token.split(":")
        except ValueError:
            raise ConfigError(f"model spec {token!r} is not 'link:kernel'") from None
        if link not in LINKS:
            raise ConfigError(f"unknown link {link!r} in {token!r}")
        if family not in FAMILIES:
            raise ConfigError(f"unknown kernel {family!r} in {token!r}")
        specs.append((family, link))
    if not specs:
        raise ConfigError("no model specs given")
    return specs


def cmd_cv(args) -> int:
    seed = _resolve_seed(args)
    data = _load_dataset(args.fingerprints, args.experiments, args.classes)
    specs = _parse_model_menu(args.models)
    reports = cross_validate(
        data, specs, folds=args.folds, seed=seed, fit_restarts=args.restarts
    )
    reports.sort(key=lambda r: r.log_mean)
    header = [
        "link", "kernel", "log_loss_mean", "log_loss_sd",
        "spherical_mean", "spherical_sd", "fit_seconds_mean",
    ]
    rows = [
        [
            r.link_name, r.kernel_family,
            f"{r.log_mean:.6f}", f"{r.log_sd:.6f}",
            f"{r.spherical_mean:.6f}", f"{r.spherical_sd:.6f}",
            f"{r.fit_seconds_mean:.3f}",
        ]
        for r in reports
    ]
    _write_csv(args.out, header, rows, _config_dict(args, seed))
    for r in reports:
        print(r.describe())
    print(f"cross-validation table written to {args.out}")
    return 0


def cmd_discover(args) -> int:
    seed = _resolve_seed(args)
    model = load_model(args.model)
    x_star = None
    if args.x is not None:
        x_star = tuple(float(v) for v in args.x.split(","))
    mask = None
    if args.feature_mask is not None:
        mask = tuple(int(v) for v in args.feature_mask.split(","))
    config = GAConfig(
        k=args.k,
        generations=args.generations,
        a=args.a,
        b=args.b,
        p_c=args.pc,
        p_m=args.pm,
        fitness=args.fitness,
        x_star=x_star,
        seed=seed,
        feature_mask=mask,
        init=args.init_population,
    )
    result = run_ga(model, config)
    cfg = _config_dict(args, seed)
    doc = {
        "config": cfg,
        "best": {"bits": result.best.to_string(), "fitness": result.best_fitness},
        "final_population": [
            {"bits": fp.to_string(), "fitness": float(f)}
            for fp, f in zip(result.final_population, result.final_fitness)
        ],
        "best_fitness_history": result.history,
        "feature_frequency": result.feature_frequency.tolist(),
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1)
    if args.frequency_out:
        _write_csv(
            args.frequency_out,
            ["feature_index", "frequency"],
            [[i, repr(float(f))] for i, f in enumerate(result.feature_frequency)],
            cfg,
        )
    print(f"best compound {result.best.to_string()} fitness {result.best_fitness:.6f}")
    print(f"search results written to {args.out}")
    return 0


def _design_from_json(path, seed: int | None) -> tuple[SimDesign, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    ga_doc = doc.pop("ga", {})
    if seed is not None:
        doc["seed"] = seed
    for key in ("alphas", "x_grid"):
        if key in doc and doc[key] is not None:
            doc[key] = tuple(doc[key])
    try:
        design = SimDesign(**doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return design, ga_doc


def cmd_simulate(args) -> int:
    design, ga_doc = _design_from_json(args.design, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _config_dict(args, design.seed)
    cfg["design"] = dataclasses.asdict(design)

    if args.study == "estimation":
        report = study_estimation(design, fit_restarts=args.restarts, threads=args.threads)
        header, rows = report.rows()
        _write_csv(out_dir / "estimation.csv", header, rows, cfg)
        for i, name in enumerate(report.names):
            if name == "phi" and not design.true_params.kernel.uses_phi:
                continue
            svg = render_boxplot_svg(
                {name: report.estimates[:, i]},
                truths={name: report.truth[i]},
                title=f"{name}: estimates across {report.replications} replications",
            )
            (out_dir / f"boxplot_{name}.svg").write_text(
                svg + f"\n<!-- config: {json.dumps(cfg, default=str)} -->\n"
            )
        print(f"estimation study written to {out_dir}")
    elif args.study == "variance":
        report = study_variance(design, fit_restarts=args.restarts, threads=args.threads)
        header, rows = report.rows()
        _write_csv(out_dir / "variance.csv", header, rows, cfg)
        _write_csv(
            out_dir / "variance_by_compound.csv",
            ["compound", "empirical", "mean_uncorrected", "mean_corrected"],
            [
                [r, repr(float(report.empirical_variance[r])),
                 repr(float(report.mean_uncorrected[r])), repr(float(report.mean_corrected[r]))]
                for r in range(len(report.empirical_variance))
            ],
            cfg,
        )
        print(
            f"variance study: uncorrected msd {report.uncorrected_msd:.6f}, "
            f"corrected msd {report.corrected_msd:.6f}"
        )
    else:  # ga
        ga_doc.setdefault("x_star", (1.0,))
        for key in ("x_star", "feature_mask"):
            if ga_doc.get(key) is not None:
                ga_doc[key] = tuple(ga_doc[key])
        ga_config = GAConfig(**ga_doc)
        report = study_ga(design, ga_config, fit_restarts=args.restarts)
        header, rows = report.rows()
        _write_csv(out_dir / "ga_ranks.csv", header, rows, cfg)
        print(f"GA ranking study written to {out_dir / 'ga_ranks.csv'}")
    return 0


def cmd_embed_check(args) -> int:
    ids, fps = read_fingerprint_csv(args.fingerprints)
    space = build_space(fps, ids=ids)
    B = embeddability_gram(space)
    eigs = np.linalg.eigvalsh(B)
    rank = sqrt_distance_gram_rank(space)
    psd = bool(eigs[0] >= -1e-10 * max(eigs[-1], 1.0))
    print(f"m = {space.m} compounds, kappa = {space.kappa}")
    print(f"embeddability Gram matrix: min eigenvalue {eigs[0]:.3e}, rank {rank}")
    print(f"positive semi-definite: {psd} (embeds in R^{rank})")
    if args.counterexample:
        R, min_eig = naive_gaussian_counterexample()
        print("naive Gaussian-of-T correlation on the 4-compound demo space:")
        for row in R:
            print("  " + "  ".join(f"{v:.4f}" for v in row))
        print(f"min eigenvalue {min_eig:.4f} (indefinite, as expected)")
    if not psd:
        raise NumericalError("embeddability Gram matrix unexpectedly indefinite")
    return 0


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="chemgp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model from fingerprint and experiment CSVs")
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--kernel", default="gaussian", choices=FAMILIES)
    p.add_argument("--link", default="logit", choices=LINKS)
    p.add_argument("--classes", type=int, default=None,
                   help="number of classes (default: max label)")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None,
                   help="jittered optimizer restarts (default 3; 0 with --init)")
    p.add_argument("--init", default=None, help="warm-start from an existing model JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict class probabilities for candidates")
    p.add_argument("--model", required=True)
    p.add_argument("--candidates", required=True, help="fingerprint CSV of candidates")
    p.add_argument("--x", default=None, help="comma-separated covariate values")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="k-fold cross-validation over a model menu")
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--experiments", required=True)
    p.add_argument("--models", required=True,
                   help="'all' or comma list of link:kernel, e.g. probit:tanimoto")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("discover", help="genetic search for high-efficacy compounds")
    p.add_argument("--model", required=True)
    p.add_argument("--fitness", default="min_gp_mean",
                   choices=("min_gp_mean", "top_class_prob"))
    p.add_argument("--x", default=None, help="covariates for top_class_prob fitness")
    p.add_argument("--k", type=int, default=10, help="population size (even)")
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--a", type=float, default=10.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--pc", type=float, default=0.8, help="crossover probability")
    p.add_argument("--pm", type=float, default=0.1, help="mutation probability")
    p.add_argument("--feature-mask", default=None,
                   help="comma list of mutable feature indices; others stay 0")
    p.add_argument("--init-population", default="fittest_observed",
                   choices=("fittest_observed", "uniform"),
                   help="start from the fittest tested compounds or at random")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="GA result JSON")
    p.add_argument("--frequency-out", default=None, help="feature-frequency CSV")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("simulate", help="run a simulation study from a design JSON")
    p.add_argument("--study", required=True, choices=("estimation", "variance", "ga"))
    p.add_argument("--design", required=True, help="design JSON path")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the design seed")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for replications")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("embed-check", help="verify Euclidean embeddability of a space")
    p.add_argument("--fingerprints", required=True)
    p.add_argument("--counterexample", action="store_true",
                   help="also print the naive Gaussian-of-T counterexample")
    p.set_defaults(func=cmd_embed_check)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
