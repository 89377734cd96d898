"""Command-line pipeline: simulate | summarize | trace | pilot | fit | envelope | choose.

Every run writes its artifacts plus a manifest (config echo, master seed,
version, exclusion logs) into one output directory.  Reruns with the same
config and seed produce byte-identical CSVs whatever the worker count.
Exit codes: 0 success, 1 validation error, 2 attempt budget exhausted.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from . import io
from .core import (
    PARAM_NAMES,
    ModelParams,
    PointPattern,
    PRIOR_PRESETS,
    PriorSpec,
    ValidationError,
    Window,
    oak_prior_preset,
)
from .envelopes import combined_envelope, posterior_predictive_curves
from .grf import simulate_grf
from .inference import (
    PilotScreenError,
    abc_rejection,
    choose_epsilon,
    fit_projections,
    kde_1d,
    pilot_distances,
    posterior_summary,
    run_pilot,
    summarize_samples,
    ABCPosterior,
)
from .modelchoice import MODEL_NAMES, build_reference_table, choose_model, train_forest
from .parallel import STREAM_TRACE, rng_for
from .samplers import run_chain, simulate_poisson
from .summaries import j_curve, l_centred, summary_vector
from .modelchoice import simulate_model

__version__ = "0.1.0"

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Everything a run needs; all defaults resolvable without a config file."""

    subcommand: str = ""
    pattern: str | None = None
    posterior: str | None = None
    out: str = "run"
    seed: int = 0
    workers: int = 1
    figures: bool = True
    # model + parameters
    model: str = "lgcp_strauss"
    mu: float | None = None
    sigma2: float | None = None
    s: float | None = None
    gamma: float | None = None
    R: float | None = None
    window: tuple[float, float, float, float] | None = None
    prior: str = "p1"
    # simulation
    grid: tuple[int, int] = (64, 64)
    burnin: int = 20_000
    dump_field: bool = False
    # summaries
    l_points: int = 40
    l_fraction: float = 0.2
    quadrats: tuple[int, ...] = (2, 3, 4, 5)
    # ABC
    k_pilot: int = 10_000
    k_abc: int = 1_000
    m: int = 10
    budget: int | None = None
    # envelopes
    level: float = 0.95
    n_sims: int = 1_000
    curve_points: int = 50
    env_l_fraction: float = 0.25
    env_j_fraction: float = 0.1
    # model choice
    n_ref: int = 30_000
    n_trees: int = 500
    # trace diagnostics
    draws: int = 3
    iters: int = 30_000


def _model_simulator(theta, seed, model, window, grid, burnin):
    return simulate_model(model, theta, window, grid, burnin, seed)


def make_simulator(model: str, window: Window, grid, burnin):
    """Picklable simulator(theta, seed) for a named model."""
    return partial(_model_simulator, model=model, window=window, grid=grid, burnin=burnin)


def make_summary_fn(config: RunConfig):
    return partial(
        summary_vector,
        m=config.l_points,
        fraction=config.l_fraction,
        q_values=tuple(config.quadrats),
    )


def ingest_pattern(path, window: Window | None = None) -> PointPattern:
    """Read and validate a pattern CSV (window from header, sidecar, or arg)."""
    return io.read_pattern(path, window=window)


def resolve_prior(spec: str) -> PriorSpec:
    if spec in PRIOR_PRESETS:
        return PRIOR_PRESETS[spec]()
    return io.read_prior(spec)


def _window_from_config(config: RunConfig) -> Window:
    if config.window is None:
        return Window(0.0, 1.0, 0.0, 1.0)
    return Window(*config.window)


def _theta_from_config(config: RunConfig) -> ModelParams:
    missing = [n for n in PARAM_NAMES if getattr(config, n) is None]
    if missing:
        raise ValidationError(f"simulate needs parameter flags: missing {missing}")
    return ModelParams(config.mu, config.sigma2, config.s, config.gamma, config.R)


def _write_manifest(outdir: Path, config: RunConfig, extra: dict) -> None:
    payload = {
        "version": __version__,
        "config": dataclasses.asdict(config),
        "elapsed_s": extra.pop("_elapsed", None),
        **extra,
    }
    (outdir / "manifest.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")


def _write_xy(path, header: str, *cols) -> None:
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommand runners; each returns (exit_code, manifest_extra)


def _run_simulate(config: RunConfig, outdir: Path):
    w = _window_from_config(config)
    theta = None
    field = None
    if config.model == "poisson":
        theta_mu = config.mu if config.mu is not None else 0.0
        field = simulate_grf(w, *config.grid, theta_mu, 0.0, 1.0, rng_for(config.seed, 0))
        pattern = simulate_poisson(w, field, rng_for(config.seed, 1))
    elif config.model == "lgcp_strauss":
        theta = _theta_from_config(config)
        field = simulate_grf(
            w, *config.grid, theta.mu, theta.sigma2, theta.s, rng_for(config.seed, 0)
        )
        pattern, _ = run_chain(
            field, theta.gamma, theta.R, config.burnin + 1,
            PointPattern.empty(w), rng_for(config.seed, 1),
        )
    else:
        theta = _theta_from_config(config)
        sim = make_simulator(config.model, w, config.grid, config.burnin)
        pattern = sim(theta, rng_for(config.seed, 1))
    io.write_pattern(pattern, outdir / "pattern.csv")
    if config.dump_field and field is not None:
        io.write_field_csv(field, outdir / "field.csv")
    if config.figures:
        from . import plots

        plots.plot_pattern(pattern, outdir / "pattern.png", field=field, title=config.model)
    return 0, {"n_points": pattern.n}


def _run_summarize(config: RunConfig, outdir: Path):
    pattern = ingest_pattern(config.pattern, window=_maybe_window(config))
    summary = make_summary_fn(config)(pattern)
    io.write_summary(summary, outdir / "summary.json", outdir / "summary.csv")
    from .summaries import default_r_grid, empty_space_F, j_function, nearest_neighbour_G

    r = default_r_grid(pattern.window, config.l_points, config.l_fraction)
    curves = {"L(r)-r": l_centred(pattern, r)}
    f = empty_space_F(pattern, r)
    g = nearest_neighbour_G(pattern, r)
    curves["F"] = f
    curves["G"] = g
    curves["J"] = j_function(f, g)
    io.write_curve(curves["L(r)-r"], outdir / "curve_l.csv")
    io.write_curve(f, outdir / "curve_f.csv")
    io.write_curve(g, outdir / "curve_g.csv")
    io.write_curve(curves["J"], outdir / "curve_j.csv")
    if config.figures:
        from . import plots

        plots.plot_curves(curves, outdir / "curves.png")
    return 0, {"n_points": pattern.n, "finite": summary.is_finite}


def _run_trace(config: RunConfig, outdir: Path):
    w = _window_from_config(config)
    explicit = all(getattr(config, n) is not None for n in PARAM_NAMES)
    prior = resolve_prior(config.prior)
    labels = []
    for k in range(1 if explicit else config.draws):
        rng = rng_for(config.seed, STREAM_TRACE, k)
        theta = _theta_from_config(config) if explicit else prior.sample(rng)
        field = simulate_grf(w, *config.grid, theta.mu, theta.sigma2, theta.s, rng)
        empty = PointPattern.empty(w)
        poisson_init = simulate_poisson(w, field, rng)
        _, tr_empty = run_chain(field, theta.gamma, theta.R, config.iters, empty, rng, record_trace=True)
        _, tr_pois = run_chain(
            field, theta.gamma, theta.R, config.iters, poisson_init, rng, record_trace=True
        )
        traces = {"empty": tr_empty, "poisson": tr_pois}
        io.write_trace(traces, outdir / f"trace_{k:02d}.csv")
        if config.figures:
            from . import plots

            plots.plot_trace(traces, outdir / f"trace_{k:02d}.png")
        labels.append({"draw": k, "theta": list(theta.as_array())})
    return 0, {"draws": labels}


def _run_pilot(config: RunConfig, outdir: Path):
    pattern = ingest_pattern(config.pattern, window=_maybe_window(config))
    prior = resolve_prior(config.prior)
    sim = make_simulator(config.model, pattern.window, config.grid, config.burnin)
    pilot = run_pilot(
        prior, sim, config.k_pilot, config.m, config.seed,
        make_summary_fn(config), config.workers,
    )
    io.write_pilot(pilot, outdir / "pilot.csv")
    return 0, {"k_retained": pilot.k, "excluded": pilot.excluded, "attempts": pilot.attempts}


def _run_fit(config: RunConfig, outdir: Path):
    pattern = ingest_pattern(config.pattern, window=_maybe_window(config))
    prior = resolve_prior(config.prior)
    summary_fn = make_summary_fn(config)
    t_obs = summary_fn(pattern)
    if not t_obs.is_finite:
        raise ValidationError("observed pattern has non-finite summaries")
    sim = make_simulator(config.model, pattern.window, config.grid, config.burnin)
    pilot = run_pilot(prior, sim, config.k_pilot, config.m, config.seed, summary_fn, config.workers)
    io.write_pilot(pilot, outdir / "pilot.csv")
    projections = fit_projections(pilot, t_obs, seed=config.seed)
    eps = choose_epsilon(pilot_distances(projections, pilot, t_obs))
    posterior = abc_rejection(
        prior, sim, projections, t_obs, eps, config.k_abc, config.m,
        config.seed, summary_fn, config.workers, config.budget,
    )
    io.write_posterior(posterior.samples, outdir / "posterior.csv")
    report = {}
    for name, model in zip(PARAM_NAMES, projections):
        report[name] = {
            "intercept": model.intercept,
            "lambda": model.lam,
            "fitted_variance": model.fitted_variance,
            "support": [t_obs.names[j] for j in model.support],
            "coef_std": {t_obs.names[j]: model.coef_std[j] for j in model.support},
        }
    (outdir / "projections.json").write_text(json.dumps(report, indent=2, default=float) + "\n")
    kdes = {}
    if posterior.k >= 2:
        (outdir / "posterior_summary.json").write_text(
            json.dumps(posterior_summary(posterior), indent=2, default=float) + "\n"
        )
        for name in PARAM_NAMES:
            kde = kde_1d(posterior.column(name))
            if kde is not None:
                kdes[name] = kde
                _write_xy(outdir / f"kde_{name}.csv", "x,density", kde.x, kde.density)
    if config.figures and posterior.k >= 2:
        from . import plots

        plots.plot_posteriors(posterior, prior, outdir / "posteriors.png", kdes)
    extra = {
        "epsilon": eps,
        "k_accepted": posterior.k,
        "attempts": posterior.attempts,
        "simulations": posterior.simulations,
        "pilot_excluded": pilot.excluded,
        "shortfall": posterior.shortfall,
    }
    if posterior.shortfall:
        (outdir / "posterior.csv.partial").write_text(json.dumps(extra, default=str) + "\n")
        return 2, extra
    return 0, extra


def _run_envelope(config: RunConfig, outdir: Path):
    pattern = ingest_pattern(config.pattern, window=_maybe_window(config))
    samples = io.read_posterior(config.posterior)
    if samples.shape[0] < 1:
        raise ValidationError("posterior file holds no draws")
    samples = samples[: config.n_sims]
    w = pattern.window
    from .summaries import default_r_grid

    r_l = default_r_grid(w, config.curve_points, config.env_l_fraction)
    r_j = default_r_grid(w, config.curve_points, config.env_j_fraction)
    stats = [partial(l_centred, r_grid=r_l), partial(j_curve, r_grid=r_j)]
    sim = make_simulator(config.model, w, config.grid, config.burnin)
    sets = posterior_predictive_curves(
        samples, sim, stats, pattern, seed=config.seed, workers=config.workers
    )
    combined = combined_envelope(sets, level=config.level)
    io.write_envelope(combined.envelopes[0], outdir / "envelope_l.csv")
    io.write_envelope(combined.envelopes[1], outdir / "envelope_j.csv")
    verdict = {
        "p_value": combined.p_value,
        "rejected": bool(combined.rejected),
        "level": config.level,
        "n_sims": int(sets[0].s),
        "model": config.model,
    }
    (outdir / "verdict.json").write_text(json.dumps(verdict, indent=2) + "\n")
    if config.figures:
        from . import plots

        plots.plot_envelope(combined.envelopes[0], outdir / "envelope_l.png",
                            title=f"{config.model} L", ylabel="L(r) - r")
        plots.plot_envelope(combined.envelopes[1], outdir / "envelope_j.png",
                            title=f"{config.model} J", ylabel="J(r)")
    return 0, verdict


def _run_choose(config: RunConfig, outdir: Path):
    pattern = ingest_pattern(config.pattern, window=_maybe_window(config))
    prior = resolve_prior(config.prior)
    summary_fn = make_summary_fn(config)
    t_obs = summary_fn(pattern)
    table = build_reference_table(
        prior, config.n_ref, config.m, config.seed, pattern.window,
        config.grid, config.burnin, MODEL_NAMES, summary_fn, config.workers,
    )
    forest = train_forest(table, config.n_trees, config.seed, workers=config.workers)
    choice = choose_model(forest, t_obs)
    payload = {
        "selected_model": choice.selected,
        "vote_fractions": choice.vote_fractions,
        "posterior_probability": choice.posterior_probability,
        "oob_error": choice.oob_error,
        "n_excluded": table.excluded,
        "tie_broken": choice.tie_broken,
    }
    (outdir / "choice.json").write_text(json.dumps(payload, indent=2) + "\n")
    if config.figures:
        from . import plots

        plots.plot_votes(choice, outdir / "votes.png")
    return 0, payload


_RUNNERS = {
    "simulate": _run_simulate,
    "summarize": _run_summarize,
    "trace": _run_trace,
    "pilot": _run_pilot,
    "fit": _run_fit,
    "envelope": _run_envelope,
    "choose": _run_choose,
}


def _maybe_window(config: RunConfig) -> Window | None:
    return Window(*config.window) if config.window is not None else None


def run_pipeline(config: RunConfig) -> int:
    """Execute one subcommand; writes artifacts + manifest, returns exit code."""
    if config.subcommand not in _RUNNERS:
        raise ValidationError(f"unknown subcommand {config.subcommand!r}")
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    code, extra = _RUNNERS[config.subcommand](config, outdir)
    extra["_elapsed"] = round(time.perf_counter() - t0, 3)
    _write_manifest(outdir, config, extra)
    return code


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; 2 is the budget code
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", type=str, default=None, help="JSON config; flags win")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=None)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--window", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                   default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="lgcpstrauss", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", parents=[], help="simulate one pattern")
    _add_common(p)
    p.add_argument("--model", choices=[*MODEL_NAMES, "poisson"], default=None)
    for name in PARAM_NAMES:
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--dump-field", dest="dump_field", action="store_true", default=None)

    p = sub.add_parser("summarize", help="summary vector and curves of a pattern")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--l-points", dest="l_points", type=int, default=None)
    p.add_argument("--l-fraction", dest="l_fraction", type=float, default=None)
    p.add_argument("--quadrats", type=int, nargs="+", default=None)

    p = sub.add_parser("trace", help="two-initial-state burn-in traces")
    _add_common(p)
    p.add_argument("--prior", default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--iters", type=int, default=None)
    for name in PARAM_NAMES:
        p.add_argument(f"--{name}", type=float, default=None)

    p = sub.add_parser("pilot", help="prior-predictive pilot run")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--prior", default=None)
    p.add_argument("--model", choices=list(MODEL_NAMES), default=None)
    p.add_argument("--k-pilot", dest="k_pilot", type=int, default=None)
    p.add_argument("--m", type=int, default=None)

    p = sub.add_parser("fit", help="full semi-automatic ABC fit")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--prior", default=None)
    p.add_argument("--model", choices=list(MODEL_NAMES), default=None)
    p.add_argument("--k-pilot", dest="k_pilot", type=int, default=None)
    p.add_argument("--k-abc", dest="k_abc", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--l-points", dest="l_points", type=int, default=None)
    p.add_argument("--l-fraction", dest="l_fraction", type=float, default=None)
    p.add_argument("--quadrats", type=int, nargs="+", default=None)

    p = sub.add_parser("envelope", help="posterior-predictive combined envelope test")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--posterior", required=True)
    p.add_argument("--model", choices=list(MODEL_NAMES), default=None)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--n-sims", dest="n_sims", type=int, default=None)
    p.add_argument("--curve-points", dest="curve_points", type=int, default=None)

    p = sub.add_parser("choose", help="random-forest model choice")
    _add_common(p)
    p.add_argument("--pattern", required=True)
    p.add_argument("--prior", default=None)
    p.add_argument("--n-ref", dest="n_ref", type=int, default=None)
    p.add_argument("--n-trees", dest="n_trees", type=int, default=None)
    p.add_argument("--m", type=int, default=None)

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < explicit flags."""
    config = RunConfig(subcommand=args.subcommand)
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text())
        for key, value in file_cfg.items():
            if not hasattr(config, key):
                raise ValidationError(f"unknown config key {key!r}")
            setattr(config, key, tuple(value) if isinstance(value, list) else value)
    for key, value in vars(args).items():
        if key in ("config", "subcommand") or value is None:
            continue
        setattr(config, key, tuple(value) if isinstance(value, list) else value)
    return config


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        return run_pipeline(config)
    except (ValidationError, PilotScreenError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
