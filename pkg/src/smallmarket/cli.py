"""Command-line front end.

Every subcommand reads its inputs, runs one library operation and writes a
single artifact (JSON, or CSV with ``#`` header lines) that embeds the tool
version and the resolved run configuration.  Artifacts are written only
after the computation succeeds, so a failed run leaves no partial file.

Exit codes: 0 ok, 2 parse/I-O error, 3 validation error, 4 failed
precondition, 5 internal error.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .dist import (
    ONE,
    ZERO,
    ContinuousSampler,
    DistError,
    ProductPrior,
    UniformMix,
    discretize,
    fmt_value,
    prior_from_json,
    sampler_from_json,
    to_value,
    uniform,
)
from .gft import expected_gft
from .learn import (
    FRESH_FACTOR,
    ORACLE_GRID,
    distinguisher,
    generic_triple_sampler,
    gft_stability_check,
    learn_mechanism,
)
from .mech import CompatPair, PairError, execute, pair_from_json
from .optdp import solve
from .oracle import (
    CapExceeded,
    Mode,
    NotGeneric,
    brute_force_opt,
    dsic_audit,
    overfit_mechanism,
    pair_executor,
    triple_first_best,
    triple_gft,
    triples_from_json,
)
from .transform import canonicalize_steps

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_PRECONDITION, EXIT_INTERNAL = 0, 2, 3, 4, 5
CONFIG_ENV = "SMALLMARKET_CONFIG"


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --- configuration ----------------------------------------------------------


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    epsilon: str = "1/10"
    delta: str = "1/10"
    grid: int = 21
    trials: int = 20
    size_factor: str = "4"
    fresh_factor: str = str(FRESH_FACTOR)
    oracle_grid: int = ORACLE_GRID
    mc_samples: int = 100_000
    inputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        for key in ("seed", "grid", "trials", "oracle_grid", "mc_samples"):
            if not isinstance(getattr(self, key), int) or isinstance(getattr(self, key), bool):
                raise DistError(f"config {key} must be an integer")
        eps, dlt = to_value(self.epsilon), to_value(self.delta)
        if not (0 < eps < 1):
            raise DistError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not (0 < dlt < Fraction(1, 2)):
            raise DistError(f"delta must be in (0, 1/2), got {self.delta}")
        if self.grid < 2 or self.oracle_grid < 2:
            raise DistError("grid sizes must be >= 2")
        if self.trials < 1 or self.mc_samples < 1:
            raise DistError("trials and mc_samples must be >= 1")
        if self.seed < 0:
            raise DistError("seed must be non-negative")
        if to_value(self.size_factor) <= 0 or to_value(self.fresh_factor) <= 0:
            raise DistError("constant factors must be positive")
        # canonical rational spelling so equal configs serialize identically
        self.epsilon, self.delta = fmt_value(eps), fmt_value(dlt)
        self.size_factor = fmt_value(to_value(self.size_factor))
        self.fresh_factor = fmt_value(to_value(self.fresh_factor))
        return self

    def to_json(self) -> dict:
        return asdict(self)


_CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command", "inputs", "extra"}


def _load_config_file(path: str | None) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise DistError("config file must hold a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise DistError(f"unknown config keys: {sorted(unknown)}")
    return doc


def build_config(command: str, config_path: str | None, inputs: dict, **flags) -> RunConfig:
    """Defaults, then the config file (``--config`` or $SMALLMARKET_CONFIG), then explicit flags."""
    cfg = RunConfig(command=command, inputs={k: v for k, v in inputs.items() if v is not None})
    for key, val in _load_config_file(config_path).items():
        setattr(cfg, key, val)
    for key, val in flags.items():
        if val is None:
            continue
        if key in _CONFIG_KEYS:
            setattr(cfg, key, val)
        else:
            cfg.extra[key] = val
    for key in ("epsilon", "delta", "size_factor", "fresh_factor"):
        setattr(cfg, key, str(getattr(cfg, key)))
    return cfg.validate()


# --- I/O --------------------------------------------------------------------


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliFailure(EXIT_PARSE, f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise CliFailure(EXIT_PARSE, f"{path}: {exc.strerror or exc}") from exc


def _header(cfg: RunConfig) -> dict:
    return {"tool": {"name": "smallmarket", "version": __version__}, "run_config": cfg.to_json()}


def _atomic_write(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def emit_json(cfg: RunConfig, body: dict, out: str | None) -> None:
    text = json.dumps({**_header(cfg), **body}, indent=2) + "\n"
    if out:
        _atomic_write(out, text)
    else:
        click.echo(text, nl=False)


def emit_csv(cfg: RunConfig, columns: list[str], rows: list[dict], out: str | None, notes: list[str] = ()) -> None:
    buf = io.StringIO()
    buf.write(f"# tool smallmarket {__version__}\n")
    buf.write("# run_config " + json.dumps(cfg.to_json(), sort_keys=True) + "\n")
    for note in notes:
        buf.write(f"# {note}\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    if out:
        _atomic_write(out, buf.getvalue())
    else:
        click.echo(buf.getvalue(), nl=False)


def read_csv_artifact(text: str) -> tuple[list[str], list[dict]]:
    """Split a CSV artifact into its ``#`` header lines and data rows."""
    lines = text.splitlines()
    notes = [ln[2:] for ln in lines if ln.startswith("# ")]
    data = [ln for ln in lines if not ln.startswith("#")]
    return notes, list(csv.DictReader(data))


def _load_prior(path: str) -> ProductPrior:
    return prior_from_json(_read_json(path))


def _load_pair(path: str) -> CompatPair:
    doc = _read_json(path)
    if isinstance(doc, dict) and "pair" in doc:  # a solve/oracle artifact
        doc = doc["pair"]
    if isinstance(doc, dict) and "learn_report" in doc:
        doc = doc["learn_report"]
    if isinstance(doc, dict) and "mechanism" in doc:  # a learn artifact
        doc = doc["mechanism"]
    return pair_from_json(doc)


def _run(fn):
    """Map library exceptions onto the exit-code taxonomy."""
    try:
        fn()
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except NotGeneric as exc:
        click.echo(f"error: {exc}", err=True)
        click.echo(f"witness: {fmt_value(exc.witness)}", err=True)
        sys.exit(EXIT_PRECONDITION)
    except CapExceeded as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PRECONDITION)
    except (DistError, PairError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PRECONDITION)
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)


def _report_json(rep) -> dict:
    def pt(p):
        return None if p is None else [fmt_value(v) for v in p]

    return {
        "compatible": rep.compatible,
        "compat_witness": pt(rep.compat_witness),
        "monotone1": rep.monotone1,
        "monotone2": rep.monotone2,
        "tight_from": pt(rep.tight_from),
        "tight": rep.tight,
        "tight_witness": pt(rep.tight_witness),
    }


# --- commands ---------------------------------------------------------------

_config_opt = click.option("--config", "config_path", type=click.Path(), help=f"JSON defaults (or ${CONFIG_ENV}).")
_out_opt = click.option("--out", type=click.Path(), help="Output file (stdout if omitted).")
_seed_opt = click.option("--seed", type=int, help="Base RNG seed.")


@click.group()
@click.version_option(__version__, prog_name="smallmarket")
def main():
    """Optimal and learned simple mechanisms for one seller and two buyers."""


@main.command("solve")
@click.option("--prior", required=True, type=click.Path())
@click.option("--g-dump", type=click.Path(), help="Also write the DP value matrix as CSV.")
@_out_opt
@_config_opt
def cmd_solve(prior, g_dump, out, config_path):
    """GFT-optimal simple mechanism for a finite product prior."""

    def body():
        cfg = build_config("solve", config_path, {"prior": prior})
        res = solve(_load_prior(prior))
        t = res.tables
        doc = {
            "pair": res.pair.to_json(),
            "stats": res.stats.to_json(),
            "best_prices": [fmt_value(t.support[t.p1_index]), fmt_value(t.support[t.p2_index])],
            "dp_total": fmt_value(t.dp_total),
        }
        if g_dump:
            if t.g_rows is None:
                raise CliFailure(EXIT_PRECONDITION, "support too large to retain the G matrix")
            rows = [
                {"i": fmt_value(t.support[i]), "j": fmt_value(t.support[j]), "g": fmt_value(t.g(i, j)),
                 "pointer": "RIGHT" if t.pointer(i, j) == 1 else "UP"}
                for i in range(t.p1_index, t.m)
                for j in range(t.p2_index, t.m)
            ]
            emit_csv(cfg, ["i", "j", "g", "pointer"], rows, g_dump)
        emit_json(cfg, doc, out)
        if out:
            s = res.stats
            click.echo(f"{'total':<11}{fmt_value(s.total):>24}  {float(s.total):.6f}")
            click.echo(f"{'first_best':<11}{fmt_value(s.first_best):>24}  {float(s.first_best):.6f}")
            click.echo(f"{'gap':<11}{fmt_value(s.gap):>24}  {float(s.gap):.6f}")

    _run(body)


@main.command("eval")
@click.option("--prior", required=True, type=click.Path())
@click.option("--pair", "pair_path", required=True, type=click.Path())
@click.option("--canonicalize", is_flag=True, help="Also run the three-step monotonization.")
@_out_opt
@_config_opt
def cmd_eval(prior, pair_path, canonicalize, out, config_path):
    """Exact expected GFT of a pair under a prior."""

    def body():
        cfg = build_config("eval", config_path, {"prior": prior, "pair": pair_path}, canonicalize=canonicalize or None)
        pr, pair = _load_prior(prior), _load_pair(pair_path)
        doc = {"stats": expected_gft(pair, pr).to_json(), "report": _report_json(pair.report())}
        if canonicalize:
            steps = canonicalize_steps(pair, pr)
            doc["canonical"] = {
                "best_prices": [fmt_value(v) for v in steps.best_prices],
                "steps": [{"pair": p.to_json(), "total": fmt_value(s.total)} for p, s in zip(steps.pairs, steps.stats)],
                "report": _report_json(steps.result.report(steps.best_prices)),
            }
        emit_json(cfg, doc, out)

    _run(body)


@main.command("learn")
@click.option("--sampler", "sampler_path", required=True, type=click.Path(), help="Prior or sampler-spec JSON.")
@click.option("--epsilon", type=str)
@click.option("--delta", type=str)
@_seed_opt
@_out_opt
@_config_opt
def cmd_learn(sampler_path, epsilon, delta, seed, out, config_path):
    """Learn a mechanism from samples and score it on the true distribution."""

    def body():
        cfg = build_config("learn", config_path, {"sampler": sampler_path}, epsilon=epsilon, delta=delta, seed=seed)
        src = sampler_from_json(_read_json(sampler_path))
        rep = learn_mechanism(src, cfg.epsilon, cfg.delta, cfg.seed, to_value(cfg.size_factor),
                              mc_samples=cfg.mc_samples)
        emit_json(cfg, {"learn_report": rep.to_json()}, out)

    _run(body)


@main.command("stability")
@click.option("--prior", required=True, type=click.Path())
@click.option("--pair", "pair_path", required=True, type=click.Path())
@click.option("--epsilon", type=str)
@click.option("--delta", type=str)
@click.option("--trials", type=int)
@_seed_opt
@click.option("--csv", "csv_out", type=click.Path(), help="Per-trial rows as CSV.")
@_out_opt
@_config_opt
def cmd_stability(prior, pair_path, epsilon, delta, trials, seed, csv_out, out, config_path):
    """GFT differences between a prior and empirical priors of epsilon-samples."""

    def body():
        cfg = build_config("stability", config_path, {"prior": prior, "pair": pair_path},
                           epsilon=epsilon, delta=delta, trials=trials, seed=seed)
        rep = gft_stability_check(_load_pair(pair_path), _load_prior(prior), cfg.epsilon, cfg.seed, cfg.trials,
                                  to_value(cfg.delta), to_value(cfg.size_factor))
        eps = rep.epsilon
        doc = {
            "sample_size": rep.sample_size,
            "trials": rep.trials,
            "discarded": rep.discarded,
            "max_total": fmt_value(rep.max_total),
            "max_buyer1": fmt_value(rep.max_buyer1),
            "max_buyer2": fmt_value(rep.max_buyer2),
            "bound_total": fmt_value(12 * eps),
            "bound_buyer": fmt_value(6 * eps),
            "violations": [{"trial": k, "total": fmt_value(a), "buyer1": fmt_value(b), "buyer2": fmt_value(c)}
                           for k, a, b, c in rep.violations],
        }
        if csv_out:
            rows = [
                {"trial": r["trial"], "seed": cfg.seed, "discarded": int(r["discarded"]),
                 **{k: fmt_value(r[k]) if k in r else "" for k in ("total", "buyer1", "buyer2")}}
                for r in rep.rows
            ]
            emit_csv(cfg, ["trial", "seed", "discarded", "total", "buyer1", "buyer2"], rows, csv_out)
        emit_json(cfg, doc, out)

    _run(body)


@main.command("oracle")
@click.option("--prior", required=True, type=click.Path())
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default=Mode.ALL_COMPATIBLE.value)
@_out_opt
@_config_opt
def cmd_oracle(prior, mode, out, config_path):
    """Exhaustive GFT maximizer over compatible pairs (small supports only)."""

    def body():
        cfg = build_config("oracle", config_path, {"prior": prior}, mode=mode)
        pr = _load_prior(prior)
        pair, best = brute_force_opt(pr, Mode(mode))
        dp = solve(pr).stats.total
        emit_json(cfg, {"pair": pair.to_json(), "total": fmt_value(best), "solve_total": fmt_value(dp),
                        "agrees": best == dp}, out)

    _run(body)


@main.command("audit")
@click.option("--pair", "pair_path", required=True, type=click.Path(), help="Pair JSON or a solve artifact.")
@click.option("--grid", "grid_values", type=str, help="Comma-separated bid grid (default: the pair's support).")
@_out_opt
@_config_opt
def cmd_audit(pair_path, grid_values, out, config_path):
    """Exhaustive DSIC / IR / budget-balance / normalization audit of a pair."""

    def body():
        cfg = build_config("audit", config_path, {"pair": pair_path}, grid_values=grid_values)
        pair = _load_pair(pair_path)
        grid = [to_value(v) for v in grid_values.split(",")] if grid_values else list(pair.support)
        bad = [v for v in grid if v not in set(pair.support)]
        if bad:
            raise PairError(f"grid values {[fmt_value(v) for v in bad]} are not support points")
        found = dsic_audit(pair_executor(pair), grid)
        doc = {
            "grid": [fmt_value(v) for v in grid],
            "violation_count": len(found),
            "violations": [
                {"kind": v.kind, "agent": v.agent, "bids": [fmt_value(b) for b in v.bids],
                 "misreport": None if v.misreport is None else fmt_value(v.misreport), "detail": v.detail}
                for v in found
            ],
        }
        emit_json(cfg, doc, out)
        if found:
            raise CliFailure(EXIT_VALIDATION, f"{len(found)} incentive violations")

    _run(body)


@main.command("overfit")
@click.option("--triples", "triples_path", required=True, type=click.Path())
@click.option("--weak", is_flag=True, help="Only require distinct values within each coordinate.")
@_out_opt
@_config_opt
def cmd_overfit(triples_path, weak, out, config_path):
    """Overfit mechanism for a generic triple set, with its GFT and the first best."""

    def body():
        cfg = build_config("overfit", config_path, {"triples": triples_path}, weak=weak or None)
        tset = triples_from_json(_read_json(triples_path))
        pair = overfit_mechanism(tset, weak=weak)
        g, fb = triple_gft(pair, tset), triple_first_best(tset)
        emit_json(cfg, {"pair": pair.to_json(), "gft": fmt_value(g), "first_best": fmt_value(fb),
                        "equal": g == fb}, out)

    _run(body)


IMPOSSIBILITY_COLUMNS = ["regime", "seed", "t", "c", "T", "learner", "fresh_samples",
                         "g_star_c", "g_c", "statistic", "threshold", "verdict"]


@main.command("impossibility")
@click.option("--t", "t", type=int, default=200, show_default=True, help="Samples given to the learner.")
@click.option("--c", "c", type=str, default="1/50", show_default=True, help="Accuracy guess.")
@click.option("--regime", type=click.Choice(["generic", "uniform", "both"]), default="both", show_default=True)
@click.option("--learner", type=click.Choice(["empirical", "oracle"]), default="empirical", show_default=True)
@click.option("--trials", type=int, help="Seeds per regime (seed, seed+1, ...).")
@_seed_opt
@_out_opt
@_config_opt
def cmd_impossibility(t, c, regime, learner, trials, seed, out, config_path):
    """Distinguisher experiment: one CSV row per (regime, seed)."""

    def body():
        cfg = build_config("impossibility", config_path, {}, t=t, c=c, regime=regime, learner=learner,
                           trials=trials, seed=seed)
        cv = to_value(c)
        if t < 1 or cv <= 0:
            raise DistError("need t >= 1 and c > 0")
        T = 6 * t * t + 1
        regimes = ["generic", "uniform"] if regime == "both" else [regime]
        u = uniform(0, 1)
        rows = []
        for name in regimes:
            for k in range(cfg.trials):
                s = cfg.seed + k
                src = generic_triple_sampler(T, s) if name == "generic" else ContinuousSampler(u, u, u)
                v = distinguisher(src, t, cv, s, learner, to_value(cfg.fresh_factor), cfg.oracle_grid)
                rows.append({
                    "regime": name, "seed": s, "t": t, "c": fmt_value(cv), "T": T if name == "generic" else "",
                    "learner": learner, "fresh_samples": v.fresh, "g_star_c": repr(v.g_star_c), "g_c": repr(v.g_c),
                    "statistic": repr(v.statistic), "threshold": repr(v.threshold), "verdict": v.verdict,
                })
        emit_csv(cfg, IMPOSSIBILITY_COLUMNS, rows, out)

    _run(body)


# --- figure data ------------------------------------------------------------

FIGURE_CASES = ("uniform", "uhalf", "mixture")
UHALF_PROBE = (ZERO, Fraction(2, 5), Fraction(3, 10))


def figure_marginals(case: str) -> tuple[UniformMix, UniformMix, UniformMix]:
    u = uniform(0, 1)
    if case == "uniform":
        return u, u, u
    if case == "uhalf":
        return u, u, uniform(0, Fraction(1, 2))
    if case == "mixture":
        b1 = UniformMix(((Fraction(1, 4), ZERO, Fraction(1, 2)), (Fraction(3, 4), Fraction(1, 2), Fraction(3, 4))))
        b2 = UniformMix(((Fraction(3, 4), ZERO, Fraction(1, 4)), (Fraction(1, 4), Fraction(1, 2), ONE)))
        return u, b1, b2
    raise DistError(f"unknown figure case {case!r}; choose from {', '.join(FIGURE_CASES)}")


def figure_prior(case: str, n: int) -> ProductPrior:
    return ProductPrior(*(discretize(m, n) for m in figure_marginals(case)))


def _nearest(values, target):
    return min(values, key=lambda v: (abs(v - target), v))


def probe_allocation(pair: CompatPair, prior: ProductPrior, point=UHALF_PROBE) -> dict:
    """Outcome at the grid triple nearest to ``point`` (each agent snapped to its own grid)."""
    snapped = tuple(_nearest(d.values, p) for d, p in zip(prior.agents, point))
    o = execute(pair, snapped)
    return {
        "target": [fmt_value(v) for v in point],
        "grid_triple": [fmt_value(v) for v in snapped],
        "allocation": o.allocation.name,
        "payments": [fmt_value(p) for p in o.payments],
        "case": o.case,
    }


@main.command("figures")
@click.option("--case", "case", required=True, type=click.Choice(FIGURE_CASES))
@click.option("--grid", type=int, help="Grid points per uniform component.")
@_out_opt
@_config_opt
def cmd_figures(case, grid, out, config_path):
    """Optimal price functions for the figure distributions, as (value, f1, f2) CSV."""

    def body():
        cfg = build_config("figures", config_path, {}, grid=grid, case=case)
        prior = figure_prior(case, cfg.grid)
        res = solve(prior)
        S = res.pair.support
        f1, f2 = res.pair.f1.to_json(), res.pair.f2.to_json()
        rows = [{"value": fmt_value(v), "f1": f1[k], "f2": f2[k]} for k, v in enumerate(S)]
        t = res.tables
        notes = [
            f"best_prices {fmt_value(S[t.p1_index])} {fmt_value(S[t.p2_index])}",
            f"total {fmt_value(res.stats.total)}",
            f"first_best {fmt_value(res.stats.first_best)}",
        ]
        if case == "uhalf":
            probe = probe_allocation(res.pair, prior)
            notes.append("probe " + json.dumps(probe, sort_keys=True))
            click.echo(f"allocation at {probe['grid_triple']}: {probe['allocation']}", err=True)
        emit_csv(cfg, ["value", "f1", "f2"], rows, out, notes)

    _run(body)


if __name__ == "__main__":  # pragma: no cover
    main()
