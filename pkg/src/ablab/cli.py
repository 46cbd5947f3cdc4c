"""Command-line experiment runner.

Each subcommand reads one config, writes CSV/JSON artifacts into the output
directory and returns a RunReport.  Exit codes: 0 success, 2 config error,
3 stage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cache import ArtifactCache
from .cocycle import expander_family, freeness_certificate
from .config import ExperimentConfig
from .errors import AblabError, ConfigInvalid, StageError
from .measures import (
    bernoulli_estimate,
    bernoulli_fourier,
    density_smoothness_probe,
    furstenberg_fixed_point,
    furstenberg_mc,
    pisot_nondecay_probe,
)
from .numberfield import conjugates, diophantine_floor, hypothesis_check, real_root
from .seeding import derive_seed
from .spectrum import (
    EnergyGrid,
    SpectralRow,
    energy_derivative_probe,
    halperin_alpha,
    holder_probe,
    ids_sturm,
    n_to_l,
    phi_vector,
    spectral_rows,
    support_window,
)
from .transferop import build_operator, deviation_decay, expander_average_norm, gap_curve, smoothing_suite

log = logging.getLogger("ablab")

SUBCOMMANDS = ("check-lambda", "free-cert", "gap", "spectrum", "smoothing", "measure", "bernoulli", "report")


@dataclass
class RunReport:
    subcommand: str
    config: dict
    version: str = __version__
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


class _Run:
    """Book-keeping shared by the stage functions."""

    def __init__(self, sub, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.outdir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.report = RunReport(sub, cfg.to_dict())
        self.cache = ArtifactCache.from_env(self.out / "cache")

    def seed(self, index, tag):
        s = derive_seed(self.cfg.seed, index, tag)
        self.report.seeds.append({"master": self.cfg.seed, "index": index, "tag": tag, "seed": s})
        return s

    def write_json(self, name, payload):
        path = self.out / name
        path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        self.report.artifacts[name] = str(path)
        return path

    def write_csv(self, name, header, rows):
        path = self.out / name
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        self.report.artifacts[name] = str(path)
        return path

    def write_text(self, name, text):
        path = self.out / name
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        self.report.artifacts[name] = str(path)
        return path

    def timed(self, name, fn, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        except (AblabError, ValueError, ArithmeticError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.report.timings[name] = round(time.perf_counter() - t, 6)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _clean(x):
    """Make a payload JSON-safe: non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _check_lambda(r: _Run):
    cfg = r.cfg
    alpha = r.timed("lambda", cfg.lambda_spec.algebraic)
    rep = r.timed("hypothesis", hypothesis_check, alpha, cfg.C)
    floor = diophantine_floor(alpha, 2, cfg.cert.ell_max)
    payload = {
        "lambda": alpha.to_dict(),
        "hypothesis": rep.to_dict(),
        "all_ok": rep.all_ok,
        "conjugates": [[z.real, z.imag] for z in conjugates(alpha)],
        "diophantine_floor": {"R": 2, "ell": cfg.cert.ell_max, "value": floor.value, "log10": floor.log10},
    }
    r.write_json("check_lambda.json", payload)
    r.report.metrics.update(all_ok=rep.all_ok, pisot=rep.pisot)


def _free_cert(r: _Run):
    cfg = r.cfg
    alpha = r.timed("lambda", cfg.lambda_spec.algebraic)
    cert = r.timed("certificate", freeness_certificate, alpha, cfg.cert.mu_mode, cfg.cert.ell_max)
    r.write_json("free_cert.json", cert.to_dict())
    r.report.metrics.update(status=cert.status, witness=cert.to_dict()["witness"],
                            floor_ok=cert.floor_ok, words_checked=cert.words_checked)


def _gap(r: _Run):
    cfg, op = r.cfg, r.cfg.operator
    lam = cfg.lam
    A = r.timed("build", build_operator, op.E, lam, op.n_max, op.M, op.variant, op.frame, cache=r.cache)
    Ks = [K for K in op.K_list if K < op.n_max / 2]
    curve = r.timed("k_scan", gap_curve, A, Ks)
    r.write_csv("gap.csv", ("K", "norm", "half_norm", "sensitivity", "iterations"),
                [(c.K, c.norm, c.half_norm, c.sensitivity, c.iterations) for c in curve])
    payload = {"E": op.E, "lambda": lam, "n_max": op.n_max, "M": A.meta.M, "frame": op.frame,
               "variant": op.variant,
               "curve": [c.__dict__ for c in curve], "cache_hits": r.cache.hits}
    if lam > 0:
        def expander():
            try:
                fam = expander_family(cfg.lambda_spec.algebraic(), cfg.tau, require_brenner=True)
            except AblabError as exc:
                log.warning("expander family skipped: %s", exc)
                return None
            return expander_average_norm(None, cfg.tau, op.expander_K, op.expander_n_max, family=fam)
        ex = r.timed("expander", expander)
        payload["expander"] = None if ex is None else ex.__dict__
    r.write_json("gap.json", payload)
    best = min(curve, key=lambda c: c.norm)
    r.report.metrics.update(gap_curve=[[c.K, c.norm] for c in curve], best_norm=best.norm,
                            best_K=best.K, sensitivity=best.sensitivity, cache_hits=r.cache.hits)


def _spectrum(r: _Run):
    cfg, mc = r.cfg, r.cfg.mc
    lam = cfg.lam
    grid = EnergyGrid.uniform(cfg.grid.lo, cfg.grid.hi, cfg.grid.count, cfg.delta)
    for i in range(len(grid)):
        r.seed(i, "lyapunov")
    for j in range(mc.samples):
        r.seed(j, "ids")
    rows = r.timed("rows", spectral_rows, grid, lam, mc.steps, mc.sites, mc.samples, cfg.seed,
                   mc.ell, mc.op_n_max, cfg.threads)
    r.write_csv("spectrum.csv", SpectralRow.COLUMNS, [row.as_tuple() for row in rows])

    window = support_window(lam, step=mc.window_step)
    ids = r.timed("ids_window", ids_sturm, window, lam, mc.sites, mc.samples, cfg.seed, cfg.threads)
    r.write_csv("ids_window.csv", ("E", "N", "N_se"), ids.rows())
    L_th = r.timed("thouless", n_to_l, ids.E, ids.N, grid.array())
    resid = [abs(a - row.L_mc) for a, row in zip(L_th, rows)]
    r.write_csv("thouless.csv", ("E", "L_thouless", "L_mc", "abs_diff"),
                [(row.E, a, row.L_mc, d) for a, row, d in zip(L_th, rows, resid)])
    try:
        alpha_hat, r2 = holder_probe(ids)
    except AblabError as exc:
        log.warning("hoelder probe: %s", exc)
        alpha_hat, r2 = math.nan, math.nan
    summary = {"lambda": lam, "thouless_max_abs": max(resid),
               "alpha0": halperin_alpha(lam) if lam > 0 else math.inf,
               "holder": {"alpha_hat": alpha_hat, "r2": r2}}
    r.write_json("spectrum.json", summary)
    r.report.metrics.update(thouless_residual=max(resid), alpha_hat=alpha_hat, alpha0=summary["alpha0"],
                            max_abs_L_mc=max(abs(row.L_mc) for row in rows))


def _smoothing(r: _Run):
    cfg, sm = r.cfg, r.cfg.smoothing
    lam, E = cfg.lam, cfg.operator.E
    suite = r.timed("suite", smoothing_suite, E, lam, ks=sm.ks, m_max=sm.m_max, n_max=sm.n_max,
                    frame=cfg.operator.frame, seed=r.seed(0, "smoothing"))
    A = r.timed("build_raw", build_operator, E, lam, sm.n_max, None, "plain", "raw", cache=r.cache)
    nu = r.timed("fixed_point", furstenberg_fixed_point, E, lam, sm.n_max, A=A)
    f = phi_vector(E, lam, sm.n_max)
    dev = r.timed("deviation", deviation_decay, E, lam, f, sm.deviation_ell, nu, A=A)
    d1 = r.timed("derivative_k1", energy_derivative_probe, E, lam, 1, sm.ell, n_max=sm.derivative_n_max)
    d2 = r.timed("derivative_k2", energy_derivative_probe, E, lam, 2, sm.ell, n_max=sm.derivative_n_max)
    rows = []
    for k, c in suite.dyadic_decay.items():
        rows += [(f"dyadic_{k}", m, v) for m, v in zip(c.x, c.y)]
    rows += [("deviation", m, v) for m, v in enumerate(dev.values)]
    rows += [("phi_derivative_sup", m, v) for m, v in enumerate(d1.deriv_sup)]
    r.write_csv("smoothing_curves.csv", ("curve", "m", "value"), rows)
    d = dev.values
    ratio = d[40] / d[20] if len(d) > 40 and d[20] > 0 else math.nan
    ds = d1.deriv_sup
    r.write_json("smoothing.json", {"suite": suite.to_dict(),
                                    "deviation": {"values": d, "rate": dev.rate, "r2": dev.r2,
                                                  "ratio_40_20": ratio},
                                    "derivative_k1": d1.to_dict(), "derivative_k2": d2.to_dict()})
    r.report.metrics.update(
        dyadic_r2={str(k): c.r2 for k, c in suite.dyadic_decay.items()},
        dyadic_rate={str(k): c.rate for k, c in suite.dyadic_decay.items()},
        deviation_ratio=ratio, fd_error=d1.fd_error,
        derivative_ratio_30_15=ds[30] / ds[15] if len(ds) > 30 else math.nan)


def _measure(r: _Run):
    cfg, ms = r.cfg, r.cfg.measure
    lam, E = cfg.lam, cfg.operator.E
    fp = r.timed("fixed_point", furstenberg_fixed_point, E, lam, ms.n_max, frame=ms.frame)
    mc = r.timed("monte_carlo", furstenberg_mc, E, lam, ms.n_samples, cfg.mc.burn_in,
                 r.seed(0, "furstenberg"), ms.compare_n, ms.frame)
    sm = r.timed("smoothness", density_smoothness_probe, fp, ms.r)
    c, n = fp.n_max, ms.compare_n
    diff = np.abs(fp.fourier[c - n:c + n + 1] - mc.fourier)
    r.write_csv("measure_coeffs.csv", ("n", "fp_re", "fp_im", "mc_re", "mc_im", "mc_se"),
                [(k, fp.coeff(k).real, fp.coeff(k).imag, mc.coeff(k).real, mc.coeff(k).imag,
                  mc.stderr[k + n]) for k in range(-n, n + 1)])
    r.write_text("measure_fixed_point_hist.csv", fp.histogram_csv())
    r.write_text("measure_mc_hist.csv", mc.histogram_csv())
    r.write_json("measure.json", {"fixed_point": fp.to_dict(), "monte_carlo": mc.to_dict(),
                                  "smoothness": sm.to_dict(), "max_coeff_diff": float(diff.max())})
    r.report.metrics.update(max_coeff_diff=float(diff.max()), residual=fp.residual,
                            block_slope=sm.slope, verdict=sm.verdict)


def _bernoulli(r: _Run):
    b = r.cfg.bernoulli
    xi = 0.3
    half = bernoulli_fourier(0.5, xi)
    closed = math.sin(4 * math.pi * xi) / (4 * math.pi * xi)
    probes = {str(lam): pisot_nondecay_probe(lam, b.k_max) for lam in b.lambdas}
    rows = [(lam, k, v) for lam in b.lambdas for k, v in enumerate(probes[str(lam)])]
    r.write_csv("bernoulli_probe.csv", ("lambda", "k", "abs_nu_hat"), rows)
    for i, lam in enumerate(b.lambdas):
        est = bernoulli_estimate(lam, b.n_max)
        r.write_text(f"bernoulli_hist_{i}.csv", est.histogram_csv())
    mins = {k: min(v[5:21]) if len(v) > 5 else math.nan for k, v in probes.items()}
    r.write_json("bernoulli.json", {"closed_form_check": {"xi": xi, "product": half, "closed": closed,
                                                          "abs_diff": abs(half - closed)},
                                    "probes": probes, "min_k5_20": mins})
    r.report.metrics.update(closed_form_diff=abs(half - closed), min_k5_20=mins)


def _report(r: _Run):
    docs = {}
    for p in sorted(r.out.glob("*.json")):
        if p.name in ("report.json",) or p.name.startswith("run_"):
            continue
        docs[p.name] = json.loads(p.read_text())
    if not docs:
        raise ConfigInvalid("no artifacts found", {"outdir": str(r.out)})
    runs = {p.name: json.loads(p.read_text()) for p in sorted(r.out.glob("run_*.json"))}
    r.write_json("report.json", {"artifacts": docs, "runs": runs})
    r.report.metrics.update(n_artifacts=len(docs))


STAGES = {
    "check-lambda": _check_lambda,
    "free-cert": _free_cert,
    "gap": _gap,
    "spectrum": _spectrum,
    "smoothing": _smoothing,
    "measure": _measure,
    "bernoulli": _bernoulli,
    "report": _report,
}


def run(subcommand: str, config: ExperimentConfig) -> RunReport:
    """Run one subcommand and persist its RunReport as ``run_<name>.json``."""
    if subcommand not in STAGES:
        raise ConfigInvalid(f"unknown subcommand {subcommand!r}", {"subcommand": subcommand})
    errs = config.problems()
    if errs:
        raise ConfigInvalid("invalid config", errs)
    r = _Run(subcommand, config)
    t = time.perf_counter()
    try:
        STAGES[subcommand](r)
    except (ConfigInvalid, StageError):
        raise
    except (AblabError, ValueError, ArithmeticError) as exc:
        raise StageError(subcommand, exc) from exc
    r.report.timings["total"] = round(time.perf_counter() - t, 6)
    if subcommand != "report":
        path = r.out / f"run_{subcommand.replace('-', '_')}.json"
        path.write_text(json.dumps(_clean(r.report.to_dict()), indent=2, sort_keys=True) + "\n")
    return r.report


def build_parser():
    p = argparse.ArgumentParser(prog="ablab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--outdir", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and cache hits")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        over = {k: getattr(args, k) for k in ("outdir", "seed", "threads") if getattr(args, k) is not None}
        if over:
            cfg = cfg.replace(**over)
        report = run(args.subcommand, cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(_clean(report.metrics), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
