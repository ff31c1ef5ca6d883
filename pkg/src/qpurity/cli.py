"""``expctl``: run one experiment, write CSV/JSON (and optionally SVG) plus a manifest.

Parameters are given as flat ``key=value`` arguments, from an INI file
(``--config``, one section per experiment), or both; arguments win.  Every
run writes ``manifest.json`` which ``expctl rerun`` replays exactly.
"""
from __future__ import annotations

import configparser
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import click
import numpy as np

from . import __version__
from .io import write_csv, write_json
from .lindblad import ModelSpec, Preset, ResourceLimitError, measure, unitary
from .spin import INF, is_inf

EXPERIMENTS = ("landscape", "evolve", "steady", "gap-scan", "page-curve", "u1",
               "two-cluster", "chain", "mc-validate", "weingarten")

EXIT_VALIDATION = 2
EXIT_RESOURCE = 3


class ValidationError(ValueError):
    """A configuration value violates a precondition of the target module."""


# ------------------------------------------------------------------ parsing

_ALIASES = {"q'": "qp", "qprime": "qp", "a": "alpha", "α": "alpha", "β": "beta", "lambda": "lam",
            "nsite": "Nsite", "tmax": "tMax", "t_max": "tMax"}


def _norm_key(k: str) -> str:
    k = k.strip()
    return _ALIASES.get(k, _ALIASES.get(k.lower(), k))


def parse_value(s: str):
    """``inf``, ints, floats, booleans, ``a..b`` doubling ranges and comma lists."""
    s = s.strip()
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    if ".." in s:
        lo, hi = (parse_value(p) for p in s.split("..", 1))
        if not (isinstance(lo, int) and isinstance(hi, int) and 0 < lo <= hi):
            raise ValidationError(f"range {s!r} must be two positive integers lo..hi")
        out = []
        n = lo
        while n <= hi:
            out.append(n)
            n *= 2
        return out
    low = s.lower()
    if low in ("inf", "+inf", "infinity", "∞"):
        return INF
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_pairs(pairs) -> dict:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ValidationError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[_norm_key(k)] = parse_value(v)
    return out


def read_config(path, experiment: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise ValidationError(f"cannot read config file {path}")
    out = {}
    for section in ("common", experiment):
        if cp.has_section(section):
            for k, v in cp.items(section):
                out[_norm_key(k)] = parse_value(v)
    return out


# ------------------------------------------------------------------ validation helpers

def _get(cfg, key, default=None, kind=None, required=False):
    if key not in cfg:
        if required:
            raise ValidationError(f"missing required parameter {key}")
        cfg[key] = default
        return default
    v = cfg[key]
    if kind is int and not (isinstance(v, int) and not isinstance(v, bool)):
        raise ValidationError(f"{key} must be an integer, got {v!r}")
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"{key} must be a number, got {v!r}")
        v = float(v)
    return v


def _check(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _dim(cfg, default=INF):
    d = _get(cfg, "d", default, float)
    _check(is_inf(d) or d >= 2, f"d must be >= 2 or inf, got {d}")
    return d


def _terms(cfg, d):
    """Model terms from ``q`` (unitary), ``qp`` (measurement) and strength keys."""
    q = _get(cfg, "q", None)
    qp = _get(cfg, "qp", None)
    alpha = _get(cfg, "alpha", None)
    J = _get(cfg, "J", None)
    lam = _get(cfg, "lam", None)
    terms = []
    if q is not None:
        _check(isinstance(q, int) and q >= 1, f"q must be a positive integer, got {q!r}")
        terms.append(unitary(q, Preset.RAW, float(J)) if J is not None else unitary(q))
    if alpha is not None:
        _check(isinstance(alpha, (int, float)) and alpha >= 0, f"alpha must be >= 0, got {alpha!r}")
        _check(qp in (None, 1), "alpha selects the q'=1 measurement; drop qp or set qp=1")
        _check(q is not None, "alpha requires a unitary term q")
        terms.append(measure(1, alpha=float(alpha)))
    elif qp is not None:
        _check(isinstance(qp, int) and qp >= 1, f"qp must be a positive integer, got {qp!r}")
        if lam is not None:
            terms.append(measure(qp, Preset.RAW, float(lam)))
        else:
            terms.append(measure(qp))
    _check(terms, "model needs at least one of q, qp")
    return tuple(terms)


def _preset_line(terms):
    return ";".join(f"{t.kind.value}(q={t.q},{t.preset.value})" for t in terms)


# ------------------------------------------------------------------ runs

@dataclass
class Run:
    experiment: str
    cfg: dict
    out: str
    plot: bool
    files: list = field(default_factory=list)
    presets: list = field(default_factory=list)

    def path(self, name):
        p = os.path.join(self.out, name)
        self.files.append(name)
        return p

    def csv(self, name, cols, rows, units):
        pre = ";".join(self.presets) if self.presets else "none"
        write_csv(self.path(name), cols, rows, comment=f"units: {units}; preset: {pre}")

    def json(self, name, obj):
        write_json(self.path(name), obj)

    def svg(self, name, fn, *args, **kw):
        if self.plot:
            fn(self.path(name), *args, **kw)


def _threads():
    try:
        return max(1, int(os.environ.get("QPURITY_THREADS", "1")))
    except ValueError:
        raise ValidationError("QPURITY_THREADS must be an integer")


def run_landscape(r: Run):
    from . import plots
    from .rotor import find_minima, landscape_grid
    cfg = r.cfg
    d = _dim(cfg)
    N = _get(cfg, "N", None)
    terms = _terms(cfg, d)
    r.presets.append(_preset_line(terms))
    nt = _get(cfg, "ntheta", 91, int)
    nph = _get(cfg, "nphi", 181, int)
    _check(nt >= 3 and nph >= 3, "ntheta and nphi must be >= 3")
    try:
        th, ph, V = landscape_grid(terms, d, N, nt, nph)
    except ValueError as e:
        raise ValidationError(str(e))
    rows = [(th[i], ph[j], V[i, j]) for i in range(nt) for j in range(nph)]
    r.csv("landscape.csv", ["theta", "phi", "value"], rows, "radians; value is L/N")
    rep = find_minima(terms, d, N)
    r.json("phase.json", {"phase": rep.phase.value, "phi0": rep.phi0, "degeneracy": rep.degeneracy,
                          "minima": [[m.theta, m.phi, m.value] for m in rep.minima],
                          "hessianEigenvalues": rep.hessianEigenvalues})
    r.svg("landscape.svg", plots.heatmap, th, ph, V, title=rep.phase.value)


def _model(cfg):
    d = _dim(cfg)
    N = _get(cfg, "N", required=True, kind=int)
    _check(N >= 2, f"N must be >= 2, got {N}")
    terms = _terms(cfg, d)
    from .lindblad import build_model
    try:
        return build_model(ModelSpec(N, d, terms)), terms
    except ValueError as e:
        raise ValidationError(str(e))


def run_evolve(r: Run):
    from . import plots
    from .dynamics import entropy_from_purity, evolve_purity
    op, terms = _model(r.cfg)
    r.presets.append(_preset_line(terms))
    times = _get(r.cfg, "times", [0.0, 1.0, 10.0, 100.0])
    times = [float(t) for t in (times if isinstance(times, list) else [times])]
    _check(all(t >= 0 for t in times), "times must be >= 0")
    backend = _get(r.cfg, "backend", "auto")
    _check(backend in ("auto", "positive", "eig", "integrate"), "backend must be auto, positive, eig or integrate")
    traj = evolve_purity(op, None, times, backend=backend)
    curves = [entropy_from_purity(traj, i) for i in range(len(times))]
    n = curves[0].n
    rows = [[int(k)] + [c.S2[k] for c in curves] for k in range(len(n))]
    r.csv("entropy.csv", ["n"] + [f"S2_t={t:g}" for t in times], rows, "S2 in nats; t in units of 1/J")
    r.svg("entropy.svg", plots.entropy_curves, [(f"t={t:g}", n, c.S2) for t, c in zip(times, curves)])


def run_steady(r: Run):
    from . import plots
    from .dynamics import steady_state_entropy
    op, terms = _model(r.cfg)
    r.presets.append(_preset_line(terms))
    prec = _get(r.cfg, "precision", "auto")
    c = steady_state_entropy(op, precision=prec)
    r.csv("steady.csv", ["n", "S2"], list(zip(c.n, c.S2)), "S2 in nats")
    r.json("steady.json", c.info)
    r.svg("steady.svg", plots.entropy_curves, [("steady", c.n, c.S2)])


def run_gap_scan(r: Run):
    from . import plots
    from .dynamics import gap_scaling_fit
    from .lindblad import build_model
    cfg = r.cfg
    d = _dim(cfg)
    Ns = _get(cfg, "N", [100, 200, 400, 800])
    Ns = Ns if isinstance(Ns, list) else [Ns]
    _check(len(Ns) >= 2 and all(isinstance(n, int) and n >= 2 for n in Ns),
           "N must list at least two integers >= 2")
    terms = _terms(cfg, d)
    r.presets.append(_preset_line(terms))
    slope, pref, resid, gaps = gap_scaling_fit(lambda n: build_model(ModelSpec(n, d, terms)), Ns)
    r.csv("gap.csv", ["N", "gap"], list(zip(Ns, gaps)), "gap in units of the preset rate")
    r.json("fit.json", {"exponent": slope, "prefactor": pref, "residual": resid})
    r.svg("gap.svg", plots.gap_scaling, Ns, gaps, slope)


def run_page_curve(r: Run):
    from . import plots
    from .dynamics import steady_state_entropy
    from .rotor import find_minima, page_curve_analytic
    cfg = r.cfg
    op, terms = _model(cfg)
    r.presets.append(_preset_line(terms))
    N, d = op.meta.N, op.meta.d
    c = steady_state_entropy(op)
    if cfg.get("alpha") is None:
        an = page_curve_analytic(N, c.n, "UnitaryOnly", d)
        phi0 = None
    else:
        phi0 = find_minima(terms, d, N).phi0
        an = page_curve_analytic(N, c.n, "LargeD", d, phi0) if phi0 else np.zeros(N + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(an > 0, np.abs(c.S2 - an) / an, 0.0)
    r.csv("page.csv", ["n", "S2_numeric", "S2_analytic", "rel_err"], list(zip(c.n, c.S2, an, rel)),
          "S2 in nats")
    r.json("page.json", {"phi0": phi0, "max_rel_err": float(np.max(rel)), "info": c.info})
    r.svg("page.svg", plots.entropy_curves, [("numeric", c.n, c.S2), ("analytic", c.n, an)])


def run_u1(r: Run):
    from . import plots
    from .dynamics import steady_state_entropy
    from .lindblad import build_model
    from .rotor import u1_steady_entropy
    N = _get(r.cfg, "N", 100, int)
    _check(N >= 2 and N % 2 == 0, f"N must be even and >= 2, got {N}")
    terms = (measure(2),)
    r.presets.append(_preset_line(terms))
    c = steady_state_entropy(build_model(ModelSpec(N, INF, terms)))
    an = u1_steady_entropy(N, c.n)
    r.csv("u1.csv", ["n", "S2_numeric", "S2_analytic"], list(zip(c.n, c.S2, an)), "S2 in nats")
    ev = c.n % 2 == 0
    r.json("u1.json", {"max_abs_err_even": float(np.max(np.abs(c.S2[ev] - an[ev]))),
                       "odd_all_inf": bool(np.all(np.isinf(c.S2[~ev])))})
    r.svg("u1.svg", plots.entropy_curves, [("numeric", c.n, c.S2), ("analytic", c.n, an)])


def run_two_cluster(r: Run):
    from . import plots
    from .lattice import two_cluster_quantum_diagram
    from .rotor import two_cluster_boundary_alpha2
    cfg = r.cfg
    beta = _get(cfg, "beta", required=True, kind=float)
    _check(beta >= 0, "beta must be >= 0")
    d = _dim(cfg, 2.0)
    _check(not is_inf(d), "two-cluster diagram needs finite d")
    N = _get(cfg, "N", 60, int)
    ng = _get(cfg, "ngrid", 50, int)
    _check(N >= 2 and ng >= 3, "N >= 2 and ngrid >= 3 required")
    seed = _get(cfg, "seed", 0, int)
    r.presets.append("TwoCluster(Scaled unitary q=2, Raw measure q=1, Scaled inter q=1)")
    g = two_cluster_quantum_diagram(beta, d=d, N=N, ngrid=ng, seed=seed)
    r.csv("diagram.csv", ["alpha1", "alpha2", "phase_classical", "phase_quantum", "gap", "splitting"],
          [(a1, a2, g.classical[i, j], g.quantum[i, j], g.gap[i, j], g.splitting[i, j])
           for i, a1 in enumerate(g.alpha1) for j, a2 in enumerate(g.alpha2)],
          "alpha dimensionless; energies in units of the preset rate")
    r.json("diagram.json", {"disagreement_interior": g.disagreement(True),
                            "disagreement_all": g.disagreement(False)})
    a1 = np.linspace(1e-3, 50, 400)
    b2 = np.array([two_cluster_boundary_alpha2(a, beta, d) for a in a1], dtype=float)
    ok = np.isfinite(b2) & (b2 > 0)
    r.svg("diagram.svg", plots.phase_grid, g.alpha1, g.alpha2, g.classical, g.quantum, beta,
          boundary=(a1[ok] / (1 + a1[ok]), b2[ok] / (1 + b2[ok])))


def run_chain(r: Run):
    from . import plots
    from .lattice import (BC, ChainSpec, InsufficientDataError, build_chain_lindblad, cft_fit,
                          chain_ground_state, chain_steady_entropy, marshall_min, staggered_sector)
    cfg = r.cfg
    L = _get(cfg, "L", 14, int)
    bc = str(_get(cfg, "bc", "pbc")).upper()
    _check(bc in ("PBC", "OBC"), "bc must be pbc or obc")
    d = _dim(cfg)
    Nsite = _get(cfg, "Nsite", 1, int)
    seed = _get(cfg, "seed", 0, int)
    try:
        spec = ChainSpec(L, Nsite, d, BC(bc))
    except ValueError as e:
        raise ValidationError(str(e))
    r.presets.append(f"Chain(Nsite={Nsite},bc={bc})")
    H = build_chain_lindblad(spec)
    # odd L * Nsite: the ground state is a doublet, take its half-integer member
    sector = staggered_sector(spec, 0.5 * ((L * Nsite) % 2)) if is_inf(d) else None
    gs = chain_ground_state(H, seed=seed, sector=sector)
    curve = chain_steady_entropy(spec, gs)
    r.csv("entropy.csv", ["l", "S2", "finite", "purity"],
          list(zip(curve.n, curve.S2, curve.finite, curve.info["purity"])), "l in sites; S2 in nats")
    fit = {"L": L, "bc": spec.bc.value, "window": "finite S2 with 0 < l < L"}
    try:
        c, b, rms = cft_fit(curve, L, spec.bc)
        fit.update({"c": c, "b": b, "residual": rms})
    except InsufficientDataError as e:  # reported, not fatal
        fit["error"] = str(e)
    fit.update({"energy": gs.energy, "gap": gs.gapToFirstExcited, "eigen_residual": gs.residual,
                "marshall_min": marshall_min(gs), "overlap_plus_x": curve.info["overlap_plus_x"]})
    r.json("fit.json", fit)
    r.svg("entropy.svg", plots.entropy_curves, [(f"L={L} {bc}", curve.n, curve.S2)], xlabel="l")


def run_mc_validate(r: Run):
    from .circuit import TrajectoryConfig, averaged_purity, exact_reference
    cfg = r.cfg
    N = _get(cfg, "N", 3, int)
    d = _get(cfg, "d", 2, int)
    J = _get(cfg, "J", 1 / 24, float)
    lam = _get(cfg, "lam", 1.0, float)
    q = _get(cfg, "q", 2, int)
    qp = _get(cfg, "qp", 1, int)
    dt = _get(cfg, "dt", 1e-3, float)
    times = _get(cfg, "times", [0.2, 0.5, 1.0])
    times = [float(t) for t in (times if isinstance(times, list) else [times])]
    ntraj = _get(cfg, "trajectories", 20000, int)
    seed = _get(cfg, "seed", 0, int)
    terms = (unitary(q, Preset.RAW, J), measure(qp, Preset.RAW, lam))
    r.presets.append(_preset_line(terms))
    try:
        tc = TrajectoryConfig(N, d, terms, dt, max(times), trajectories=ntraj, masterSeed=seed)
    except ValueError as e:
        raise ValidationError(str(e))
    est = averaged_purity(tc, times=times, workers=_threads())
    ref = exact_reference(tc, times)
    z = (est.mean - ref) / np.maximum(est.stderr, 1e-300)
    rep = est.to_dict(tc.to_dict())
    rep.update({"exact": ref, "max_abs_z": float(np.max(np.abs(z)))})
    r.json("mc.json", rep)
    rows = [(t, "".join(map(str, c)) or "-", est.mean[i, j], est.stderr[i, j], ref[i, j])
            for i, t in enumerate(est.times) for j, c in enumerate(est.cuts)]
    r.csv("mc.csv", ["t", "cut", "mean", "stderr", "exact"], rows, "t in units of 1/J; purity dimensionless")


def run_weingarten(r: Run):
    from .circuit import haar_M_check, permutation_sum_check
    cfg = r.cfg
    D = _get(cfg, "D", 2, int)
    _check(D >= 2, "D must be >= 2")
    samples = _get(cfg, "samples", 100000, int)
    seed = _get(cfg, "seed", 0, int)
    r.presets.append("none")
    M = permutation_sum_check(D)
    est, err = haar_M_check(D, samples, seed)
    r.json("weingarten.json", {"D": D, "target": 1 / (D * (D + 1)), "exact": M,
                               "mc": est, "mc_stderr": err})


RUNNERS = {"landscape": run_landscape, "evolve": run_evolve, "steady": run_steady,
           "gap-scan": run_gap_scan, "page-curve": run_page_curve, "u1": run_u1,
           "two-cluster": run_two_cluster, "chain": run_chain, "mc-validate": run_mc_validate,
           "weingarten": run_weingarten}


def execute(experiment: str, cfg: dict, out: str, plot: bool = False) -> dict:
    """Run ``experiment`` and return the manifest (also written to ``out``)."""
    if experiment not in RUNNERS:
        raise ValidationError(f"unknown experiment {experiment!r}")
    cfg = dict(cfg)
    os.makedirs(out, exist_ok=True)
    r = Run(experiment, cfg, out, plot)
    t0 = time.perf_counter()
    RUNNERS[experiment](r)
    wall = time.perf_counter() - t0
    manifest = {"experiment": experiment, "config": {k: cfg[k] for k in sorted(cfg)},
                "plot": plot, "version": __version__, "presets": r.presets, "files": sorted(r.files)}
    write_json(os.path.join(out, "manifest.json"), manifest)
    # wall time lives beside the manifest so the manifest itself stays byte-stable across reruns
    write_json(os.path.join(out, "timing.json"), {"wall_seconds": wall})
    return manifest


# ------------------------------------------------------------------ click wiring

def _fail(code, msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _dispatch(experiment, pairs, config, out, plot):
    try:
        cfg = read_config(config, experiment) if config else {}
        cfg.update(parse_pairs(pairs))
        out = out or os.environ.get("QPURITY_OUT") or os.path.join("results", experiment)
        m = execute(experiment, cfg, out, plot)
    except ResourceLimitError as e:
        _fail(EXIT_RESOURCE, f"resource limit: {e}")
    except MemoryError as e:
        _fail(EXIT_RESOURCE, f"resource limit: out of memory ({e})")
    except (ValidationError, ValueError, TypeError) as e:
        _fail(EXIT_VALIDATION, f"invalid configuration: {e}")
    for f in m["files"]:
        click.echo(os.path.join(out, f))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def main():
    """Purity-dynamics experiments: landscapes, steady states, gaps, chains and Monte Carlo."""


_HELP = {
    "landscape": "Classical rotor landscape over (theta, phi) and its phase.",
    "evolve": "Entropy curves S(n) at chosen times from the product state.",
    "steady": "Steady-state entropy curve from the Lindbladian ground state.",
    "gap-scan": "Liouvillian gap versus N with a power-law fit.",
    "page-curve": "Numeric steady state against the analytic Page-like curve.",
    "u1": "Steady entropy of the q'=2, d=inf model against its closed form.",
    "two-cluster": "Classical and finite-N quantum two-cluster phase diagram.",
    "chain": "Measurement-only chain: ground state, entropy curve and CFT fit.",
    "mc-validate": "Brownian-circuit Monte Carlo against the exact Lindbladian.",
    "weingarten": "Exact permutation sum and Haar Monte Carlo for the measurement block.",
}


def _make(name):
    @main.command(name=name, context_settings={"ignore_unknown_options": True},
                  help=_HELP[name] + " Parameters are key=value pairs.")
    @click.argument("pairs", nargs=-1)
    @click.option("--config", type=click.Path(dir_okay=False), help="INI file with [common] and [%s] sections." % name)
    @click.option("--out", type=click.Path(file_okay=False), help="Output directory (default $QPURITY_OUT).")
    @click.option("--plot/--no-plot", default=False, help="Also write SVG figures.")
    def cmd(pairs, config, out, plot):
        _dispatch(name, pairs, config, out, plot)
    return cmd


for _name in EXPERIMENTS:
    _make(_name)


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (default: beside the manifest).")
def rerun(manifest, out):
    """Replay a run from its manifest.json."""
    with open(manifest) as fh:
        m = json.load(fh)
    cfg = {k: _unjson(v) for k, v in m["config"].items()}
    out = out or os.path.dirname(os.path.abspath(manifest))
    try:
        execute(m["experiment"], cfg, out, m.get("plot", False))
    except ResourceLimitError as e:
        _fail(EXIT_RESOURCE, f"resource limit: {e}")
    except (ValidationError, ValueError, TypeError) as e:
        _fail(EXIT_VALIDATION, f"invalid manifest: {e}")


def _unjson(v):
    if isinstance(v, list):
        return [_unjson(x) for x in v]
    if v == "inf":
        return INF
    if v == "-inf":
        return -INF
    return v


if __name__ == "__main__":
    main()
