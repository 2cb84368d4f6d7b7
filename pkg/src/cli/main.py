"""
Main CLI interface for rsquant
"""

import functools
import math
import re
from pathlib import Path
from typing import Callable, List, Optional

import typer
from rich.panel import Panel
from rich.table import Table

from asymptotics.constants import constants as asymptotic_constants
from distributions.catalog import catalog_listing, parse_density
from mismatch.criteria import criterion_check
from mismatch.experiments import counterexample_rates, lower_bound_check, rate_tables
from quadrature.battery import battery, test_function
from quadrature.rules import QuadratureRule, expect, holder_split_bound, order2_bound
from quantizer.scalar import Codebook1D, distortion1d, lloyd1d
from quantizer.vector import mc_distortion, train_nd
from storage.artifacts import codebook_to_dict, read_codebook, write_csv, write_json
from storage.database import CodebookCache
from utils.config import Config, ExperimentConfig, resolve_workers
from utils.errors import ConvergenceError, PreconditionError, RsquantError, UnknownDensityError
from utils.log import console, setup_logging
from utils.norms import use_norm
from wiener.product import FUNCTIONALS, build_product_quantizer, wiener_error_moments, wiener_quadrature

app = typer.Typer(name="rsquant", help="Optimal quantization and L^r/L^s distortion mismatch experiments")

ConfigOpt = typer.Option(None, "--config", help="Config file (JSON or key = value)")
SeedOpt = typer.Option(None, "--seed", help="Seed for every Monte Carlo stream")
VerboseOpt = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr")
OutDirOpt = typer.Option(None, "--out-dir", help="Directory for result files")


def _slug(text: str) -> str:
    return re.sub(r"[^\w.=-]+", "_", text).strip("_")


def _num(value: float) -> str:
    return format(value, "g")


def _require_seed(cfg: ExperimentConfig, what: str):
    if cfg.seed is None:
        raise PreconditionError(f"{what} uses Monte Carlo: pass --seed (there is no clock-based default)")


def guarded(command: Callable) -> Callable:
    """Map library errors to exit codes: 2 for rejected input, 3 for numerical failure."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except UnknownDensityError as e:
            console.print(f"❌ Unknown density '{e.name}'. Available:")
            for entry in e.catalog:
                console.print(f"   {entry}")
            raise typer.Exit(code=e.exit_code)
        except RsquantError as e:
            console.print(f"❌ {e}")
            raise typer.Exit(code=e.exit_code)

    return wrapper


def _load(config_path: Optional[str], verbose: bool, **overrides) -> ExperimentConfig:
    setup_logging(verbose)
    return Config(config_path).experiment(**overrides)


@app.command()
def init(
    config_path: str = typer.Option("./rsquant_config.json", help="Path to config file"),
):
    """Write a config file holding every default."""
    console.print(Panel.fit("🔧 Initializing rsquant", style="bold blue"))
    config = Config(config_path)
    config.save()
    console.print(f"✅ Configuration saved to: {config_path}")
    console.print("🎯 Run 'python main.py catalog' to list densities")


@app.command()
def catalog():
    """List the density catalog with default parameters."""
    table = Table(title="Density catalog")
    table.add_column("Density", style="cyan")
    for entry in catalog_listing():
        table.add_row(entry)
    console.print(table)


@app.command()
@guarded
def quantize(
    density: Optional[str] = typer.Option(None, help="Density id, e.g. normal or gamma(a=1,b=2)"),
    n: Optional[int] = typer.Option(None, "--n", help="Codebook size"),
    r: Optional[float] = typer.Option(None, help="Distortion exponent r"),
    method: Optional[str] = typer.Option(None, help="auto | lloyd-mc | clvq (dimension >= 2)"),
    seed: Optional[int] = SeedOpt,
    out: Optional[str] = typer.Option(None, help="Output codebook JSON"),
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Build an L^r-optimal n-quantizer and write it as JSON."""
    cfg = _load(config_path, verbose, out_dir=out_dir, density=density, r=r, method=method, seed=seed)
    size = n if n is not None else cfg.n_list[-1]
    console.print(Panel.fit(f"📐 Quantizing {cfg.density}, n={size}, r={_num(cfg.r)}", style="bold blue"))
    dist = parse_density(cfg.density)
    cache = CodebookCache(cfg.cache_path)

    with use_norm(cfg.norm):
        if dist.dim == 1 and cfg.r >= 1:
            book = cache.get(dist.id, cfg.r, size)
            if book is None:
                book = lloyd1d(dist, size, cfg.r, cfg.tol, cfg.max_iter, seed=cfg.seed or 0)
                if book.converged:
                    cache.put(book)
            value = distortion1d(book, dist, cfg.r)
        else:
            _require_seed(cfg, "quantize")
            book = train_nd(dist, size, cfg.r, cfg.method, cfg.seed, budget=cfg.budget_factor * size,
                            tol=cfg.tol)
            value = mc_distortion(book, dist, cfg.r, cfg.mc_samples, cfg.seed, resolve_workers(cfg.workers)).estimate
    cache.close()

    target = Path(out) if out else Path(cfg.out_dir) / f"codebook_{_slug(dist.id)}_n{size}_r{_num(cfg.r)}.json"
    payload = codebook_to_dict(book)
    payload["distortion"] = value
    payload["config"] = cfg.effective()
    write_json(target, payload)
    console.print(f"✅ Codebook written to: {target}")
    console.print(f"📊 L^{_num(cfg.r)} distortion: {value:.10g}")
    if isinstance(book, Codebook1D) and not book.converged:
        raise ConvergenceError(f"Lloyd stopped after {book.iterations} iterations (residual {book.residual:.3e})")


@app.command()
@guarded
def constants(
    density: Optional[str] = typer.Option(None, help="Density id"),
    r: Optional[float] = typer.Option(None, help="Distortion exponent r"),
    s: Optional[float] = typer.Option(None, help="Evaluation exponent s"),
    seed: Optional[int] = SeedOpt,
    reference: bool = typer.Option(False, help="Use the hexagonal value of J_{2,2}"),
    out: Optional[str] = typer.Option(None, help="Output JSON"),
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Zador constants Q_r, Q_s and the mismatch constant Q_{r,s}."""
    cfg = _load(config_path, verbose, out_dir=out_dir, density=density, r=r, s=s, seed=seed)
    s_value = cfg.s_values()[0]
    dist = parse_density(cfg.density)
    console.print(Panel.fit(f"🧮 Constants for {dist.id}, r={_num(cfg.r)}, s={_num(s_value)}", style="bold blue"))
    if dist.dim > 1 and not reference:
        _require_seed(cfg, "J_{r,d} estimation")

    with use_norm(cfg.norm):
        result = asymptotic_constants(dist, cfg.r, s_value, seed=cfg.seed or 0, reference=reference)
    name = f"constants_{_slug(dist.id)}_r{_num(cfg.r)}_s{_num(s_value)}.json"
    target = Path(out) if out else Path(cfg.out_dir) / name
    payload = result.as_dict()
    payload["config"] = cfg.effective()
    write_json(target, payload)

    table = Table(title="Asymptotic constants")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for name in ("Qr", "Qs", "Qrs"):
        table.add_row(name, f"{getattr(result, name):.10g}")
    table.add_row("finiteness", result.finiteness)
    console.print(table)
    console.print(f"✅ Constants written to: {target}")


RATE_COLUMNS = {
    "n": "codebook size n",
    "distortion": "∫ d(x, α_n)^s dP(x) for the L^r-optimal n-quantizer α_n",
    "scaled": "n^{s/d}·∫ d(x, α_n)^s dP(x)",
    "stderr": "Monte Carlo standard error of the scaled column (0 for exact rows)",
}


@app.command()
@guarded
def mismatch(
    density: Optional[str] = typer.Option(None, help="Density id"),
    r: Optional[float] = typer.Option(None, help="Distortion exponent r of the quantizers"),
    s: Optional[str] = typer.Option(None, help="Evaluation exponent(s) s, comma separated"),
    n: Optional[str] = typer.Option(None, "--n", help="n range a..b (doubling) or list"),
    method: Optional[str] = typer.Option(None, help="auto | exact-1d | mc"),
    seed: Optional[int] = SeedOpt,
    workers: Optional[int] = typer.Option(None, help="Worker threads (0 = physical cores)"),
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Rate tables n^{s/d}·L^s distortion of L^r-optimal quantizers."""
    cfg = _load(config_path, verbose, out_dir=out_dir, density=density, r=r, s=s, n_list=n, method=method,
                seed=seed, workers=workers)
    dist = parse_density(cfg.density)
    console.print(Panel.fit(f"📈 Mismatch rates for {dist.id}, r={_num(cfg.r)}", style="bold blue"))
    exact = dist.dim == 1 and cfg.r >= 1 and cfg.method != "mc"
    if not exact:
        _require_seed(cfg, "mismatch")
    method_name = cfg.method if cfg.method in ("exact-1d", "mc") else "auto"
    cache = CodebookCache(cfg.cache_path)

    with use_norm(cfg.norm):
        tables = rate_tables(dist, cfg.r, cfg.s_values(), cfg.n_list, method_name, cfg.seed or 0,
                             resolve_workers(cfg.workers), cfg.mc_samples, cache)
        for table in tables:
            extra = {"density": dist.id, "r": cfg.r, "s": table.s, "method": table.method,
                     "monotone": table.monotone, "supercritical": table.supercritical}
            if dist.dim == 1:
                result = asymptotic_constants(dist, cfg.r, table.s)
                extra["constants"] = result.as_dict()
                if math.isfinite(result.Qrs):
                    extra["lower_bound"] = lower_bound_check(table, result)
            extra["criterion"] = criterion_check(dist, cfg.r, table.s)
            target = Path(cfg.out_dir) / f"mismatch_{_slug(dist.id)}_r{_num(cfg.r)}_s{_num(table.s)}.csv"
            rows = ([row.n, row.distortion, row.scaled, row.stderr] for row in table.rows)
            write_csv(target, list(RATE_COLUMNS), rows, RATE_COLUMNS, cfg.effective(), **extra)

            status = "⚠️  supercritical" if table.supercritical else "✅"
            console.print(f"{status} s={_num(table.s)}: scaled {table.rows[0].scaled:.6g} → "
                          f"{table.rows[-1].scaled:.6g}  ({target})")
    cache.close()


COUNTEREXAMPLE_COLUMNS = {
    "n": "codebook size n",
    "distortion_r": "∫ d(x, α_n(θ))^r dU([0,1])",
    "scaled_r": "n^r·∫ d(x, α_n(θ))^r dU([0,1])",
    "upper_r": "J_{r,1}[n^{r-θ(r+1)} + (1-n^{-θ})^{r+1}(n/(n-1))^r]",
    "distortion_s": "∫ d(x, α_n(θ))^s dU([0,1])",
    "scaled_s": "n^s·∫ d(x, α_n(θ))^s dU([0,1])",
    "lower_s": "n^{s-θ(s+1)}/(2^{s+1}(s+1))",
}


@app.command()
@guarded
def counterexample(
    theta: Optional[float] = typer.Option(None, help="θ in (r/(r+1), s/(s+1))"),
    r: Optional[float] = typer.Option(None, help="Distortion exponent r"),
    s: Optional[float] = typer.Option(None, help="Evaluation exponent s"),
    n: Optional[str] = typer.Option(None, "--n", help="n range a..b (doubling) or list"),
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Codebooks with the optimal L^r rate and a degraded L^s rate on U([0,1])."""
    cfg = _load(config_path, verbose, out_dir=out_dir, theta=theta, r=r, s=s, n_list=n)
    s_value = cfg.s_values()[0]
    console.print(Panel.fit(f"🧪 Counter-example θ={_num(cfg.theta)}, r={_num(cfg.r)}, s={_num(s_value)}",
                            style="bold blue"))
    report = counterexample_rates(cfg.theta, cfg.r, s_value, cfg.n_list)
    target = Path(cfg.out_dir) / f"counterexample_theta{_num(cfg.theta)}_r{_num(cfg.r)}_s{_num(s_value)}.csv"
    rows = ([row.n, row.distortion_r, row.scaled_r, row.upper_r, row.distortion_s, row.scaled_s, row.lower_s]
            for row in report.rows)
    summary = {key: getattr(report, key) for key in
               ("theta", "r", "s", "j_r", "j_s", "r_ratio", "target_exponent", "fitted_exponent",
                "raw_exponent", "lower_dominated", "upper_respected", "eventually_increasing")}
    write_csv(target, list(COUNTEREXAMPLE_COLUMNS), rows, COUNTEREXAMPLE_COLUMNS, cfg.effective(), **summary)
    console.print(f"📊 n^r·distortion_r / J_r,1 at n={report.rows[-1].n}: {report.r_ratio:.6g}")
    console.print(f"📊 L^s growth exponent {report.fitted_exponent:.4g} (target {report.target_exponent:.4g})")
    console.print(f"✅ Table written to: {target}")


QUAD_COLUMNS = {
    "function": "test function name",
    "n": "number of quadrature atoms",
    "estimate": "Σ_i w_i f(α_i)",
    "truth": "E f(X)",
    "error": "|E f(X) - Σ_i w_i f(α_i)|",
    "order2_bound": "[Df]_Lip·e_{n,2}² (empty when the Hessian is unbounded)",
    "holder_bound": "½‖D²f(X̂)‖_p·‖X - X̂‖²_{2q}, p = (d+2)/(d-η), q = (d+2)/(2+η)",
}


def _rule(cfg: ExperimentConfig, codebook: Optional[str], n: Optional[int]):
    if codebook:
        book = read_codebook(codebook)
        dist = parse_density(book.density_id)
    else:
        dist = parse_density(cfg.density)
        book = lloyd1d(dist, n or cfg.n_list[-1], 2.0, cfg.tol, cfg.max_iter)
    return QuadratureRule.from_codebook(book, dist, cfg.mc_samples, cfg.seed or 0), dist


@app.command()
@guarded
def quad(
    codebook: Optional[str] = typer.Option(None, help="Codebook JSON to use as the rule"),
    density: Optional[str] = typer.Option(None, help="Density for an on-the-fly rule"),
    n: Optional[int] = typer.Option(None, "--n", help="Size of an on-the-fly rule"),
    function: str = typer.Option("all", help="Test function name or 'all'"),
    out: Optional[str] = typer.Option(None, help="Output CSV"),
    seed: Optional[int] = SeedOpt,
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Quantization quadrature of the test battery with its error bounds."""
    cfg = _load(config_path, verbose, out_dir=out_dir, density=density, seed=seed)
    rule, dist = _rule(cfg, codebook, n)
    if rule.dim > 1:
        _require_seed(cfg, "quad on a vector codebook")
    functions = battery() if function == "all" else [test_function(function)]
    functions = [fn for fn in functions if fn.make_density().id == dist.id]
    if not functions:
        raise PreconditionError(f"no test function is defined for {dist.id}")
    console.print(Panel.fit(f"∫ Quadrature with {rule.codebook.n} atoms on {dist.id} ({rule.order})",
                            style="bold blue"))

    e2 = distortion1d(rule.codebook, dist, 2.0) if rule.dim == 1 else math.nan
    rows = []
    for fn in functions:
        estimate = expect(rule, fn.f)
        order2 = order2_bound(fn.lip_grad, e2) if fn.lip_grad is not None and rule.dim == 1 else ""
        holder = (holder_split_bound(fn.hessian, dist, rule, fn.eta, cfg.mc_samples, cfg.seed or 0).bound
                  if rule.order == "second-stationary" else math.inf)
        rows.append([fn.name, rule.codebook.n, estimate, fn.truth, abs(fn.truth - estimate), order2, holder])
        console.print(f"   {fn.name}: error {abs(fn.truth - estimate):.3e}, bound {holder:.3e}")
    target = Path(out) if out else Path(cfg.out_dir) / f"quad_{_slug(dist.id)}_n{rule.codebook.n}.csv"
    write_csv(target, list(QUAD_COLUMNS), rows, QUAD_COLUMNS, cfg.effective(), density=dist.id, order=rule.order)
    console.print(f"✅ Results written to: {target}")


WIENER_COLUMNS = {
    "N": "atom budget N",
    "atoms": "Π N_k",
    "allocation": "N_1 x N_2 x ... x N_m",
    "sq_distortion": "‖W - Ŵ^N‖₂² = Σ_{k≤m} λ_k e²_{N_k,2} + Σ_{k>m} λ_k",
    "l2_error": "‖W - Ŵ^N‖₂",
}
FUNCTIONAL_COLUMNS = {
    "N": "atom budget N",
    "functional": "path functional F",
    "value": "Σ_atoms weight·F(Ŵ^N)",
}


@app.command()
@guarded
def wiener(
    T: Optional[float] = typer.Option(None, "--T", help="Time horizon"),
    n: Optional[str] = typer.Option(None, "--n", help="Atom budgets N, range a..b or list"),
    s: Optional[str] = typer.Option(None, help="Exponents s in (0, 3) for Monte Carlo L^s errors"),
    paths: Optional[int] = typer.Option(None, help="Simulated Brownian paths"),
    grid: Optional[int] = typer.Option(None, help="Time steps per path"),
    seed: Optional[int] = SeedOpt,
    workers: Optional[int] = typer.Option(None, help="Worker threads (0 = physical cores)"),
    out_dir: Optional[str] = OutDirOpt,
    config_path: Optional[str] = ConfigOpt,
    verbose: bool = VerboseOpt,
):
    """Product functional quantization of Brownian motion."""
    cfg = _load(config_path, verbose, out_dir=out_dir, T=T, wiener_n=n, s=s, paths=paths, grid=grid, seed=seed,
                workers=workers)
    if cfg.s:
        _require_seed(cfg, "wiener --s")
    console.print(Panel.fit(f"〰️  Product quantization of W on [0, {_num(cfg.T)}]", style="bold blue"))
    cache = CodebookCache(cfg.cache_path)
    folder = Path(cfg.out_dir)

    rate_rows, functional_rows, moment_rows = [], [], []
    bands = []
    pq = None
    for budget in cfg.wiener_n:
        pq = build_product_quantizer(cfg.T, budget, cfg.seed or 0, cache)
        sq = pq.sq_distortion()
        rate_rows.append([budget, pq.size, "x".join(map(str, pq.allocation)), sq, math.sqrt(sq)])
        for name, functional in FUNCTIONALS.items():
            functional_rows.append([budget, name, wiener_quadrature(pq, functional, cfg.grid)])
        if cfg.s:
            moments = wiener_error_moments(pq, cfg.s, cfg.paths, cfg.grid, cfg.seed, resolve_workers(cfg.workers))
            columns = zip(moments.s_values, moments.moments, moments.stderrs, moments.norms)
            for s_value, moment, err, norm_s in columns:
                moment_rows.append([budget, s_value, moment, err, norm_s, norm_s / math.sqrt(sq)])
            if 2.0 in moments.s_values:
                bands.append(moments.within_band())
        console.print(f"   N={budget}: allocation {pq.allocation}, ‖W-Ŵ‖₂ = {math.sqrt(sq):.6g}")
    cache.close()

    quantizer_file = write_json(folder / f"wiener_T{_num(cfg.T)}_N{cfg.wiener_n[-1]}.json", {
        "T": cfg.T,
        "N": cfg.wiener_n[-1],
        "allocation": pq.allocation,
        "eigenvalues": pq.basis.eigenvalues,
        "codebooks": [codebook_to_dict(book) for book in pq.codebooks],
        "atoms": pq.size,
        "sq_distortion": pq.sq_distortion(),
        "config": cfg.effective(),
    })
    write_csv(folder / f"wiener_rates_T{_num(cfg.T)}.csv", list(WIENER_COLUMNS), rate_rows, WIENER_COLUMNS,
              cfg.effective())
    write_csv(folder / f"wiener_functionals_T{_num(cfg.T)}.csv", list(FUNCTIONAL_COLUMNS), functional_rows,
              FUNCTIONAL_COLUMNS, cfg.effective())
    if moment_rows:
        columns = {
            "N": "atom budget N",
            "s": "exponent s",
            "moment": "E|W - Ŵ^N|^s_{L²} (Monte Carlo)",
            "stderr": "standard error of the moment",
            "norm": "‖W - Ŵ^N‖_s",
            "ratio": "‖W - Ŵ^N‖_s / ‖W - Ŵ^N‖₂",
        }
        write_csv(folder / f"wiener_moments_T{_num(cfg.T)}.csv", list(columns), moment_rows, columns,
                  cfg.effective(), grid_bias=cfg.T ** 2 / (2 * cfg.grid),
                  within_band=all(bands) if bands else None)
    console.print(f"✅ Product quantizer written to: {quantizer_file}")


@app.command()
@guarded
def codebook_info(
    path: str = typer.Argument(..., help="Codebook JSON"),
):
    """Show a stored codebook."""
    book = read_codebook(path)
    table = Table(title=f"{book.density_id}, n={book.n}, r={_num(book.r)}")
    table.add_column("k", style="cyan")
    table.add_column("point", style="green")
    table.add_column("weight", style="yellow")
    points: List = book.points.tolist()
    for k, (point, weight) in enumerate(zip(points, book.weights.tolist()), start=1):
        table.add_row(str(k), str(point), f"{weight:.6g}")
    console.print(table)


if __name__ == "__main__":
    app()
