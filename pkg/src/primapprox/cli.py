"""Command-line experiment runner.

Every command takes ``key=value`` settings (from ``--config FILE`` and/or the
command line, the latter winning), writes ``<command>.manifest`` holding the
fully resolved settings, then its CSV output. ``primapprox replay MANIFEST``
reruns a command from its manifest; the CSVs match byte for byte except for
the leading ``# generated:`` line.

Exit codes: 0 success, 2 bad configuration, 3 internal cross-check mismatch,
4 work budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import arith, group, measure, partitions as parts, solver
from .errors import BudgetExceeded, OracleMismatch, PrimapproxError, ValidationError
from .psi import PsiFunction, constant, parse_psi, series_regime

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE, EXIT_BUDGET = 0, 2, 3, 4

# settings every command accepts; threads and out only change where and how fast
COMMON = {"seed": "0", "budget": str(arith.DEFAULT_BUDGET)}

DEFAULTS: dict[str, dict[str, str]] = {
    "sieve": {"q": "1-100", "Q": "200", "beta": "1"},
    "density": {"d": "2", "Q": "2000"},
    "enumerate": {"m": "1", "n": "1", "theta": "random", "phi": "", "y": "0",
                  "psi": "power:c=1,s=1", "pi": "", "Q": "100", "constrained": "true",
                  "verify": "false"},
    "dichotomy": {"preset": "simultaneous", "n": "2", "k": "1", "psi": "power:c=0.4,s=1",
                  "regime": "divergent", "Qs": "1000,10000", "samples": "50",
                  "homogeneous": "false"},
    "measure": {"quantity": "strip", "variant": "F", "m": "", "n": "1", "q": "3", "q2": "",
                "p": "", "y": "", "psi": "0.1", "pi": "", "samples": "1000000",
                "Qs": "10,20,40", "bins": "16"},
    "orbit": {"m": "1", "n": "1", "pi": "", "bound": "1", "word_budget": "1000",
              "verify": "true"},
    "fiber": {"m": "2", "n": "1", "theta_rest": "0", "phi": "", "y": "0", "v": "1,0,0",
              "psi": "0.1"},
}


@dataclass
class ExperimentConfig:
    command: str
    values: dict[str, str]

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError as exc:
            raise ValidationError(f"{key} must be an integer, got {self.values[key]!r}") from exc

    def float(self, key: str) -> float:
        return _float(self.values[key], key)

    def bool(self, key: str) -> bool:
        v = self.values[key].lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ValidationError(f"{key} must be true or false, got {v!r}")
        return v in ("true", "1", "yes")

    def ints(self, key: str) -> list[int]:
        return parse_int_list(self.values[key], key)

    def floats(self, key: str) -> list[float]:
        text = self.values[key].replace(";", ",")
        return [_float(t, key) for t in text.split(",") if t.strip()]

    def to_text(self) -> str:
        lines = [f"command={self.command}"]
        lines += [f"{k}={self.values[k]}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"


def _float(text: str, key: str = "value") -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"{key}: cannot read {text!r} as a number") from exc


def parse_int_list(text: str, key: str = "value") -> list[int]:
    """``"1-5,8,10-12"`` -> ``[1, 2, 3, 4, 5, 8, 10, 11, 12]``."""
    out = []
    try:
        for tok in filter(None, (t.strip() for t in text.split(","))):
            lo, sep, hi = tok.partition("-") if not tok.startswith("-") else (tok, "", "")
            if sep:
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(tok))
    except ValueError as exc:
        raise ValidationError(f"{key}: cannot read {text!r} as integers") from exc
    if not out:
        raise ValidationError(f"{key} is empty")
    return out


def read_kv_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ValidationError(f"config file {path} does not exist")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        out[key.strip()] = val.strip()
    return out


def resolve(command: str | None, config: Path | None, overrides: list[str],
            seed: int | None = None, budget: int | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    if config is not None:
        values.update(read_kv_file(config))
    for tok in overrides:
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValidationError(f"expected key=value, got {tok!r}")
        values[key.strip()] = val.strip()
    file_cmd = values.pop("command", None)
    if command is None:
        command = file_cmd
    elif file_cmd is not None and file_cmd != command:
        raise ValidationError(f"config is for command {file_cmd!r}, not {command!r}")
    if command not in DEFAULTS:
        raise ValidationError(f"unknown command {command!r}")
    if seed is not None:
        values["seed"] = str(seed)
    if budget is not None:
        values["budget"] = str(budget)
    allowed = {**COMMON, **DEFAULTS[command]}
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown keys for {command}: {', '.join(unknown)}")
    cfg = ExperimentConfig(command, {**allowed, **values})
    if not 0 <= cfg.int("seed") < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    if cfg.int("budget") < 1:
        raise ValidationError("budget must be positive")
    return cfg


# --- output ------------------------------------------------------------------

class Output:
    """Collects CSV tables and text files, written after the manifest."""

    def __init__(self, outdir: Path, cfg: ExperimentConfig):
        self.outdir = outdir
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def table(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# generated: {stamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
        self.files[name] = buf.getvalue()

    def text(self, name: str, body: str) -> None:
        self.files[name] = body

    def flush(self) -> None:
        self.outdir.mkdir(parents=True, exist_ok=True)
        (self.outdir / f"{self.cfg.command}.manifest").write_text(self.cfg.to_text())
        for name, body in self.files.items():
            with open(self.outdir / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(body)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# --- shared parsing ----------------------------------------------------------

def _psi(cfg: ExperimentConfig, key: str = "psi") -> PsiFunction:
    text = cfg[key]
    try:
        return constant(float(Fraction(text)))
    except (ValueError, ZeroDivisionError):
        return parse_psi(text)


def _partition(cfg: ExperimentConfig, m: int, n: int) -> parts.Partition:
    text = cfg["pi"]
    if not text:
        return parts.trivial(m, n)
    return parts.validate(m, n, parts.parse_components(text))


def _matrix(cfg: ExperimentConfig, key: str, rows: int, cols: int) -> np.ndarray:
    vals = cfg.floats(key)
    if len(vals) == 1 and rows * cols > 1:
        vals = vals * (rows * cols)
    if len(vals) != rows * cols:
        raise ValidationError(f"{key} needs {rows}x{cols} = {rows * cols} entries, got {len(vals)}")
    return np.array(vals, dtype=np.float64).reshape(rows, cols)


def _threads(n: int) -> int:
    if n < 1:
        raise ValidationError("threads must be positive")
    return n


# --- commands ----------------------------------------------------------------

def cmd_sieve(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    qs, Qs = cfg.ints("q"), cfg.ints("Q")
    betas = []
    for tok in cfg["beta"].split(","):
        try:
            b = Fraction(tok.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"beta: cannot read {tok!r}") from exc
        if b <= 0:
            raise ValidationError(f"beta must be positive, got {tok!r}")
        betas.append(b)
    if min(qs) < 1 or min(Qs) < 1:
        raise ValidationError("q and Q must be positive")
    if len(qs) * len(Qs) * len(betas) > cfg.int("budget"):
        raise BudgetExceeded("sieve table larger than the budget")
    rows, bad = [], 0
    for q, Q, beta, sv, brute in arith.iter_sieve_table(qs, Qs, betas):
        bad += sv != brute
        rows.append((q, Q, beta, sv, brute, sv == brute))
    out.table("sieve.csv", ["q", "Q", "beta", "sieve", "brute", "match"], rows)
    out.flush()
    if bad:
        raise OracleMismatch(f"{bad} sieve counts disagree with brute force")
    return EXIT_OK


def cmd_density(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    rows = []
    for d in cfg.ints("d"):
        for Q in cfg.ints("Q"):
            count = arith.count_primitive_in_box(d, Q, cfg.int("budget"))
            ratio = count / Q**d
            inv = 1.0 / arith.zeta(d)
            rows.append((d, Q, count, ratio, inv, abs(ratio - inv) / inv))
    out.table("density.csv", ["d", "Q", "count", "ratio", "inv_zeta", "rel_error"], rows)
    out.flush()
    return EXIT_OK


def _instance(cfg: ExperimentConfig) -> solver.ProblemInstance:
    m, n = cfg.int("m"), cfg.int("n")
    pi = _partition(cfg, m, n)
    f = _psi(cfg)
    rng = measure.substream(cfg.int("seed"), 0)
    if cfg["theta"] == "random":
        theta = rng.uniform(-0.5, 0.5, size=(n, m))
    else:
        theta = _matrix(cfg, "theta", n, m)
    phi = _matrix(cfg, "phi", n, n) if cfg["phi"] else None
    y = _matrix(cfg, "y", n, 1).ravel()
    return solver.ProblemInstance(m, n, theta, y, f, pi, phi=phi)


def cmd_enumerate(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    inst = _instance(cfg)
    Q, constrained = cfg.int("Q"), cfg.bool("constrained")
    recs = solver.solve(inst, Q, constrained, cfg.int("budget"), threads)
    header = [f"q{i}" for i in range(1, inst.m + 1)] + [f"p{i}" for i in range(1, inst.n + 1)]
    out.table("enumerate.csv", header + ["shell", "residual"],
              (r.q + r.p + (r.shell, r.residual) for r in recs))
    out.flush()
    if cfg.bool("verify"):
        ref = solver.enumerate_naive(inst, Q, constrained, cfg.int("budget"))
        got = {r.q + r.p: r.residual for r in recs}
        if got != ref:
            raise OracleMismatch(f"enumerator and naive search disagree on "
                                 f"{len(set(got) ^ set(ref))} points")
    return EXIT_OK


PLOT_SCRIPT = '''"""Plot N(Q) against S(Q) for every sample in dichotomy.csv (needs matplotlib)."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "dichotomy.csv"
curves = defaultdict(list)
with open(path) as fh:
    rows = csv.DictReader(line for line in fh if not line.startswith("#"))
    for row in rows:
        curves[row["sample"]].append((float(row["S"]), int(row["N"])))
fig, ax = plt.subplots()
for pts in curves.values():
    xs, ys = zip(*pts)
    ax.plot(xs, ys, marker="o", alpha=0.4)
ax.set_xscale("log")
ax.set_xlabel("S(Q) = sum of j^(m-1) psi(j)^n")
ax.set_ylabel("N(Q) = number of solutions")
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''


def cmd_dichotomy(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    preset, regime = cfg["preset"], cfg["regime"]
    if regime not in ("divergent", "convergent"):
        raise ValidationError(f"regime must be divergent or convergent, got {regime!r}")
    f = _psi(cfg)
    Qs = cfg.ints("Qs")
    if any(b <= a for a, b in zip(Qs, Qs[1:])) or Qs[0] < 1:
        raise ValidationError(f"Q schedule must be positive and strictly increasing, got {Qs}")
    samples = cfg.int("samples")
    if samples < 1:
        raise ValidationError("samples must be positive")
    if preset == "simultaneous":
        m, n = 1, cfg.int("n")
        make = lambda rng: solver.simultaneous_preset(n, f, rng, cfg.bool("homogeneous"))
    elif preset == "linear-form-pairs":
        k = cfg.int("k")
        m, n = 2 * k - 1, 1
        make = lambda rng: solver.linear_form_pairs_preset(k, f, rng)
    else:
        raise ValidationError(f"unknown preset {preset!r}")
    actual = series_regime(f, m, n)
    if actual != regime:
        print(f"warning: declared regime {regime} but sum j^(m-1) psi(j)^n is {actual}",
              file=sys.stderr)
    budget = cfg.int("budget")
    curves = []
    for s in range(samples):
        inst = make(measure.substream(cfg.int("seed"), s))
        curves.append(solver.growth_curve(inst, Qs, True, budget, threads))
    out.table("dichotomy.csv", ["sample", "Q", "N", "S"],
              ((s, Q, N, S) for s, c in enumerate(curves) for Q, N, S in c.points))
    counts = np.array([c.counts for c in curves])
    summary = []
    for j, Q in enumerate(Qs):
        grew = "" if j == 0 else float(np.mean(counts[:, j] > counts[:, j - 1]))
        p10, p50, p90 = np.percentile(counts[:, j], [10, 50, 90])
        summary.append((Q, curves[0].sums[j], float(p10), float(p50), float(p90), grew,
                        regime, actual))
    out.table("dichotomy_summary.csv", ["Q", "S", "N_p10", "N_p50", "N_p90", "frac_grew",
                                        "declared_regime", "series_regime"], summary)
    out.text("dichotomy_plot.py", PLOT_SCRIPT)
    out.flush()
    return EXIT_OK


def _est_row(name: str, e: measure.MeasureEstimate):
    return (name, e.estimate, e.stderr, e.samples, e.seed)


def cmd_measure(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    quantity, seed, samples = cfg["quantity"], cfg.int("seed"), cfg.int("samples")
    budget = cfg.int("budget")
    n = cfg.int("n")
    rows = []
    if quantity in ("strip", "pair", "pushforward"):
        q = cfg.ints("q")
        m = len(q)
        y = _matrix(cfg, "y", n, 1).ravel() if cfg["y"] else np.zeros(n)
    if quantity == "strip":
        f = _psi(cfg)
        variant = cfg["variant"]
        p = tuple(cfg.ints("p")) if cfg["p"] else None
        qn = max(map(abs, q))
        query = measure.StripQuery(tuple(q), tuple(y), f(qn), variant, p)
        pi = _partition(cfg, m, n) if variant == "E" else None
        est = measure.mc_measure(query, pi, samples, seed, threads, budget=budget)
        for w in est.warnings:
            print(f"warning: {w}", file=sys.stderr)
        rows.append(_est_row(f"lambda({variant}_q)", est))
        if variant == "F":
            rows.append(("2^n psi^n", (2 * f(qn)) ** n, 0.0, samples, seed))
    elif quantity == "pair":
        f = _psi(cfg)
        q2 = cfg.ints("q2") if cfg["q2"] else q
        variant = cfg["variant"]
        pi = _partition(cfg, m, n) if variant == "E" else None
        est, cls = measure.mc_pair_measure(q, q2, y, f, variant, samples, seed, pi,
                                           threads, budget=budget)
        rows.append(_est_row(f"lambda({variant}_q & {variant}_q2)", est))
        rows.append((f"reference[{cls.kind}]", measure.pair_reference(q, q2, f, n, cls), 0.0,
                     samples, seed))
    elif quantity == "pushforward":
        res = measure.pushforward_check(q, samples, cfg.int("bins"), seed, n, threads)
        rows.append(("chi2", res.statistic, 0.0, samples, seed))
        rows.append(("chi2_z", res.z, 1.0, samples, seed))
        rows.append(("in_99_band", float(res.in_band), 0.0, samples, seed))
    elif quantity in ("ratio", "averaged"):
        if not cfg["m"]:
            raise ValidationError(f"quantity={quantity} needs m")
        m = cfg.int("m")
        f = _psi(cfg)
        pi = _partition(cfg, m, n)
        y = _matrix(cfg, "y", n, 1).ravel() if cfg["y"] else np.zeros(n)
        Qs = cfg.ints("Qs")
        if quantity == "ratio":
            for pt in measure.borel_cantelli_trajectory(m, n, pi, f, y, Qs, samples, seed, threads):
                rows.append((f"bc_ratio[Q={pt.Q}]", pt.ratio, 0.0, samples, seed))
        else:
            for b in measure.averaged_lower_bound(m, n, pi, f, y, Qs, samples, seed, threads):
                rows.append((f"lhs[Q={b.Q}]", b.lhs, b.lhs_stderr, samples, seed))
                rows.append((f"rhs[Q={b.Q}]", b.rhs, 0.0, samples, seed))
                rows.append((f"ratio[Q={b.Q}]", b.ratio, b.lhs_stderr / b.rhs, samples, seed))
    else:
        raise ValidationError(f"unknown quantity {quantity!r}")
    out.table("measure.csv", ["quantity", "estimate", "stderr", "samples", "seed"], rows)
    out.flush()
    return EXIT_OK


def cmd_orbit(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    m, n = cfg.int("m"), cfg.int("n")
    pi = _partition(cfg, m, n)
    bound = cfg.int("bound")
    if (2 * bound + 1) ** pi.dim > cfg.int("budget"):
        raise BudgetExceeded("orbit ball larger than the budget")
    ball = group.orbit_ball(pi, bound, cfg.int("word_budget"))
    vecs = sorted(ball.vectors)
    rows = [v + (group.format_word(group.reduce_to_base(v, pi)),) for v in vecs]
    out.table("orbit.csv", [f"v{i}" for i in range(1, pi.dim + 1)] + ["word"], rows)
    out.text("orbit.txt", group.format_vectors(vecs))
    out.flush()
    if not ball.complete:
        raise BudgetExceeded(f"word budget exhausted at depth {ball.depth}; orbit ball incomplete")
    if cfg.bool("verify") and ball.vectors != group.primitive_ball(pi, bound):
        raise OracleMismatch("orbit ball differs from the primitive points in the box")
    return EXIT_OK


def cmd_fiber(cfg: ExperimentConfig, out: Output, threads: int) -> int:
    m, n = cfg.int("m"), cfg.int("n")
    if m < 2:
        raise ValidationError("fiber needs m >= 2")
    theta_rest = _matrix(cfg, "theta_rest", n, m - 1)
    phi = _matrix(cfg, "phi", n, n) if cfg["phi"] else np.eye(n)
    y = _matrix(cfg, "y", n, 1).ravel()
    v = cfg.ints("v")
    box = solver.fiber_hypercube(theta_rest, phi, y, v, cfg.float("psi"), m)
    out.table("fiber.csv", ["i", "lo", "hi"], ((i + 1, lo, hi) for i, (lo, hi) in enumerate(box)))
    out.flush()
    return EXIT_OK


COMMANDS = {"sieve": cmd_sieve, "density": cmd_density, "enumerate": cmd_enumerate,
            "dichotomy": cmd_dichotomy, "measure": cmd_measure, "orbit": cmd_orbit,
            "fiber": cmd_fiber}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value settings file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (default 0)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--budget", type=int, help="cap on enumerated points / samples")

    ap = argparse.ArgumentParser(prog="primapprox", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("settings", nargs="*", metavar="key=value")
    rp = sub.add_parser("replay", parents=[common], help="rerun a command from its manifest")
    rp.add_argument("manifest", type=Path)
    return ap


def run(command: str | None, config: Path | None, settings: list[str], outdir: Path,
        threads: int = 1, seed: int | None = None, budget: int | None = None) -> int:
    cfg = resolve(command, config, settings, seed, budget)
    return COMMANDS[cfg.command](cfg, Output(outdir, cfg), _threads(threads))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            if args.config is not None:
                raise ValidationError("replay takes the manifest instead of --config")
            return run(None, args.manifest, [], args.out, args.threads, args.seed, args.budget)
        return run(args.command, args.config, args.settings, args.out, args.threads,
                   args.seed, args.budget)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleMismatch as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except BudgetExceeded as exc:
        print(f"budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PrimapproxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
