"""Command-line driver: ``minlab <subcommand> [--config PATH] [overrides]``.

Exit codes: 0 ok, 1 check failed, 2 configuration error, 3 numerical
failure, 4 oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments as ex
from .forcing import (
    KickSequence,
    check_embedding,
    parse_basis,
    parse_distribution,
    parse_mode,
)
from .omega import shock_map
from .oracle import run_oracle_suite
from .solver import SolverConfig, WindingBoundError, backtrack, evolve, min_winding_bound

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _auto_int(v: str) -> Optional[int]:
    return None if v == "auto" else int(v)


def _auto_float(v: str) -> Optional[float]:
    return None if v == "auto" else float(v)


@dataclass
class RunConfig:
    """Flat ``key = value`` run configuration; ``auto`` means derive a default."""

    basis: str = "fourier:1c,1s"
    dist: str = "uniform:1.0"
    mode: str = "kicked"
    grid: int = 256
    b: float = 0.0
    winding_max: Optional[int] = None
    samples: int = 200
    horizons: str = "1..30"
    burn_in: Optional[int] = None
    seed: int = 0
    out: str = "."
    t_halving: Optional[int] = None
    pasts: int = 10
    futures: int = 20
    past_horizon: int = 1
    lead: int = 30
    psi1: str = "bump:0.0"
    psi2: str = "bump:0.5"
    kicks: int = 500
    alpha: Optional[float] = None

    _parsers = {"winding_max": _auto_int, "burn_in": _auto_int, "t_halving": _auto_int, "alpha": _auto_float}

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = (s.strip() for s in line.partition("="))
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = val
        cfg = cls()
        for key, val in values.items():
            cfg.set(key, val)
        cfg.validate()
        return cfg

    def set(self, key: str, val: str):
        f = {f.name: f for f in fields(self)}[key]
        conv = self._parsers.get(key) or {"int": int, "float": float, "str": str}[f.type]
        try:
            setattr(self, key, conv(val))
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None

    def dump(self) -> str:
        def fmt(v):
            return "auto" if v is None else repr(v) if isinstance(v, float) else str(v)

        return "".join(f"{f.name} = {fmt(getattr(self, f.name))}\n" for f in fields(self))

    # derived objects ----------------------------------------------------

    @property
    def substeps(self) -> int:
        return parse_mode(self.mode)

    def horizon_list(self) -> list:
        a, sep, b = self.horizons.partition("..")
        if not sep:
            return [int(v) for v in self.horizons.split(",")]
        return list(range(int(a), int(b) + 1))

    def make_basis(self):
        return parse_basis(self.basis, self.grid)

    def make_dist(self):
        return parse_distribution(self.dist)

    def make_seq(self, basis) -> KickSequence:
        return KickSequence(self.seed, self.make_dist(), basis.K, self.substeps)

    def make_psi(self, spec: str) -> np.ndarray:
        kind, _, arg = spec.partition(":")
        if kind == "zero":
            return np.zeros(self.grid)
        if kind == "bump":
            return ex.psi_bump(self.grid, float(arg or 0.0))
        raise ConfigError(f"bad psi specification {spec!r}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.grid, b=self.b, winding_max=self.winding_max, substeps=self.substeps)

    def validate(self):
        try:
            if self.grid < 8:
                raise ConfigError("grid must be >= 8")
            basis = self.make_basis()
            self.make_dist()
            P = self.substeps
            if self.winding_max is not None and self.winding_max < min_winding_bound(self.b, 1 / P):
                raise ConfigError("winding_max below 1 + ceil(|b dt|)")
            hs = self.horizon_list()
            if not hs or min(hs) < 0 or any(b <= a for a, b in zip(hs, hs[1:])):
                raise ConfigError("horizons must be non-negative and increasing")
            if self.samples < 1 or self.pasts < 1 or self.futures < 1:
                raise ConfigError("sample counts must be positive")
            if self.burn_in is not None and not 0 <= self.burn_in < len(hs):
                raise ConfigError("burn_in out of range")
            if self.t_halving is not None and self.t_halving < 0:
                raise ConfigError("t_halving must be >= 0")
            if not 0 <= self.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            if self.past_horizon < 0 or self.lead < 1 or self.kicks < 10:
                raise ConfigError("past_horizon >= 0, lead >= 1 and kicks >= 10 required")
            if self.alpha is not None and not self.alpha > 0:
                raise ConfigError("alpha must be positive")
            self.make_psi(self.psi1)
            self.make_psi(self.psi2)
            if basis.K < 1:
                raise ConfigError("empty basis")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


# -- output helpers ----------------------------------------------------------


def _num(v: float) -> str:
    return "%.12e" % v


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit_payload(series, burn_in):
    try:
        fit = ex.fit_lambda(series, burn_in)
    except ex.FitError as exc:
        return {"lambda_hat": None, "C_hat": None, "r_squared": None, "n_samples": series.n_samples,
                "burn_in": burn_in, "status": "too-few-points", "detail": str(exc)}, None
    status = "decay" if fit.lambda_hat > 1e-9 else "no-decay"
    return {
        "lambda_hat": fit.lambda_hat,
        "C_hat": fit.C_hat,
        "r_squared": fit.r_squared,
        "n_samples": series.n_samples,
        "burn_in": fit.burn_in,
        "n_used": fit.n_used,
        "status": status,
        "max_scaled_diameter": ex.scaled_diameter_bound(series, fit.lambda_hat),
    }, fit


# -- subcommands ----------------------------------------------------------------


def cmd_decay(cfg: RunConfig, args) -> int:
    basis = cfg.make_basis()
    seq = cfg.make_seq(basis)
    hs = cfg.horizon_list()
    series = ex.decay_experiment(cfg.solver_config(), basis, seq, cfg.samples, hs, ex.worker_count())
    out = Path(cfg.out)
    _write_csv(out / "decay.csv", ["sample", "horizon", "diameter"],
               [(i, h, _num(series.per_sample[i, k])) for i in range(series.n_samples) for k, h in enumerate(hs)])
    burn = cfg.burn_in if cfg.burn_in is not None else int(round(0.2 * len(hs)))
    payload, fit = _fit_payload(series, burn)
    _write_json(out / "fit.json", payload)
    _write_omega_csv(cfg, basis, seq.derive(0), hs, out / "omega.csv")
    if args.dump_values:
        P = cfg.substeps
        ev = evolve(cfg.solver_config().with_span(-P, hs[-1] * P), seq.derive(0), basis)
        _write_csv(out / "values.csv", ["time", "index", "value"],
                   [(ev.r + n, i, _num(ev.phi[n, i])) for n in range(ev.steps + 1) for i in range(ev.M)])
    if fit is None:
        print(f"decay: {payload['detail']}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"lambda_hat={fit.lambda_hat:.6g} C_hat={fit.C_hat:.6g} r2={fit.r_squared:.4f} "
          f"samples={series.n_samples} status={payload['status']}")
    return EXIT_OK


def _write_omega_csv(cfg, basis, seq, hs, path):
    P = cfg.substeps
    rows = []
    for h in hs:
        ev = evolve(cfg.solver_config().with_span(-P, h * P), seq, basis)
        sm = shock_map(ev, 0)
        rows.extend((h, y, int(sm.map[y]), sm.kind[y]) for y in range(ev.M))
    _write_csv(path, ["t_minus_s", "point_index", "terminal_index", "kind"], rows)


def cmd_fit(cfg: RunConfig, args) -> int:
    src = Path(args.input or Path(cfg.out) / "decay.csv")
    try:
        data = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {src}: {exc}") from None
    samples = np.unique(data[:, 0]).astype(int)
    hs = np.unique(data[:, 1]).astype(int)
    table = np.zeros((len(samples), len(hs)))
    si = {s: i for i, s in enumerate(samples)}
    hi = {h: i for i, h in enumerate(hs)}
    for s, h, d in data:
        table[si[int(s)], hi[int(h)]] = d
    series = ex.DecaySeries(hs, table, table.mean(axis=0), cfg.grid)
    burn = cfg.burn_in if cfg.burn_in is not None else int(round(0.2 * len(hs)))
    payload, fit = _fit_payload(series, burn)
    _write_json(Path(cfg.out) / "fit.json", payload)
    if fit is None:
        print(f"fit: {payload['detail']}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"lambda_hat={fit.lambda_hat:.6g} C_hat={fit.C_hat:.6g} r2={fit.r_squared:.4f}")
    return EXIT_OK


def cmd_halving(cfg: RunConfig, args) -> int:
    basis = cfg.make_basis()
    seq = cfg.make_seq(basis)
    kw = dict(n_pasts=cfg.pasts, n_futures=cfg.futures, past_horizon=cfg.past_horizon, workers=ex.worker_count())
    Ts = [cfg.t_halving] if cfg.t_halving is not None else range(1, 11)
    best, results = ex.halving_scan(cfg.solver_config(), basis, seq, Ts, **kw)
    _write_json(Path(cfg.out) / "halving.json", {
        "T": best.T,
        "frequency": best.frequency,
        "min_past_frequency": best.min_past_frequency,
        "excluded": best.excluded,
        "trials": best.n_trials,
        "confidence": best.confidence,
        "scan": [{"T": r.T, "frequency": r.frequency, "min_past_frequency": r.min_past_frequency}
                 for r in results],
    })
    print(f"T={best.T} frequency={best.frequency:.4f} min_past={best.min_past_frequency:.4f} "
          f"excluded={best.excluded}")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig, args) -> int:
    basis = cfg.make_basis()
    seq = cfg.make_seq(basis)
    hs = cfg.horizon_list()
    psi1, psi2 = cfg.make_psi(cfg.psi1), cfg.make_psi(cfg.psi2)
    rows = []
    for i in range(cfg.samples):
        d = ex.two_solution_convergence(cfg.solver_config(), basis, seq.derive(i), psi1, psi2, hs, lead=cfg.lead)
        rows.extend((i, h, _num(v)) for h, v in zip(hs, d))
    _write_csv(Path(cfg.out) / "convergence.csv", ["sample", "horizon", "distance"], rows)
    last = np.array([float(r[2]) for r in rows if r[1] == hs[-1]])
    print(f"fraction below 2/M at horizon {hs[-1]}: {np.mean(last < 2 / cfg.grid):.3f}")
    return EXIT_OK


def cmd_lyapunov(cfg: RunConfig, args) -> int:
    basis = cfg.make_basis()
    seq = cfg.make_seq(basis)
    n = cfg.kicks * cfg.substeps
    ev = evolve(cfg.solver_config().with_span(0, n), seq, basis)
    path = backtrack(ev, int(np.argmin(ev.phi[-1])))
    res = ex.lyapunov_exponent(path, seq, basis)
    _write_json(Path(cfg.out) / "lyapunov.json", {
        "exponent": res.exponent * cfg.substeps,
        "second": res.second * cfg.substeps,
        "kicks": res.n_kicks,
        "max_det_error": res.max_det_error,
    })
    print(f"top exponent per unit time = {res.exponent * cfg.substeps:.6g} (det error {res.max_det_error:.2e})")
    return EXIT_OK


def _certificate(cfg: RunConfig, args):
    basis = cfg.make_basis()
    if getattr(args, "candidates", None):
        try:
            cand = [[float(v) for v in row.split(",")] for row in args.candidates.split(";")]
        except ValueError:
            raise ConfigError("bad --candidates list") from None
    else:
        cand = ex.auto_candidates(basis)
    return basis, ex.separation_check(basis, cand, cfg.alpha)


def cmd_separation(cfg: RunConfig, args) -> int:
    try:
        basis, cert = _certificate(cfg, args)
    except ex.SeparationError as exc:
        print(f"separation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_json(Path(cfg.out) / "certificate.json", {
        "coefficients": cert.coefficients.tolist(),
        "x": cert.x.tolist(),
        "J": [list(j) for j in cert.J],
        "alpha0": cert.alpha0,
        "alpha": cert.alpha,
        "I": None if cert.I is None else [list(i) for i in cert.I],
        "grid": cert.M,
    })
    print(f"alpha0={cert.alpha0:.6g} x={cert.x.tolist()}")
    return EXIT_OK


def cmd_constants(cfg: RunConfig, args) -> int:
    try:
        basis, cert = _certificate(cfg, args)
    except ex.SeparationError as exc:
        print(f"separation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        pc = ex.proof_constants(cert, basis, cfg.b if cfg.substeps > 1 else None)
    except ValueError as exc:
        print(f"constants: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_json(Path(cfg.out) / "constants.json", {
        "C": float(pc.C), "alpha": float(pc.alpha), "N_prime": str(pc.N_prime), "N": str(pc.N),
        "c1_norm": pc.c1_norm, "alpha0": cert.alpha0,
    })
    print(f"C={float(pc.C):.6g} alpha={float(pc.alpha):.6g} N'={pc.N_prime} N={pc.N}")
    return EXIT_OK


def cmd_embed(cfg: RunConfig, args) -> int:
    rep = check_embedding(cfg.make_basis())
    if rep.passed:
        print("embedding: pass")
        return EXIT_OK
    print(f"embedding: fail ({rep.reason}) witness={list(rep.witness)}")
    return EXIT_FAIL


def cmd_oracle(cfg: RunConfig, args) -> int:
    rep = run_oracle_suite(args.max_m, args.max_steps, args.seeds)
    print(f"oracle: {rep.cases} cases, {len(rep.mismatches)} mismatches, max rel error {rep.max_rel_error:.2e}")
    for m in rep.mismatches[:10]:
        print(f"  mismatch {m}")
    return EXIT_OK if rep.ok else EXIT_ORACLE


COMMANDS = {
    "decay": cmd_decay,
    "fit": cmd_fit,
    "halving": cmd_halving,
    "convergence": cmd_convergence,
    "lyapunov": cmd_lyapunov,
    "separation": cmd_separation,
    "embed": cmd_embed,
    "oracle": cmd_oracle,
    "constants": cmd_constants,
}

_OVERRIDES = {
    "seed": "seed", "out": "out", "samples": "samples", "grid": "grid", "b": "b", "mode": "mode",
    "horizons": "horizons", "t_halving": "t_halving", "basis": "basis", "dist": "dist",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed")
    p.add_argument("--out")
    p.add_argument("--samples")
    p.add_argument("--grid")
    p.add_argument("--sigma", help="replace sigma, keeping the distribution family")
    p.add_argument("--b")
    p.add_argument("--mode", help="kicked or white:P")
    p.add_argument("--horizons", help="A..B or a comma list")
    p.add_argument("--t-halving", dest="t_halving")
    p.add_argument("--basis", help="e.g. fourier:1c,1s")
    p.add_argument("--dist", help="uniform:S or gauss:S")
    p.add_argument("--auto3", action="store_true", help="rotated-cosine candidates (default)")
    p.add_argument("--candidates", help="'c1,c2;c1,c2;...' coefficient vectors")
    p.add_argument("--alpha")
    p.add_argument("--input", help="decay.csv for the fit subcommand")
    p.add_argument("--dump-values", action="store_true", help="also write values.csv")
    p.add_argument("--max-m", type=int, default=16)
    p.add_argument("--max-steps", type=int, default=4)
    p.add_argument("--seeds", type=int, default=50)
    return p


def load_config(args) -> RunConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    cfg = RunConfig.parse(text)
    for flag, key in _OVERRIDES.items():
        v = getattr(args, flag)
        if v is not None:
            cfg.set(key, v)
    if args.alpha is not None:
        cfg.set("alpha", args.alpha)
    if args.sigma is not None:
        kind = cfg.dist.partition(":")[0]
        cfg.set("dist", f"{kind}:{args.sigma}")
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WindingBoundError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
