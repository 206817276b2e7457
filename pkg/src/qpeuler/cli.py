"""Command-line driver: ``qpeuler <stage> --config run.json --out dir``.

Exit codes: 0 success, 2 configuration error, 3 numerical stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_stage_tol
from .errors import ConfigError, StageError
from .flowfield import assemble_flow, encircles, find_stagnation, trace_level_sets, write_stagnation
from .frequencies import (DiophantineSpec, SpectralSource, is_diophantine, resonance_measure,
                          transversality_probe, window_source)
from .kernels import BACKEND
from .nonlinearity import Nonlinearity, RegularizedFamily, _separations, default_eta, shift_residual, solve_shift
from .potential import Potential, PotentialSpec
from .qp_solver import SolverConfig, SolverProblem, newton_solve, tail_correction, verify_euler
from .shear import fixed_point_equilibrium
from .spectrum import compute_spectrum, frequency_vector, secular_roots

log = logging.getLogger("qpeuler")

STAGES = ("equilibrium", "spectrum", "secular", "nonlinearity", "diophantine", "measure", "solve", "flow")


def _json(path: Path, payload) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


class Pipeline:
    """Stages computed on demand and cached; each writes its artifacts into ``out``."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.manifest = {"version": __version__, "backend": BACKEND, "config": cfg.to_dict(), "stages": {}}
        self._cache: dict = {}

    def _once(self, name, fn):
        if name not in self._cache:
            t0 = time.perf_counter()
            self._cache[name] = fn()
            rec = self.manifest["stages"].setdefault(name, {})
            rec["seconds"] = round(time.perf_counter() - t0, 3)
            rec["status"] = "ok"
        return self._cache[name]

    @property
    def spec(self) -> PotentialSpec:
        c = self.cfg
        return PotentialSpec.from_width(c.kappa0, c.r, c.m, c.S)

    def equilibrium(self):
        def run():
            corr, eq, info = fixed_point_equilibrium(self.spec, tol=self.cfg.tol("equilibrium"))
            eq.write_csv(self.out / "equilibrium.csv")
            eq.write_manifest(self.out / "equilibrium.json")
            (self.out / "potential.json").write_text(Potential(self.spec, corr).to_json())
            self.manifest["stages"]["equilibrium"] = {"iterations": info["iterations"], "E": eq.E}
            return corr, eq

        return self._once("equilibrium", run)

    def spectrum(self):
        def run():
            corr, eq = self.equilibrium()
            k = max(self.cfg.J, self.cfg.kappa0 + 3)
            sp = compute_spectrum(Potential(self.spec, corr), k, n_nodes=eq.y.size, kappa0=self.cfg.kappa0)
            (self.out / "spectrum.json").write_text(sp.to_json())
            sp.write_csv(self.out / "spectrum.csv")
            self.manifest["stages"]["spectrum"] = {"omega": frequency_vector(sp), "negative_count": sp.negative_count}
            return sp

        return self._once("spectrum", run)

    def secular(self):
        def run():
            c = self.cfg
            roots = secular_roots(c.E, c.r, c.kappa0)
            payload = {"E": roots.E, "r": roots.r, "lambdas": roots.lambdas, "alpha0": roots.alpha0,
                       "alpha2": roots.alpha2, "beta": roots.beta, "extra": roots.extra}
            _json(self.out / "secular.json", payload)
            self.manifest["stages"]["secular"] = {"lambdas": roots.lambdas}
            return roots

        return self._once("secular", run)

    def nonlinearity(self):
        def run():
            _, eq = self.equilibrium()
            nl = Nonlinearity(eq)
            eta = self.cfg.eta if self.cfg.eta is not None else default_eta(nl, max(self.cfg.eps, 1e-300), self.cfg.S)
            sep = float(_separations(nl).min())
            if 4.0 * eta >= sep:
                raise ConfigError(f"eta={eta:g} too large: 4 eta must stay below the critical-value gap {sep:.4g}")
            fam = RegularizedFamily(nl, eta, self.cfg.S)
            solve_shift(fam, tol=self.cfg.tol("shift"))
            nl.write_csv(self.out / "nonlinearity.csv")
            np.savetxt(self.out / "shift.csv", np.column_stack([eq.y, fam.shift]), delimiter=",",
                       header="y,h", comments="")
            self.manifest["stages"]["nonlinearity"] = {
                "eta": eta, "shift_sup": float(np.abs(fam.shift).max()), "shift_residual": shift_residual(fam)}
            return nl, fam

        return self._once("nonlinearity", run)

    def _source(self):
        c = self.cfg
        return self._cache.setdefault("source", SpectralSource(c.kappa0, c.r, c.m, c.S))

    def diophantine(self):
        def run():
            c = self.cfg
            omega = frequency_vector(self.spectrum())
            dres = is_diophantine(omega, DiophantineSpec(c.upsilon, c.tau, c.Lmax))
            tv = transversality_probe(self._source(), c.E, seed=c.seed)
            payload = {"omega": omega, "passed": dres.passed, "worst_ell": dres.ell, "worst_value": dres.value,
                       "rho0_estimate": tv.rho0_estimate, "m0_used": tv.m0_used, "derivatives": tv.derivatives,
                       "transversality_worst_ell": tv.worst_ell}
            _json(self.out / "diophantine.json", payload)
            self.manifest["stages"]["diophantine"] = {"passed": dres.passed, "rho0": tv.rho0_estimate}
            return dres

        return self._once("diophantine", run)

    def measure(self):
        def run():
            c = self.cfg
            if c.eps == 0.0:
                self.manifest["stages"]["measure"] = {"note": "eps = 0: empty window"}
                return None
            dspec = DiophantineSpec(c.upsilon, c.tau, c.Lmax)
            rep = resonance_measure(c.E, c.eps, dspec, 2000, window_source(self._source(), c.E, c.eps), seed=c.seed)
            (self.out / "measure.json").write_text(rep.to_json())
            rep.write_csv(self.out / "measure.csv")
            self.manifest["stages"]["measure"] = {"failing_fraction": rep.failing_fraction}
            return rep

        return self._once("measure", run)

    def solve(self):
        def run():
            c = self.cfg
            _, eq = self.equilibrium()
            sp = self.spectrum()
            nl, fam = self.nonlinearity()
            prob = SolverProblem(eq, sp, nl, c.S)
            prob._families[fam.eta] = fam
            scfg = SolverConfig(c.eps, tuple(c.xi), K=c.K, J=c.J, tol=c.tol("solve"), upsilon=c.upsilon,
                                tau=c.tau, L_max=c.Lmax, eta=fam.eta)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = newton_solve(prob, scfg)
            if c.eps:
                tail_correction(res)
            verify_euler(res)
            res.write_manifest(self.out / "solution.json")
            res.state.write_csv(self.out / "coefficients.csv")
            self.manifest["stages"]["solve"] = {"omega_tilde": res.omega_tilde, "euler_residual": res.euler_residual,
                                                "iterations": res.iterations, "warnings": res.warnings}
            if res.euler_residual > c.tol("euler"):
                raise StageError(f"Euler residual {res.euler_residual:.3e} exceeds {c.tol('euler'):g}")
            return res

        return self._once("solve", run)

    def flow(self):
        def run():
            res = self.solve()
            yh = res.family.eq.y[::64]
            fl = assemble_flow(res, y=np.concatenate([-yh[:0:-1], yh]))
            fl.write_csv(self.out / "flow.csv")
            pts = find_stagnation(fl, tol=self.cfg.tol("stagnation"))
            write_stagnation(pts, self.out / "stagnation.json")
            contours = self._center_contours(fl, pts)
            _json(self.out / "contours.json", contours)
            self.manifest["stages"]["flow"] = {
                "window": fl.window,
                "stagnation": [p.to_dict() for p in pts],
                "closed_around_centers": sum(1 for c in contours if c["encircles"]),
            }
            return fl, pts

        return self._once("flow", run)

    @staticmethod
    def _center_contours(fl, pts) -> list:
        """One level between each center and its nearest saddle on the same line."""
        out = []
        for c in (p for p in pts if p.type == "center"):
            same = [s for s in pts if s.type == "saddle" and abs(s.location[1] - c.location[1]) < 1e-2]
            if not same:
                continue
            s = min(same, key=lambda s: abs(s.location[0] - c.location[0]))
            half = abs(s.location[0] - c.location[0])
            lev = c.psi + 0.5 * (s.psi - c.psi)
            # the eye is thin in y: resolve it on a local grid
            yz = c.location[1] + np.linspace(-0.05, 0.05, 201)
            yz = yz[np.abs(yz) <= 1.0]
            zoom = assemble_flow(None, window=(c.location[0] - 1.5 * half, c.location[0] + 1.5 * half), nx=241,
                                 y=yz, evaluator=fl.evaluator)
            ls = trace_level_sets(zoom, levels=[lev])[0]
            hit = any(cl and encircles(pl, c.location) for pl, cl in zip(ls.polylines, ls.closed))
            out.append({"center": c.location, "level": lev, "encircles": hit, "polylines": ls.polylines})
        return out

    def run(self, stage: str) -> None:
        targets = STAGES if stage == "all" else (stage,)
        for name in targets:
            self.manifest["stages"].setdefault(name, {})["status"] = "running"
            try:
                getattr(self, name)()
            except Exception:
                self.manifest["stages"][name]["status"] = "failed"
                raise
            self.manifest["stages"][name]["status"] = "ok"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpeuler", description="Quasi-periodic stationary Euler flows near Couette.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("stage", choices=STAGES + ("all",))
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--out", default="run", help="output directory (default: ./run)")
    p.add_argument("--stage-tol", action="append", default=[], metavar="STAGE=TOL",
                   help="override a stage tolerance; repeatable or comma separated")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config, parse_stage_tol(args.stage_tol))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    pipe = Pipeline(cfg, out)
    code = 0
    try:
        pipe.run(args.stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except StageError as exc:
        failed = [k for k, v in pipe.manifest["stages"].items() if v.get("status") == "failed"]
        print(f"stage {failed[-1] if failed else args.stage} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        pipe.manifest["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = 3
    pipe.manifest["exit_code"] = code
    _json(out / "manifest.json", pipe.manifest)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
