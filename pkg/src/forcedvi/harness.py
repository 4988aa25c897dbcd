"""Experiment harness and the ``vi`` command line.

Four subcommands, each emitting a CSV artifact with a provenance header:

* ``converge``: error-versus-resolution table for a configured build.
* ``alpha-sweep``: trajectory deviation across equivalent force splits.
* ``quintic``: cancellation stress test, preserving versus mixed build.
* ``rlc``: constrained resonator run with structural verification.

Outputs are deterministic for a fixed config, so files are byte-identical
across runs. Floats are rendered with 17 significant digits; comment lines
start with '#'.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bvp import NonFiniteStateError, make_method
from .discretization import midpoint_triple, mixed_triple, recipe_triple
from .integrators import (
    PhasePoint,
    RankDeficientConstraintsError,
    dirac_minus_step,
    dirac_plus_step,
    hamiltonian_step,
    verify_dirac_structure,
)
from .numkit import (
    NoConvergenceError,
    NonFiniteValueError,
    SingularJacobianError,
    ToleranceSpec,
    fd_gradient,
)
from .quadrature import UnknownRuleError, make_rule
from .systems import (
    alpha_oscillator,
    damped_oscillator,
    quintic_cancellation,
    rlc_capacitor_charge,
    rlc_circuit,
)

_SHOOT_TOL_NOTE = "shooting: Newton on endpoint defect, guess (q1-q0)/h, residual_tol 1e-13"
_DIVERGENCE_GUARD = 1e6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One subcommand invocation. Unused fields may stay None."""

    system: str = "damped-ho"
    quad: str | None = None
    quad_l: str | None = None
    quad_f: str | None = None
    bvp: str = "rk2"
    h: float | None = None
    steps: int | None = None
    alpha: float | None = None
    seed: int = 0
    out: str | None = None
    tol: float = 1e-10

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ConfigError("h must be positive")
        if self.steps is not None and self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if (self.quad_l is None) != (self.quad_f is None):
            raise ConfigError("--quad-l and --quad-f must be given together")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")


def _named_system(name: str, alpha: float | None):
    if name == "damped-ho":
        return damped_oscillator(), 2.0 * math.pi / math.sqrt(1.0 - 0.005**2)
    if name == "alpha-ho":
        return alpha_oscillator(0.0 if alpha is None else alpha), 2.0 * math.pi
    if name == "quintic":
        return quintic_cancellation(), 2.0 * math.pi
    raise ConfigError(f"unknown system {name!r} (known: damped-ho, alpha-ho, quintic, rlc)")


def _build_triple(system, config: RunConfig, default_rule: str):
    method = make_method(config.bvp)
    if config.quad_l is not None:
        return mixed_triple(system, make_rule(config.quad_l), make_rule(config.quad_f), method)
    return recipe_triple(system, make_rule(config.quad or default_rule), method)


def _momentum(system, q, v):
    return fd_gradient(lambda u: system.lagrangian(q, u), v)


def _velocity(system, q, p, tol):
    from .integrators import _continuous_velocity

    return _continuous_velocity(system, q, p, tol)


def _energy_or_none(system, q, p, tol):
    if system.hamiltonian_energy is None:
        return None
    try:
        v = _velocity(system, q, p, tol)
    except (NoConvergenceError, SingularJacobianError, NonFiniteValueError):
        return None
    return float(system.hamiltonian_energy(q, v))


def _integrate_phase_map(triple, q0, p0, h, steps, tol):
    """Roll the phase map; previous-increment extrapolation seeds each solve."""
    qs = [np.asarray(q0, dtype=float)]
    ps = [np.asarray(p0, dtype=float)]
    state = PhasePoint(q0, p0)
    prev_q = None
    for _ in range(steps):
        guess = None if prev_q is None else 2.0 * state.q - prev_q
        nxt = hamiltonian_step(triple, state, h, guess=guess, tol=tol)
        prev_q, state = state.q, nxt
        qs.append(nxt.q)
        ps.append(nxt.p)
    return np.asarray(qs), np.asarray(ps)


# --- converge -------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    steps_per_period: int
    error: float
    ratio: float | None


@dataclass(frozen=True)
class ConvergenceResult:
    rows: tuple[ConvergenceRow, ...]
    errors_at_horizon: tuple[float, ...]
    provenance: tuple[str, ...]


def run_convergence(config: RunConfig) -> ConvergenceResult:
    """Resolution study over 20/40/80/160 steps per period, five periods.

    The error column is the max-norm position error over the final period
    (the solution sits at an extremum exactly at the horizon, where phase
    error is quadratically suppressed and rates are unreadable; the pointwise
    horizon error is reported in the header comments).
    """
    system, period = _named_system(config.system, config.alpha)
    if system.exact_solution is None:
        raise ConfigError(f"system {config.system!r} has no exact solution to converge against")
    triple = _build_triple(system, config, default_rule="trap")
    tol = ToleranceSpec(residual_tol=config.tol)
    q0 = np.ones(system.dim)
    v0 = np.zeros(system.dim)
    p0 = _momentum(system, q0, v0)

    errors = []
    horizon_errors = []
    for spp in (20, 40, 80, 160):
        h = period / spp
        steps = 5 * spp
        qs, _ = _integrate_phase_map(triple, q0, p0, h, steps, tol)
        worst = 0.0
        for k in range(4 * spp, steps + 1):
            qe, _ = system.exact_solution(k * h, q0, v0)
            worst = max(worst, float(np.max(np.abs(qs[k] - qe))))
        errors.append(worst)
        qe, _ = system.exact_solution(steps * h, q0, v0)
        horizon_errors.append(float(np.max(np.abs(qs[-1] - qe))))

    rows = []
    for i, spp in enumerate((20, 40, 80, 160)):
        ratio = None if i == 0 else errors[i - 1] / errors[i]
        rows.append(ConvergenceRow(spp, errors[i], ratio))
    prov = _provenance_lines("converge", config) + (
        "# error metric: max-norm position error over the final period",
        "# horizon (t=5T) pointwise errors: "
        + " ".join(_fmt(e) for e in horizon_errors),
        f"# initial conditions: q={list(q0)} v={list(v0)} p={list(p0)}",
    )
    return ConvergenceResult(tuple(rows), tuple(horizon_errors), prov)


# --- alpha sweep ----------------------------------------------------------

@dataclass(frozen=True)
class SweepRun:
    alpha: float
    qs: np.ndarray = field(repr=False)
    ps: np.ndarray = field(repr=False)
    deviation: np.ndarray = field(repr=False)
    max_deviation: float


@dataclass(frozen=True)
class AlphaSweepResult:
    h: float
    steps: int
    builds: dict[str, tuple[SweepRun, ...]]
    provenance: tuple[str, ...]

    def max_deviation(self, build: str) -> float:
        return max(r.max_deviation for r in self.builds[build])


def run_alpha_sweep(config: RunConfig) -> AlphaSweepResult:
    """Integrate every force split alpha = 0, 0.1, ..., 1 of the oscillator.

    Each build's runs are compared pointwise against its own alpha = 0 run;
    the preserving build uses one rule for action and forces, the mixed build
    uses the configured (or trap/midpoint) pair.
    """
    h = config.h if config.h is not None else 0.05
    steps = config.steps if config.steps is not None else 200
    tol = ToleranceSpec(residual_tol=config.tol)
    method_name = config.bvp
    rule_single = config.quad or "trap"
    rule_l = config.quad_l or "trap"
    rule_f = config.quad_f or "midpoint"

    alphas = [round(0.1 * i, 1) for i in range(11)]
    builds: dict[str, tuple[SweepRun, ...]] = {}
    for build in ("preserving", "mixed"):
        runs = []
        base_qs = None
        for a in alphas:
            system = alpha_oscillator(a)
            if build == "preserving":
                triple = recipe_triple(system, make_rule(rule_single), make_method(method_name))
            else:
                triple = mixed_triple(
                    system, make_rule(rule_l), make_rule(rule_f), make_method(method_name)
                )
            q0 = np.ones(1)
            v0 = np.zeros(1)
            p0 = _momentum(system, q0, v0)
            qs, ps = _integrate_phase_map(triple, q0, p0, h, steps, tol)
            if base_qs is None:
                base_qs = qs
            dev = np.max(np.abs(qs - base_qs), axis=1)
            runs.append(SweepRun(a, qs, ps, dev, float(np.max(dev))))
        builds[build] = tuple(runs)

    prov = _provenance_lines("alpha-sweep", config) + (
        f"# preserving build: rule={rule_single} method={method_name}",
        f"# mixed build: rule_lagrangian={rule_l} rule_force={rule_f} method={method_name}",
        "# deviation: max-norm position difference against the same build's alpha=0 run",
        "# initial conditions: q=[1.0] v=[0.0]",
    )
    return AlphaSweepResult(h, steps, builds, prov)


# --- quintic cancellation -------------------------------------------------

@dataclass(frozen=True)
class QuinticRun:
    label: str
    qs: np.ndarray = field(repr=False)
    ps: np.ndarray = field(repr=False)
    status: str
    steps_completed: int
    max_error: float


@dataclass(frozen=True)
class QuinticResult:
    h: float
    steps: int
    runs: dict[str, QuinticRun]
    sho_reference_error: float
    provenance: tuple[str, ...]


def _guarded_trajectory(triple, q0, p0, h, steps, tol):
    qs = [np.asarray(q0, dtype=float)]
    ps = [np.asarray(p0, dtype=float)]
    state = PhasePoint(q0, p0)
    prev_q = None
    status = "ok"
    for _ in range(steps):
        guess = None if prev_q is None else 2.0 * state.q - prev_q
        try:
            nxt = hamiltonian_step(triple, state, h, guess=guess, tol=tol)
        except (NoConvergenceError, SingularJacobianError, NonFiniteStateError,
                NonFiniteValueError, FloatingPointError, OverflowError):
            status = "diverged"
            break
        if float(np.max(np.abs(nxt.q))) > _DIVERGENCE_GUARD:
            status = "diverged"
            break
        prev_q, state = state.q, nxt
        qs.append(nxt.q)
        ps.append(nxt.p)
    return np.asarray(qs), np.asarray(ps), status


def run_quintic(config: RunConfig) -> QuinticResult:
    """Cancellation test: a huge quintic potential offset by an external force.

    Build (a) discretizes action and forces with one rule (default trap), so
    the cancellation survives and the run tracks the plain oscillator. Build
    (b) mixes rules (default simpson on the action, trap on the forces) and
    is expected to veer off or fail; failure is a reported outcome, not an
    error.
    """
    h = config.h if config.h is not None else 0.05
    steps = config.steps if config.steps is not None else 200
    tol = ToleranceSpec(residual_tol=config.tol)
    method = make_method(config.bvp)
    rule_a = make_rule(config.quad or "trap")
    rule_bl = make_rule(config.quad_l or "simpson")
    rule_bf = make_rule(config.quad_f or "trap")

    system = quintic_cancellation()
    q0 = np.ones(1)
    v0 = np.zeros(1)
    p0 = _momentum(system, q0, v0)

    def exact_q(k):
        qe, _ = system.exact_solution(k * h, q0, v0)
        return qe

    runs: dict[str, QuinticRun] = {}
    for label, triple in (
        ("preserving", recipe_triple(system, rule_a, method)),
        ("mixed", mixed_triple(system, rule_bl, rule_bf, method)),
    ):
        qs, ps, status = _guarded_trajectory(triple, q0, p0, h, steps, tol)
        err = max(
            (float(np.max(np.abs(qs[k] - exact_q(k)))) for k in range(qs.shape[0])),
            default=0.0,
        )
        runs[label] = QuinticRun(label, qs, ps, status, qs.shape[0] - 1, err)

    # Same preserving construction on the plain oscillator, for scale.
    sho = alpha_oscillator(0.0)
    sho_triple = recipe_triple(sho, rule_a, method)
    qs_ref, _, _ = _guarded_trajectory(sho_triple, q0, _momentum(sho, q0, v0), h, steps, tol)
    sho_err = max(
        (float(np.max(np.abs(qs_ref[k] - exact_q(k)))) for k in range(qs_ref.shape[0])),
        default=0.0,
    )

    prov = _provenance_lines("quintic", config) + (
        f"# preserving build: rule={rule_a.name} method={method.name}",
        f"# mixed build: rule_lagrangian={rule_bl.name} rule_force={rule_bf.name} method={method.name}",
        f"# plain-oscillator reference error (preserving build): {_fmt(sho_err)}",
        "# initial conditions: q=[1.0] v=[0.0]",
    )
    return QuinticResult(h, steps, runs, sho_err, prov)


# --- rlc ------------------------------------------------------------------

@dataclass(frozen=True)
class RLCResult:
    h: float
    steps: int
    ts: np.ndarray = field(repr=False)
    qs: np.ndarray = field(repr=False)
    ps: np.ndarray = field(repr=False)
    mus: np.ndarray = field(repr=False)
    qc_exact: np.ndarray = field(repr=False)
    constraint_residuals: np.ndarray = field(repr=False)
    structure_violations: np.ndarray = field(repr=False)
    max_qc_error: float = 0.0
    provenance: tuple[str, ...] = ()

    @property
    def max_constraint_residual(self) -> float:
        return float(np.max(self.constraint_residuals)) if self.constraint_residuals.size else 0.0

    @property
    def max_structure_violation(self) -> float:
        return float(np.max(self.structure_violations)) if self.structure_violations.size else 0.0


def run_rlc(config: RunConfig, variant: str = "+") -> RLCResult:
    """Constrained resonator with the chord-midpoint triple.

    Defaults follow the reported setup: inductance 0.75, resistance 0.1,
    capacitance 3, h = 0.05, 1000 steps, initial capacitor charge 1 with all
    currents (hence all momenta) zero. Every step is re-verified against the
    structure conditions.
    """
    h = config.h if config.h is not None else 0.05
    steps = config.steps if config.steps is not None else 1000
    tol = ToleranceSpec(residual_tol=config.tol)
    circuit = rlc_circuit(0.75, 0.1, 3.0)
    triple = midpoint_triple(circuit.system)
    dist = circuit.distribution
    retr = circuit.retraction
    stepper = dirac_plus_step if variant == "+" else dirac_minus_step

    q = np.array([1.0, 0.0, 0.0])
    p = np.zeros(3)
    ts = [0.0]
    qs = [q.copy()]
    ps = [p.copy()]
    mus, cons, viol = [], [], []
    prev_q = None
    state = PhasePoint(q, p)
    for k in range(steps):
        if prev_q is None:
            guess = None
        else:
            v_prev = retr.inverse(prev_q, state.q, h)
            guess = retr.forward(state.q, v_prev, h)
        rec = stepper(triple, dist, retr, state, h, guess=guess, tol=tol)
        report = verify_dirac_structure(rec, triple, dist, tol=1e-8)
        prev_q = state.q
        state = PhasePoint(rec.q_next, rec.p_next)
        ts.append((k + 1) * h)
        qs.append(rec.q_next)
        ps.append(rec.p_next)
        mus.append(rec.mu)
        cons.append(report.constraint_residual)
        viol.append(report.max_violation)

    ts = np.asarray(ts)
    qs = np.asarray(qs)
    qc_exact = np.array([rlc_capacitor_charge(t, 0.75, 0.1, 3.0, q0=1.0, i0=0.0) for t in ts])
    max_err = float(np.max(np.abs(qs[:, 0] - qc_exact)))
    prov = _provenance_lines("rlc", config) + (
        f"# circuit: L=0.75 R=0.1 C=3.0, variant={variant}, triple=midpoint-closed-form",
        "# initial conditions: q=[1.0, 0.0, 0.0] (capacitor charge 1), p=[0.0, 0.0, 0.0]"
        " from the continuous Legendre transform",
        "# oracle: underdamped series solution for the capacitor charge",
    )
    return RLCResult(
        h=h, steps=steps, ts=ts, qs=qs, ps=np.asarray(ps), mus=np.asarray(mus),
        qc_exact=qc_exact, constraint_residuals=np.asarray(cons),
        structure_violations=np.asarray(viol), max_qc_error=max_err, provenance=prov,
    )


# --- CSV ------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _provenance_lines(subcommand: str, config: RunConfig) -> tuple[str, ...]:
    pairs = [
        ("system", config.system), ("quad", config.quad), ("quad_l", config.quad_l),
        ("quad_f", config.quad_f), ("bvp", config.bvp), ("h", config.h),
        ("steps", config.steps), ("alpha", config.alpha), ("seed", config.seed),
        ("tol", config.tol),
    ]
    echo = " ".join(f"{k}={v}" for k, v in pairs)
    return (
        f"# forcedvi {__version__} subcommand={subcommand}",
        f"# config: {echo}",
        f"# stepper: Newton residual_tol={config.tol}, damped by step halving;"
        " trajectory guesses extrapolate the previous increment",
        f"# {_SHOOT_TOL_NOTE}",
    )


def _trajectory_header(dim: int, extra: tuple[str, ...] = ()) -> str:
    cols = ["step", "t"]
    cols += [f"q_{i}" for i in range(dim)]
    cols += [f"p_{i}" for i in range(dim)]
    cols.append("energy")
    cols += list(extra)
    return ",".join(cols)


def write_convergence_csv(path: str, result: ConvergenceResult):
    lines = list(result.provenance)
    lines.append("steps_per_period,error,ratio")
    for row in result.rows:
        lines.append(f"{row.steps_per_period},{_fmt(row.error)},{_fmt(row.ratio)}")
    _write(path, lines)


def write_alpha_sweep_csv(path: str, result: AlphaSweepResult,
                          tol: ToleranceSpec = ToleranceSpec()):
    lines = list(result.provenance)
    lines.append(_trajectory_header(1, ("build", "alpha", "deviation", "max_deviation")))
    for build, runs in result.builds.items():
        for run in runs:
            system = alpha_oscillator(run.alpha)
            for k in range(run.qs.shape[0]):
                t = k * result.h
                e = _energy_or_none(system, run.qs[k], run.ps[k], tol)
                lines.append(",".join([
                    str(k), _fmt(t), _fmt(run.qs[k][0]), _fmt(run.ps[k][0]), _fmt(e),
                    build, _fmt(run.alpha), _fmt(run.deviation[k]), _fmt(run.max_deviation),
                ]))
    for build, runs in result.builds.items():
        for run in runs:
            lines.append(f"# summary build={build} alpha={_fmt(run.alpha)} "
                         f"max_deviation={_fmt(run.max_deviation)}")
    _write(path, lines)


def write_quintic_csv(path: str, result: QuinticResult,
                      tol: ToleranceSpec = ToleranceSpec()):
    system = quintic_cancellation()
    q0 = np.ones(1)
    v0 = np.zeros(1)
    lines = list(result.provenance)
    lines.append(_trajectory_header(1, ("build", "q_exact", "status")))
    if result.steps == 0:
        _write(path, lines)
        return
    for label, run in result.runs.items():
        for k in range(run.qs.shape[0]):
            t = k * result.h
            qe, _ = system.exact_solution(t, q0, v0)
            e = _energy_or_none(system, run.qs[k], run.ps[k], tol)
            status = run.status if k == run.qs.shape[0] - 1 else "ok"
            lines.append(",".join([
                str(k), _fmt(t), _fmt(run.qs[k][0]), _fmt(run.ps[k][0]), _fmt(e),
                label, _fmt(qe[0]), status,
            ]))
    for label, run in result.runs.items():
        lines.append(f"# summary build={label} status={run.status} "
                     f"steps_completed={run.steps_completed} max_error={_fmt(run.max_error)}")
    lines.append(f"# summary plain-oscillator reference error={_fmt(result.sho_reference_error)}")
    _write(path, lines)


def write_rlc_csv(path: str, result: RLCResult):
    lines = list(result.provenance)
    lines.append(_trajectory_header(3, ("mu_0", "mu_1", "qC_exact", "constraint_residual",
                                        "structure_violation")))
    for k in range(result.qs.shape[0]):
        mu0 = _fmt(result.mus[k - 1][0]) if k > 0 else ""
        mu1 = _fmt(result.mus[k - 1][1]) if k > 0 else ""
        con = _fmt(result.constraint_residuals[k - 1]) if k > 0 else ""
        vio = _fmt(result.structure_violations[k - 1]) if k > 0 else ""
        row = [str(k), _fmt(result.ts[k])]
        row += [_fmt(x) for x in result.qs[k]]
        row += [_fmt(x) for x in result.ps[k]]
        row.append("")  # no energy for the degenerate system
        row += [mu0, mu1, _fmt(result.qc_exact[k]), con, vio]
        lines.append(",".join(row))
    lines.append(f"# summary max_qc_error={_fmt(result.max_qc_error)} "
                 f"max_constraint_residual={_fmt(result.max_constraint_residual)} "
                 f"max_structure_violation={_fmt(result.max_structure_violation)}")
    _write(path, lines)


def _write(path: str, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --- CLI ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vi",
        description="Forced variational integrator experiments (CSV output).",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, blurb in (
        ("converge", "error-versus-resolution table for a configured build"),
        ("alpha-sweep", "trajectory deviation across equivalent force splits"),
        ("quintic", "cancellation stress test, preserving vs mixed build"),
        ("rlc", "constrained resonator run with structural verification"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--system", default="damped-ho",
                       help="damped-ho | alpha-ho (alpha=0) | quintic | rlc")
        p.add_argument("--quad", default=None, help="quadrature rule: midpoint | trap | simpson")
        p.add_argument("--quad-l", dest="quad_l", default=None,
                       help="action rule for a mixed build (with --quad-f)")
        p.add_argument("--quad-f", dest="quad_f", default=None,
                       help="force rule for a mixed build (with --quad-l)")
        p.add_argument("--bvp", default=("rk4" if name == "quintic" else "rk2"),
                       help="one-step method: euler | rk2 | rk4")
        p.add_argument("--h", type=float, default=None, help="time step")
        p.add_argument("--steps", type=int, default=None, help="step count")
        p.add_argument("--seed", type=int, default=0, help="echoed into the provenance header")
        p.add_argument("--out", default=None, help="output CSV path (default <subcommand>.csv)")
        p.add_argument("--tol", type=float, default=None, help="stepper residual tolerance")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    sub = args.subcommand
    default_tol = 1e-11 if sub == "rlc" else 1e-10
    try:
        config = RunConfig(
            system=args.system, quad=args.quad, quad_l=args.quad_l, quad_f=args.quad_f,
            bvp=args.bvp, h=args.h, steps=args.steps, seed=args.seed,
            out=args.out, tol=args.tol if args.tol is not None else default_tol,
        )
        out = config.out or f"{sub}.csv"
        if sub == "converge":
            write_convergence_csv(out, run_convergence(config))
        elif sub == "alpha-sweep":
            write_alpha_sweep_csv(out, run_alpha_sweep(config))
        elif sub == "quintic":
            write_quintic_csv(out, run_quintic(config))
        else:
            write_rlc_csv(out, run_rlc(config))
    except (NoConvergenceError, SingularJacobianError, NonFiniteStateError,
            NonFiniteValueError, RankDeficientConstraintsError) as exc:
        print(f"vi: solver failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, UnknownRuleError, ValueError) as exc:
        print(f"vi: config error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
