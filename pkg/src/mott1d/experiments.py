"""Scenario harness: regime checks, case comparison, sweeps, localization.

A scenario is one geometry (oscillators on opposite sides of the origin, or
both on the same side) evaluated by one or both engines: the second-order
Dyson engine ("pt") and the coupled-channel propagator ("oracle").  The
harness also owns the dimensionless-regime verdict, the lambda-scaling fits
and the conditional-localization summary, and loads the frozen numeric
thresholds used by the acceptance suite (see scripts/freeze_thresholds.py
for how they were produced).
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channels as ch
from . import perturbation as pt
from .core import (
    ComplexField,
    DimensionlessGroup,
    ModelParams,
    SpatialGrid,
    born_probability,
    suggest_grid,
)

OPPOSITE = "opposite"
COLLINEAR = "collinear"
ENGINES = ("pt", "oracle", "both")


def default_params(case: str = COLLINEAR, epsilon: float = 0.1,
                   lambda0: float = 1e-3) -> ModelParams:
    """Self-consistent natural-unit parameter family for a given epsilon.

    With hbar = M = v0 = 1 the small-parameter assumptions force
    omega = m = epsilon, sigma = delta = 1/epsilon and a1 = 1/epsilon^2;
    the farther oscillator sits at a2 = ±2 a1 depending on the geometry.
    """
    if case not in (OPPOSITE, COLLINEAR):
        raise ValueError(f"case must be {OPPOSITE!r} or {COLLINEAR!r}, got {case!r}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    a1 = epsilon ** -2
    a2 = 2.0 * a1 if case == COLLINEAR else -2.0 * a1
    return ModelParams(M=1.0, m=epsilon, omega=epsilon, lam=lambda0,
                       delta=1.0 / epsilon, sigma=1.0 / epsilon,
                       P0=1.0, a1=a1, a2=a2, hbar=1.0)


# ---------------------------------------------------------------------------
# regime check


@dataclass(frozen=True)
class RegimeThresholds:
    """Verdict bounds, all expressed as multiples of epsilon except the
    epsilon bounds themselves."""

    ratio_valid: float = 2.0      # every small ratio <= ratio_valid * eps
    ratio_invalid: float = 5.0    # any ratio beyond this * eps -> invalid
    lambda_valid: float = 0.1     # lambda0 <= lambda_valid * eps
    lambda_invalid: float = 0.5
    epsilon_valid: float = 0.2
    epsilon_invalid: float = 0.5


@dataclass(frozen=True)
class RegimeReport:
    group: DimensionlessGroup
    thresholds: RegimeThresholds
    checks: dict[str, dict]
    verdict: str  # "valid" | "marginal" | "invalid"

    def as_dict(self) -> dict:
        return {"verdict": self.verdict,
                "epsilon": self.group.epsilon,
                "group": self.group.as_dict(),
                "checks": self.checks}


def _grade(value: float, ok_bound: float, bad_bound: float) -> str:
    if value <= ok_bound:
        return "ok"
    if value <= bad_bound:
        return "marginal"
    return "violation"


def check_regime(params: ModelParams, epsilon: float,
                 thresholds: RegimeThresholds | None = None) -> RegimeReport:
    """Grade every dimensionless ratio against the declared epsilon.

    Valid only when the coupling satisfies lambda0 << eps and every small
    ratio is O(eps); an out-of-regime parameter set is a verdict here, never
    an error (exploring it is allowed, just flagged).
    """
    th = thresholds or RegimeThresholds()
    group = DimensionlessGroup.from_params(params, epsilon)
    checks: dict[str, dict] = {}

    def record(name: str, value: float, ok: float, bad: float) -> None:
        checks[name] = {"value": value, "ok_below": ok, "invalid_above": bad,
                        "verdict": _grade(value, ok, bad)}

    record("epsilon", epsilon, th.epsilon_valid, th.epsilon_invalid)
    record("lambda0", group.lambda0, th.lambda_valid * epsilon, th.lambda_invalid * epsilon)
    for name, value in group.epsilon_ratios().items():
        record(name, value, th.ratio_valid * epsilon, th.ratio_invalid * epsilon)

    verdicts = [c["verdict"] for c in checks.values()]
    if any(v == "violation" for v in verdicts):
        overall = "invalid"
    elif all(v == "ok" for v in verdicts):
        overall = "valid"
    else:
        overall = "marginal"
    return RegimeReport(group=group, thresholds=th, checks=checks, verdict=overall)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class NumericSettings:
    """Engine knobs; None means derive from the parameters."""

    n_points: int | None = None
    x_max: float | None = None
    n_max: int = 4
    dt_oracle: float = 0.1
    dt_duhamel: float | None = None
    pt_rtol: float = 1e-3
    top_shell_threshold: float = 1e-6
    potential_shape: str = "gaussian"


@dataclass(frozen=True)
class ScenarioSpec:
    """One geometry + parameter set + evaluation request."""

    case: str
    params: ModelParams
    epsilon: float = 0.1
    engine: str = "both"
    targets: tuple[tuple[int, int], ...] = ((1, 1),)
    times: tuple[float, ...] | None = None  # default: (1.5 * tau2,)
    numerics: NumericSettings = field(default_factory=NumericSettings)

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        a1, a2 = self.params.a1, self.params.a2
        if self.case == OPPOSITE:
            if not (a2 < 0 < a1):
                raise ValueError(f"case {OPPOSITE!r} needs a2 < 0 < a1, got a1={a1}, a2={a2}")
        elif self.case == COLLINEAR:
            if not (0 < a1 < a2):
                raise ValueError(f"case {COLLINEAR!r} needs 0 < a1 < a2, got a1={a1}, a2={a2}")
        else:
            raise ValueError(f"case must be {OPPOSITE!r} or {COLLINEAR!r}, got {self.case!r}")
        for tgt in self.targets:
            n1, n2 = tgt
            if n1 < 0 or n2 < 0 or (n1 == 0 and n2 == 0):
                raise ValueError(f"target {tgt} must name an excited channel")

    @property
    def eval_times(self) -> tuple[float, ...]:
        return self.times if self.times else (1.5 * self.params.tau2,)

    def grid(self) -> SpatialGrid:
        num = self.numerics
        t_max = max(self.eval_times)
        if num.x_max is not None and num.n_points is not None:
            return SpatialGrid.symmetric(num.x_max, num.n_points)
        g = suggest_grid(self.params, t_max, n_points=num.n_points)
        return g


@dataclass
class EngineRun:
    engine: str
    probabilities: dict[float, dict[tuple[int, int], float]]
    histories: dict[float, tuple[float, float, float, float]]
    convergence: dict[str, float | int | bool | str]
    wall_time: float


@dataclass
class ExcitationReport:
    """Everything one scenario evaluation produced."""

    spec: ScenarioSpec
    regime: RegimeReport
    engines: dict[str, EngineRun]
    wall_time: float
    oracle_states: dict[float, ch.ChannelState] = field(default_factory=dict, repr=False)
    pt_fields: dict[tuple[int, int], ComplexField] = field(default_factory=dict, repr=False)

    def probability(self, engine: str, target: tuple[int, int], t: float | None = None) -> float:
        run = self.engines[engine]
        t = t if t is not None else max(run.probabilities)
        return run.probabilities[t][target]

    def to_dict(self) -> dict:
        """Deterministic JSON payload (wall times excluded on purpose)."""
        p = self.spec.params
        out = {
            "scenario": {
                "case": self.spec.case,
                "engine": self.spec.engine,
                "epsilon": self.spec.epsilon,
                "targets": [list(t) for t in self.spec.targets],
                "times": list(self.spec.eval_times),
                "params": {"M": p.M, "m": p.m, "omega": p.omega, "lambda": p.lam,
                           "delta": p.delta, "sigma": p.sigma, "P0": p.P0,
                           "a1": p.a1, "a2": p.a2, "hbar": p.hbar},
            },
            "regime": self.regime.as_dict(),
            "engines": {},
        }
        for name, run in self.engines.items():
            out["engines"][name] = {
                "probabilities": {
                    f"{t:.17g}": {f"{n1},{n2}": v for (n1, n2), v in sorted(pmap.items())}
                    for t, pmap in run.probabilities.items()},
                "histories": {
                    f"{t:.17g}": {"none": h[0], "right_only": h[1],
                                  "left_only": h[2], "both": h[3]}
                    for t, h in run.histories.items()},
                "convergence": dict(run.convergence),
            }
        return out


def _oracle_histories(pmap: dict[tuple[int, int], float]) -> tuple[float, float, float, float]:
    none = pmap.get((0, 0), 0.0)
    right = sum(v for (n1, n2), v in pmap.items() if n1 >= 1 and n2 == 0)
    left = sum(v for (n1, n2), v in pmap.items() if n1 == 0 and n2 >= 1)
    both = sum(v for (n1, n2), v in pmap.items() if n1 >= 1 and n2 >= 1)
    return (none, right, left, both)


def _run_oracle(spec: ScenarioSpec, grid: SpatialGrid) -> tuple[EngineRun, dict[float, ch.ChannelState]]:
    num = spec.numerics
    t_max = max(spec.eval_times)
    config = ch.PropagatorConfig(dt=num.dt_oracle, n_max=num.n_max,
                                 top_shell_threshold=num.top_shell_threshold,
                                 potential_shape=num.potential_shape)
    states: dict[float, ch.ChannelState] = {}
    t0 = time.perf_counter()
    final, used_cfg = ch.evolve_with_escalation(
        spec.params, grid, config, t_max,
        snapshot_times=spec.eval_times,
        on_snapshot=lambda s: states.__setitem__(s.t, s))
    wall = time.perf_counter() - t0
    if final.t not in states:
        states[final.t] = final

    probabilities: dict[float, dict[tuple[int, int], float]] = {}
    histories: dict[float, tuple[float, float, float, float]] = {}
    eval_map: dict[float, float] = {}
    for want in spec.eval_times:
        actual = min(states, key=lambda s: abs(s - want))
        eval_map[want] = actual
        pmap = ch.channel_probabilities(states[actual])
        probabilities[want] = pmap
        histories[want] = _oracle_histories(pmap)
    convergence = {
        "dt": used_cfg.dt,
        "n_max": used_cfg.n_max,
        "escalated": used_cfg.n_max != num.n_max,
        "top_shell_norm": final.top_shell_norm(),
        "norm_drift": abs(final.norm() - 1.0),
    }
    run = EngineRun(engine="oracle", probabilities=probabilities,
                    histories=histories, convergence=convergence, wall_time=wall)
    return run, {want: states[actual] for want, actual in eval_map.items()}


def _run_pt(spec: ScenarioSpec, grid: SpatialGrid) -> tuple[EngineRun, dict[tuple[int, int], ComplexField]]:
    num = spec.numerics
    ff = ch.form_factor_pair(spec.params, grid, num.n_max, num.potential_shape)
    probabilities: dict[float, dict[tuple[int, int], float]] = {}
    histories: dict[float, tuple[float, float, float, float]] = {}
    fields: dict[tuple[int, int], ComplexField] = {}
    step = math.nan
    halving_change = 0.0
    halving_obs_change = 0.0
    converged = True
    t0 = time.perf_counter()
    for t_eval in spec.eval_times:
        run, ok = pt.converged_dyson_run(spec.params, t_eval, ff, grid, num.n_max,
                                         num.dt_duhamel, num.pt_rtol)
        hist = pt.histories_from_run(run, ok)
        pmap = dict(hist.single_map)
        pmap.update(hist.joint_map)
        probabilities[t_eval] = pmap
        histories[t_eval] = hist.as_tuple()
        step = hist.quadrature_step
        halving_change = max(halving_change, run.halving_rel_change)
        halving_obs_change = max(halving_obs_change, run.halving_obs_change)
        converged = converged and ok
        if t_eval == max(spec.eval_times):
            fields[(0, 0)] = ComplexField(grid, run.psi_free)
            for n in range(1, num.n_max + 1):
                fields[(n, 0)] = ComplexField(grid, run.b1[n])
                fields[(0, n)] = ComplexField(grid, run.b2[n])
            for n1 in range(1, num.n_max + 1):
                for n2 in range(1, num.n_max + 1):
                    fields[(n1, n2)] = ComplexField(grid, run.c12[n1, n2] + run.c21[n1, n2])
    wall = time.perf_counter() - t0
    engine_run = EngineRun(engine="pt", probabilities=probabilities, histories=histories,
                           convergence={"dt": step, "n_max": num.n_max,
                                        "converged": converged,
                                        "halving_rel_change": halving_change,
                                        "halving_rel_change_observables": halving_obs_change},
                           wall_time=wall)
    return engine_run, fields


def run_scenario(spec: ScenarioSpec, keep_oracle_states: bool = False) -> ExcitationReport:
    """Evaluate a scenario with the requested engine(s).

    Out-of-regime parameters run anyway; the attached RegimeReport carries
    the flag.  Engine failures propagate with the scenario context attached.
    """
    regime = check_regime(spec.params, spec.epsilon)
    grid = spec.grid()
    engines: dict[str, EngineRun] = {}
    oracle_states: dict[float, ch.ChannelState] = {}
    pt_fields: dict[tuple[int, int], ComplexField] = {}
    t0 = time.perf_counter()
    try:
        if spec.engine in ("pt", "both"):
            engines["pt"], pt_fields = _run_pt(spec, grid)
        if spec.engine in ("oracle", "both"):
            engines["oracle"], states = _run_oracle(spec, grid)
            if keep_oracle_states:
                oracle_states = states
    except Exception as exc:
        raise type(exc)(f"{exc} [scenario case={spec.case}, engine={spec.engine}]") from exc
    wall = time.perf_counter() - t0
    return ExcitationReport(spec=spec, regime=regime, engines=engines,
                            wall_time=wall, oracle_states=oracle_states,
                            pt_fields=pt_fields)


# ---------------------------------------------------------------------------
# scaling sweeps


@dataclass(frozen=True)
class ScalingFit:
    """Log-log power-law fit of a probability against the swept parameter."""

    parameter: str
    engine: str
    target: tuple[int, int]
    values: tuple[float, ...]
    probabilities: tuple[float, ...]
    slope: float
    slope_halfwidth: float
    residual_max: float

    def as_dict(self) -> dict:
        return {"parameter": self.parameter, "engine": self.engine,
                "target": list(self.target),
                "values": list(self.values), "probabilities": list(self.probabilities),
                "slope": self.slope, "slope_halfwidth": self.slope_halfwidth,
                "residual_max": self.residual_max}


def _fit_loglog(xs: Sequence[float], ps: Sequence[float], parameter: str,
                engine: str, target: tuple[int, int]) -> ScalingFit:
    lx = np.log10(np.asarray(xs))
    lp = np.log10(np.asarray(ps))
    coeffs, cov = np.polyfit(lx, lp, 1, cov=True)
    fitted = np.polyval(coeffs, lx)
    return ScalingFit(parameter=parameter, engine=engine, target=target,
                      values=tuple(float(x) for x in xs),
                      probabilities=tuple(float(p) for p in ps),
                      slope=float(coeffs[0]),
                      slope_halfwidth=2.0 * float(np.sqrt(cov[0, 0])),
                      residual_max=float(np.max(np.abs(lp - fitted))))


def sweep_lambda(spec: ScenarioSpec, lambda_values: Sequence[float],
                 target: tuple[int, int] | None = None) -> ScalingFit:
    """Sweep the coupling and fit log10 P(target) vs log10 lambda.

    Needs at least 4 values spanning at least one decade, all inside the
    validity regime.  The grid and form factors are shared across the sweep
    (the form factors do not depend on the coupling).
    """
    values = sorted(float(v) for v in lambda_values)
    if len(values) < 4:
        raise ValueError(f"need >= 4 sweep values, got {len(values)}")
    if values[0] <= 0:
        raise ValueError("sweep values must be positive")
    if values[-1] / values[0] < 10.0 * (1.0 - 1e-12):
        raise ValueError("sweep must span at least one decade")
    target = target or spec.targets[0]
    n1, n2 = target
    engine = "oracle" if spec.engine == "oracle" else "pt"
    for lam in values:
        rep = check_regime(replace(spec.params, lam=lam), spec.epsilon)
        if rep.verdict == "invalid":
            raise ValueError(f"sweep value lambda={lam} is outside the regime")

    grid = spec.grid()
    num = spec.numerics
    t_eval = max(spec.eval_times)
    ff = ch.form_factor_pair(spec.params, grid, num.n_max, num.potential_shape)
    probs: list[float] = []
    for lam in values:
        params = replace(spec.params, lam=lam)
        if engine == "pt":
            run, _ = pt.converged_dyson_run(params, t_eval, ff, grid, num.n_max,
                                            num.dt_duhamel, num.pt_rtol)
            p = (run.joint_probability(target) if n1 >= 1 and n2 >= 1
                 else run.first_order_probability(target))
        else:
            config = ch.PropagatorConfig(dt=num.dt_oracle, n_max=num.n_max,
                                         top_shell_threshold=num.top_shell_threshold,
                                         potential_shape=num.potential_shape)
            state = ch.initialize_channels(params, grid, num.n_max)
            final = ch.evolve(state, params, config, t_eval, form_factors=ff)
            p = ch.channel_probabilities(final)[target]
        if not p > 0.0:
            raise RuntimeError(
                f"non-positive probability {p!r} at lambda={lam}: numerical floor reached")
        probs.append(p)
    return _fit_loglog(values, probs, "lambda", engine, target)


# ---------------------------------------------------------------------------
# localization


@dataclass(frozen=True)
class LocalizationEntry:
    channel: tuple[int, int]
    t: float
    channel_probability: float
    side: str  # "right" (x > 0) or "left" (x < 0)
    mass_same_side: float | None
    defined: bool


@dataclass(frozen=True)
class LocalizationReport:
    t: float
    entries: tuple[LocalizationEntry, ...]

    def entry(self, channel: tuple[int, int]) -> LocalizationEntry:
        for e in self.entries:
            if e.channel == channel:
                return e
        raise KeyError(channel)


def localization_from_state(state: ch.ChannelState, params: ModelParams,
                            norm_floor: float = 1e-200) -> LocalizationReport:
    """Conditional position statistics of every singly-excited channel.

    For each channel (n, 0) / (0, n) with n >= 1 the conditional state
    f / ||f|| is formed (when the channel carries norm above the floor) and
    the Born mass on the excited oscillator's side of the origin reported.
    """
    entries: list[LocalizationEntry] = []
    grid = state.grid
    pmap = ch.channel_probabilities(state)
    for n in range(1, state.n_max + 1):
        for channel, center in (((n, 0), params.a1), ((0, n), params.a2)):
            p_ch = pmap[channel]
            side = "right" if center > 0 else "left"
            if p_ch <= norm_floor:
                entries.append(LocalizationEntry(channel=channel, t=state.t,
                                                 channel_probability=p_ch, side=side,
                                                 mass_same_side=None, defined=False))
                continue
            conditional = state.channel_field(*channel).normalized()
            interval = (0.0, grid.x_max) if center > 0 else (grid.x_min, 0.0)
            mass = born_probability(conditional, [interval])
            entries.append(LocalizationEntry(channel=channel, t=state.t,
                                             channel_probability=p_ch, side=side,
                                             mass_same_side=mass, defined=True))
    return LocalizationReport(t=state.t, entries=tuple(entries))


def localization_report(spec: ScenarioSpec, t_eval: float | None = None) -> LocalizationReport:
    """Run the oracle to t_eval (default 1.5 tau1) and summarize localization."""
    t_eval = t_eval if t_eval is not None else 1.5 * spec.params.tau1
    probe = replace(spec, engine="oracle", times=(t_eval,))
    report = run_scenario(probe, keep_oracle_states=True)
    return localization_from_state(report.oracle_states[t_eval], spec.params)


# ---------------------------------------------------------------------------
# acceptance defaults

ACCEPTANCE_EPSILON = 0.1
ACCEPTANCE_LAMBDA0 = 1e-3


def acceptance_numerics() -> NumericSettings:
    """The pinned acceptance-run settings: 2^14 grid points, n_max = 4."""
    return NumericSettings(n_points=2 ** 14, n_max=4, dt_oracle=0.1, dt_duhamel=0.2)


def acceptance_scenario(case: str, engine: str = "both") -> ScenarioSpec:
    """Default acceptance scenario: evaluation at 1.5 tau1 and 1.5 tau2."""
    params = default_params(case, epsilon=ACCEPTANCE_EPSILON, lambda0=ACCEPTANCE_LAMBDA0)
    return ScenarioSpec(case=case, params=params, epsilon=ACCEPTANCE_EPSILON,
                        engine=engine, targets=((1, 1),),
                        times=(1.5 * params.tau1, 1.5 * params.tau2),
                        numerics=acceptance_numerics())


# ---------------------------------------------------------------------------
# frozen thresholds


def fixtures_dir() -> Path:
    override = os.environ.get("MOTT_FIXTURES")
    if override:
        return Path(override)
    return Path(__file__).resolve().parent / "fixtures"


def load_thresholds(path: Path | None = None) -> dict[str, dict]:
    """Frozen acceptance thresholds {name: {value, oracle_run_id, date}}."""
    p = path or (fixtures_dir() / "thresholds.json")
    if not p.exists():
        raise FileNotFoundError(
            f"threshold fixture {p} not found; run scripts/freeze_thresholds.py "
            f"or point MOTT_FIXTURES at a directory containing thresholds.json")
    entries = json.loads(p.read_text())
    return {e["threshold_name"]: e for e in entries}


def threshold_value(name: str, path: Path | None = None) -> float:
    entry = load_thresholds(path).get(name)
    if entry is None:
        raise KeyError(f"threshold {name!r} missing from fixture file")
    return entry["value"]
