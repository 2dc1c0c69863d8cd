"""The numerical claims checked by ``sphere-qs verify``.

Each check returns a :class:`Check` whose ``key`` names the claim it tests,
so a failing line points straight at the statement being reproduced.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import flow_composition_residual, scaling_checks, simulate_measurement
from .fieldgen import random_polynomial_field, random_smooth_field
from .geometry import ScalarField, bracket_norm, build_icosphere, sample_field, uniform_norm
from .partitions import build_cap_partition, cap_area, cap_bump, duplicate_partition, \
    max_pairwise_bracket, scaling_experiment
from .quasistate import QuasiStateConfig, bracket_inequality_report, pi_functional, robustness_report, zeta, \
    zeta_bruteforce

BRACKET_X2_Y2 = 16.0 * math.pi / (3.0 * math.sqrt(3.0))
HALF = QuasiStateConfig(0.5)
TWO = QuasiStateConfig(2.0)


@dataclass(frozen=True)
class Check:
    key: str
    claim: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def as_row(self) -> dict:
        return {"key": self.key, "claim": self.claim, "passed": self.passed, "detail": self.detail,
                "seconds": round(self.seconds, 2)}


def _coordinate_fields(level: int):
    m = build_icosphere(level)
    return m, tuple(sample_field(m, lambda x, y, z, i=i: (x, y, z)[i] ** 2) for i in range(3))


def quasi_state_errors(level: int) -> dict:
    """Absolute errors of the worked example values at ``level``."""
    _, (x2, y2, z2) = _coordinate_fields(level)
    return {
        "zeta(x^2)": abs(zeta(x2)),
        "zeta(y^2)": abs(zeta(y2)),
        "zeta(z^2)": abs(zeta(z2)),
        "zeta(x^2+y^2)": abs(zeta(x2 + y2) - 1.0),
        "Pi(x^2,y^2)": abs(pi_functional(x2, y2) - 1.0),
    }


def bracket_error(level: int) -> float:
    """Relative error of ``||{x^2, y^2}||`` at ``level``."""
    _, (x2, y2, _) = _coordinate_fields(level)
    return abs(bracket_norm(x2, y2) / BRACKET_X2_Y2 - 1.0)


def check_quasi_state_values(level: int, seed: int) -> tuple[bool, str]:
    err = quasi_state_errors(level)
    tol = {k: 0.05 if k.startswith("Pi") else 0.02 for k in err}
    ok = all(err[k] <= tol[k] for k in err)
    return ok, ", ".join(f"|err {k}| = {v:.2e}" for k, v in err.items())


def check_bracket_value(level: int, seed: int) -> tuple[bool, str]:
    _, (x2, y2, _) = _coordinate_fields(level)
    val = bracket_norm(x2, y2)
    rel = abs(val / BRACKET_X2_Y2 - 1.0)
    return rel <= 0.02, f"||{{x^2,y^2}}|| = {val:.5f}, relative error {rel:.2e}"


def check_bracket_inequality(level: int, seed: int, n_pairs: int = 200) -> tuple[bool, str]:
    mesh = build_icosphere(level)
    rng = np.random.default_rng(seed)
    worst, violations = -math.inf, 0
    for _ in range(n_pairs):
        F = random_polynomial_field(mesh, rng)
        G = random_polynomial_field(mesh, rng)
        r = bracket_inequality_report(F, G, HALF, slack=0.05)
        violations += not r.satisfied
        worst = max(worst, r.pi - r.bound)
    return violations == 0, f"{violations} violations in {n_pairs} pairs, max(Pi - bound) = {worst:.3f}"


def check_robustness_curve(level: int, seed: int) -> tuple[bool, str]:
    _, (x2, y2, _) = _coordinate_fields(level)
    eps = np.round(np.arange(1, 10) * 0.05, 2)
    rep = robustness_report(x2, y2, TWO, eps)
    pi = rep.pi_value
    exact = all(math.isclose(rep.upsilon_curve[e], (pi - 2 * e) ** 2 / 4, rel_tol=1e-8) for e in eps)
    ref = np.array([(1 - 2 * e) ** 2 / 4 for e in eps])
    got = np.array([rep.upsilon_curve[e] for e in eps])
    rel = float(np.max(np.abs(got / ref - 1)))
    ok = exact and rel <= 0.10 and abs(pi - 1) <= 0.05 and rep.eps_max_lower == pi / 2
    return ok, f"Pi = {pi:.5f}, max relative deviation from (1-2e)^2/4 = {rel:.2e}"


def check_median_oracle(level: int, seed: int, n_fields: int = 50) -> tuple[bool, str]:
    mesh = build_icosphere(level)
    rng = np.random.default_rng(seed)
    diffs = [abs(zeta(F) - zeta_bruteforce(F, 512))
             for F in (random_smooth_field(mesh, rng) for _ in range(n_fields))]
    return max(diffs) <= 1e-3, f"max |zeta - zeta_bruteforce| = {max(diffs):.2e} over {n_fields} fields"


def check_axioms(level: int, seed: int, n_cases: int = 200) -> tuple[bool, str]:
    mesh = build_icosphere(level)
    rng = np.random.default_rng(seed)
    bad = {"linearity": 0, "monotone": 0, "lipschitz": 0, "vanishing": 0, "composition": 0}
    for _ in range(n_cases):
        F = random_smooth_field(mesh, rng)
        zF = zeta(F)
        a = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 3.0)
        b = rng.uniform(-3.0, 3.0)
        bad["linearity"] += abs(zeta(a * F + b) - (a * zF + b)) > 1e-9
        bump = ScalarField(mesh, np.abs(random_smooth_field(mesh, rng).values))
        bad["monotone"] += zF > zeta(F + rng.uniform(0, 1) * bump) + 1e-9
        G = F + 0.3 * random_smooth_field(mesh, rng)
        bad["lipschitz"] += abs(zF - zeta(G)) > uniform_norm(F - G) + 1e-9
        c = rng.normal(size=3)
        r = rng.uniform(0.2, math.acos(1 - 2 * 0.45))
        amp = rng.normal() * 3
        H = ScalarField(mesh, amp * cap_bump(mesh.vertices, c, r) * (1 + F.values ** 2))
        bad["vanishing"] += abs(zeta(H)) > 0.02
        u = (lambda t: t ** 3 + t) if rng.random() < 0.5 else np.exp
        bad["composition"] += abs(zeta(F.map(u)) - u(zF)) > 0.02
    ok = not any(bad.values())
    return ok, ", ".join(f"{k}: {v}/{n_cases} failures" for k, v in bad.items())


def check_flow_composition(level: int, seed: int) -> tuple[bool, str]:
    _, (x2, y2, _) = _coordinate_fields(level)
    b = bracket_norm(x2, y2)
    worst = -math.inf
    ok = True
    for t in np.round(np.arange(1, 11) * 0.1, 1):
        r = flow_composition_residual(x2, y2, float(t), bracket=b)
        ok &= r.satisfied
        worst = max(worst, r.residual / r.bound)
    return ok, f"max residual / bound = {worst:.3f} for t in 0.1..1.0"


def check_measurement(level: int, seed: int) -> tuple[bool, str]:
    _, (x2, y2, _) = _coordinate_fields(level)
    sample = min(3, level)
    pi = pi_functional(x2, y2)
    zero = simulate_measurement(x2, y2, 50, 0.0, sample_level=sample, pi=pi)
    ok = zero.delta == 0.0
    parts = [f"eps=0: Delta={zero.delta}"]
    worst_sum = 0.0
    for T, e in [(50, 1.0), (200, 1.0), (50, 0.5)]:
        r = simulate_measurement(x2, y2, T, e, sample_level=sample, pi=pi)
        ok &= r.satisfied
        s = np.max(np.abs(r.F1_out + r.F2_out - (x2 + y2).values[r.sample]))
        worst_sum = max(worst_sum, float(s))
        parts.append(f"({T},{e:g}): Delta={r.delta:.4f} bound={r.bound:.4f}")
    ok &= worst_sum <= 1e-4
    sc = scaling_checks(x2, y2, 10, 0.3, 2.0, sample_level=sample)
    ok &= sc.time_rescaling <= 1e-4 and sc.amplitude_rescaling <= 1e-4
    parts.append(f"|F1'+F2'-F1-F2| = {worst_sum:.1e}")
    parts.append(f"scaling residuals {sc.time_rescaling:.1e}, {sc.amplitude_rescaling:.1e}")
    return bool(ok), "; ".join(parts)


def check_partitions(level: int, seed: int) -> tuple[bool, str]:
    mesh = build_icosphere(level)
    ms = [1, 2, 4, 8]
    exp = scaling_experiment(mesh, [8, 16, 32], ms, HALF)
    ok = exp.all_satisfied and all(abs(s + 2) <= 0.15 for s in exp.slopes.values())
    base = build_cap_partition(mesh, 8, 0.3)
    a = max_pairwise_bracket(base)
    law = max(abs(max_pairwise_bracket(duplicate_partition(base, m)) * m * m / a - 1) for m in ms)
    ok &= law < 1e-10
    slopes = ", ".join(f"N={N}: {s:.4f}" for N, s in exp.slopes.items())
    return bool(ok), f"rows satisfied: {exp.all_satisfied}; slopes {slopes}; m^-2 law error {law:.1e}"


def check_convergence(level: int, seed: int) -> tuple[bool, str]:
    if level < 1:
        return False, "needs level >= 1"
    coarse, fine = quasi_state_errors(level - 1), quasi_state_errors(level)
    coarse["bracket"], fine["bracket"] = bracket_error(level - 1), bracket_error(level)
    bad = [k for k in fine if fine[k] > coarse[k]]
    return not bad, f"errors non-increasing from level {level - 1} to {level}" if not bad else f"increased: {bad}"


CHECKS: list[tuple[str, str, Callable]] = [
    ("quasi-state-values", "zeta(x^2)=0, zeta(x^2+y^2)=1, Pi(x^2,y^2)=1", check_quasi_state_values),
    ("bracket-value", "||{x^2,y^2}|| = 16 pi / (3 sqrt 3)", check_bracket_value),
    ("bracket-inequality", "Pi(F,G) <= sqrt(2C ||{F,G}||)", check_bracket_inequality),
    ("robustness-curve", "Upsilon_{F,G}(eps) >= (1-2eps)^2/4 for C=2", check_robustness_curve),
    ("median-oracle", "contour-tree median = level-sweep median", check_median_oracle),
    ("quasi-state-axioms", "normalisation, monotonicity, quasi-linearity, vanishing", check_axioms),
    ("flow-composition", "||G o f_t - G|| <= t ||{F,G}||", check_flow_composition),
    ("measurement-bound", "Delta >= Pi/2 - sqrt(C/(T eps)) sqrt(min ||F_i - <F_i>||)", check_measurement),
    ("partition-bound", "max ||{rho_i,rho_j}|| >= proof constant, m^-2 duplication", check_partitions),
    ("convergence", "errors shrink under refinement", check_convergence),
]


def run_checks(level: int = 5, seed: int = 0, only=None, progress=None) -> list[Check]:
    """Run the selected checks (all by default) and return their results in order."""
    out = []
    for key, claim, fn in CHECKS:
        if only and key not in only:
            continue
        t0 = time.perf_counter()
        try:
            passed, detail = fn(level, seed)
        except Exception as exc:  # a crash is reported as a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        res = Check(key, claim, bool(passed), detail, time.perf_counter() - t0)
        out.append(res)
        if progress is not None:
            progress(res)
    return out
