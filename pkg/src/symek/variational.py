"""Ekeland-type procedures with numerical certificates.

* :func:`ekeland_point` runs the constructive Ekeland iteration
  ``v_{k+1} ~ argmin_w f(w) + sigma*||w - v_k||_X``.
* :func:`symmetric_ekeland` first moves the starting point towards its
  symmetrization by polarizations, then runs the Ekeland iteration and checks
  the four conclusions: asymmetry ``<= C*rho``, displacement
  ``<= rho + ||T_rho u - u||``, descent, and the Ekeland inequality.
* :func:`sps_sequence` repeats this with ``rho = sigma = eps_j`` to produce a
  symmetric Palais-Smale sequence, and :func:`extract_minimizer` reads off
  its limit.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import MethodUnavailable, NotConverged, NotInCone, NotMonotone, NotProper, StageError, SymekError
from .rearrangement import PolarizationSchedule, approx_symmetrize, replay, symmetrize
from .spaces import (
    THETA_LIPSCHITZ,
    FunctionElement,
    dual_norm_X,
    embedding_constant,
    in_cone,
    norm_V,
    norm_X,
    riesz_representative,
    theta,
    xnorm,
)

log = logging.getLogger(__name__)

CHAIN_TOL = 1e-10
MIN_PROBE_RADIUS = 1e-6


def symmetry_constant(model):
    """``K (C_theta + 1) + 1``: asymmetry of the Ekeland point is at most this times rho."""
    return embedding_constant(model) * (THETA_LIPSCHITZ + 1.0) + 1.0


@dataclass(frozen=True)
class EkelandParams:
    rho: float
    sigma: float
    inner_tol_initial: float = 1e-10
    inner_budget: int = 5000
    max_outer_iters: int = 50
    cert_samples: int = 1000
    cert_seed: int = 0
    cert_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rho", "sigma", "inner_tol_initial", "cert_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inner_budget < 1 or self.max_outer_iters < 1:
            raise ValueError("inner_budget and max_outer_iters must be >= 1")
        if self.cert_samples < 0:
            raise ValueError("cert_samples must be >= 0")

    def to_dict(self):
        return dict(self.__dict__)


# -- Ekeland inequality certificate -----------------------------------------


@dataclass
class InequalityCheck:
    residual: float
    count: int
    min_radius: float
    witness: Optional[dict] = None


def certify_ekeland_inequality(f, v: FunctionElement, sigma, samples, seed, extra=()):
    """Sampled check of ``f(w) >= f(v) - sigma*||w - v||_X``.

    Probes lie on X-spheres around v with radii decreasing geometrically from
    ``max(||v||_X, 1)`` to ``1e-6``; each probe is also projected onto the
    domain of f when that changes it.  ``extra`` adds fixed probe points.
    Returns the worst positive part of ``f(v) - sigma*||w - v|| - f(w)``.
    """
    model = v.model
    fv = f(v)
    x = v.values
    worst, witness, count = 0.0, None, 0

    def probe(w):
        nonlocal worst, witness, count
        count += 1
        fw = f.value(w)
        if math.isinf(fw):
            return
        res = fv - sigma * xnorm(model, w - x) - fw
        if res > worst:
            worst = res
            witness = {"w": w.tolist(), "f_w": fw, "residual": res}

    for w in extra:
        probe(np.asarray(w.values if isinstance(w, FunctionElement) else w, dtype=float))
    if samples > 0:
        rng = np.random.default_rng(seed)
        radii = np.geomspace(max(norm_X(v), 1.0), MIN_PROBE_RADIUS, 20)
        per = np.full(len(radii), samples // len(radii))
        per[: samples % len(radii)] += 1
        for r, k in zip(radii, per):
            for _ in range(k):
                d = rng.normal(size=model.n)
                w = x + r * d / xnorm(model, d)
                probe(w)
                wp = f.project_domain(w)
                if not np.array_equal(wp, w):
                    probe(wp)
    return InequalityCheck(worst, count, MIN_PROBE_RADIUS, witness)


# -- constructive Ekeland ---------------------------------------------------


@dataclass
class EkelandDiagnostics:
    f_u0: float
    f_v: float
    moves: int = 0
    outer_iterations: int = 0
    path_length: float = 0.0
    displacement: float = 0.0
    telescoped_bound: float = 0.0
    budget_exhausted: bool = False
    premise_verified: Optional[bool] = None
    d_residual: Optional[float] = None
    sampled_w_count: int = 0
    d_witness: Optional[dict] = None
    warnings: list = field(default_factory=list)

    @property
    def displacement_ok(self):
        return self.displacement <= self.telescoped_bound + CHAIN_TOL

    def to_dict(self):
        d = dict(self.__dict__)
        d["displacement_ok"] = self.displacement_ok
        return d


def ekeland_point(f, u0: FunctionElement, params: EkelandParams):
    """Constructive Ekeland iteration from ``u0``.

    At step k the perturbed problem ``min_w f(w) + sigma*||w - v_k||_X`` is
    solved to tolerance ``delta_k = inner_tol_initial * 2**-k``.  The inner
    solution ``w`` never does worse than the center, so it is always taken;
    the loop stops once the decrease of the perturbed objective falls below
    ``delta_k``.  The last inner solution is returned, since an exact
    perturbed minimizer satisfies the Ekeland inequality whatever the center.

    Returns ``(v, EkelandDiagnostics)``.

    Raises
    ------
    NotProper
        If ``f(u0)`` is infinite.
    """
    sigma = params.sigma
    fu0 = f(u0)
    if math.isinf(fu0):
        raise NotProper("f(u0) is +inf")
    diag = EkelandDiagnostics(f_u0=fu0, f_v=fu0)
    lb = f.lower_bound()
    if math.isfinite(lb):
        diag.premise_verified = fu0 < lb + params.rho * sigma
        if not diag.premise_verified:
            diag.warnings.append("f(u0) < lower_bound + rho*sigma not verified")
    else:
        diag.warnings.append("no finite lower bound; premise unverifiable")

    v, fv = u0, fu0
    for k in range(params.max_outer_iters):
        delta = params.inner_tol_initial * 2.0**-k
        w = f.inner_min(v, sigma, delta, params.inner_budget)
        fw = f(w)
        step = norm_X(w - v)
        progress = fv - (fw + sigma * step)
        diag.outer_iterations = k + 1
        if progress < 0:
            # the inner solver did worse than staying put
            break
        if step > 0:
            diag.moves += 1
            diag.path_length += step
            v, fv = w, fw
        if progress < delta:
            break
    else:
        diag.budget_exhausted = True
        diag.warnings.append("max_outer_iters reached while still progressing")

    diag.f_v = fv
    diag.displacement = norm_X(v - u0)
    diag.telescoped_bound = (fu0 - fv) / sigma
    if params.cert_samples > 0:
        chk = certify_ekeland_inequality(f, v, sigma, params.cert_samples, params.cert_seed)
        diag.d_residual = chk.residual
        diag.sampled_w_count = chk.count
        diag.d_witness = chk.witness
    return v, diag


def exhaustive_ekeland_check(f, v: FunctionElement, sigma, points):
    """Brute-force ``min_w f(w) + sigma*||w - v||_X - f(v)`` over ``points``.

    Nonnegative means the Ekeland inequality holds at every point, with no
    tolerance.
    """
    fv = f(v)
    gaps = [f.value(p) + sigma * xnorm(v.model, p - v.values) - fv for p in points]
    i = int(np.argmin(gaps))
    return float(gaps[i]), np.asarray(points[i])


# -- symmetric Ekeland ------------------------------------------------------


@dataclass
class EkelandCertificate:
    v: FunctionElement
    f_v: float
    asymmetry: float
    C_used: float
    displacement: float
    trho_displacement: float
    descent_ok: bool
    d_residual: float
    sampled_w_count: int
    polarizer_trace: list
    rho: float
    sigma: float
    f_u: float
    f_tilde: float
    cert_tol: float
    ekeland: EkelandDiagnostics

    @property
    def conclusions(self):
        return {
            "a": self.asymmetry <= self.C_used * self.rho,
            "b": self.displacement <= self.rho + self.trho_displacement + CHAIN_TOL,
            "c": self.descent_ok,
            "d": self.d_residual <= self.cert_tol,
        }

    @property
    def passed(self):
        return all(self.conclusions.values())

    def to_dict(self):
        return {
            "schema": "symek.ekeland-certificate/1",
            "v": self.v.to_dict(),
            "f_v": self.f_v,
            "f_u": self.f_u,
            "f_tilde": self.f_tilde,
            "rho": self.rho,
            "sigma": self.sigma,
            "asymmetry": self.asymmetry,
            "C_used": self.C_used,
            "displacement": self.displacement,
            "trho_displacement": self.trho_displacement,
            "descent_ok": self.descent_ok,
            "d_residual": self.d_residual,
            "cert_tol": self.cert_tol,
            "sampled_w_count": self.sampled_w_count,
            "polarizer_trace": [p.to_dict() for p in self.polarizer_trace],
            "conclusions": self.conclusions,
            "passed": self.passed,
            "ekeland": self.ekeland.to_dict(),
        }


def symmetric_ekeland(f, u: FunctionElement, params: EkelandParams, schedule=None) -> EkelandCertificate:
    """Almost-symmetric, almost-critical point near ``u``.

    ``u`` is polarized towards ``u*`` until within ``rho`` (V-norm), with
    ``f`` checked not to increase at any polarization; the Ekeland iteration
    then starts from that point.  The returned certificate records the
    measured quantities for each conclusion; it does not raise when one
    fails.

    Raises
    ------
    NotInCone
        If ``u`` has a negative entry.
    NotMonotone
        If f does not claim polarization monotonicity or increases along the
        polarization sequence by more than 1e-10.
    """
    if not in_cone(u):
        raise NotInCone("symmetric_ekeland needs u in S")
    if not f.claims_polarization_monotone:
        raise NotMonotone(f"{f.name} does not claim polarization monotonicity")
    schedule = schedule or PolarizationSchedule.sweep()
    fu = f(u)
    if math.isinf(fu):
        raise NotProper("f(u) is +inf")

    u_tilde, trace = approx_symmetrize(u, params.rho, schedule)
    x, fx = u, fu
    for step, pol in enumerate(trace):
        x = replay(x, [pol])
        fn = f(x)
        if fn > fx + 1e-10:
            raise NotMonotone(f"f increased by {fn - fx:.3e} at polarization {step} ({pol.to_dict()})")
        fx = fn
    f_tilde = fx

    v, diag = ekeland_point(f, u_tilde, params)
    fv = diag.f_v
    return EkelandCertificate(
        v=v,
        f_v=fv,
        asymmetry=norm_V(v - symmetrize(v)),
        C_used=symmetry_constant(u.model),
        displacement=norm_X(v - u),
        trho_displacement=norm_X(u_tilde - u),
        descent_ok=fv <= f_tilde + 1e-10 and f_tilde <= fu + 1e-10,
        d_residual=diag.d_residual if diag.d_residual is not None else math.inf,
        sampled_w_count=diag.sampled_w_count,
        polarizer_trace=trace,
        rho=params.rho,
        sigma=params.sigma,
        f_u=fu,
        f_tilde=f_tilde,
        cert_tol=params.cert_tol,
        ekeland=diag,
    )


# -- slopes -----------------------------------------------------------------


class SlopeMethod(str, enum.Enum):
    EKELAND_INEQUALITY = "ekeland_inequality"
    GRADIENT_NORM = "gradient_norm"
    SAMPLED_RATIO = "sampled_ratio"


@dataclass
class SlopeCertificate:
    at: FunctionElement
    upper_bound: float
    method: SlopeMethod
    detail: dict

    @property
    def is_lower_estimate(self):
        return self.method is SlopeMethod.SAMPLED_RATIO

    def to_dict(self):
        return {
            "upper_bound": self.upper_bound,
            "method": self.method.value,
            "is_lower_estimate": self.is_lower_estimate,
            "detail": self.detail,
        }


def _fd_gradient(f, x, step=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f.value(x + e) - f.value(x - e)) / (2 * step)
    return g


def slope_upper_bound(f, at: FunctionElement, method, params=None, certificate=None) -> SlopeCertificate:
    """Estimate of the strong slope ``|grad f|(at)``.

    ``GRADIENT_NORM`` is exact for C1 functionals (dual X-norm of the
    derivative).  ``EKELAND_INEQUALITY`` bounds the slope by sigma plus the
    sampled inequality residual divided by the smallest probe radius; pass an
    :class:`EkelandCertificate` to reuse its samples, else ``params`` (an
    :class:`EkelandParams`) drives fresh sampling.  ``SAMPLED_RATIO`` is a
    lower estimate, the largest ``(f(at) - f(w))+ / ||at - w||_X`` over random
    and finite-difference steepest directions at radii 1e-3..1e-6.
    """
    method = SlopeMethod(method)
    fa = f(at)
    if math.isinf(fa):
        raise NotProper("f(at) is +inf")
    model = at.model
    if method is SlopeMethod.GRADIENT_NORM:
        g = f.gradient(at)
        if g is None:
            raise MethodUnavailable(f"{f.name} is not differentiable at this point")
        return SlopeCertificate(at, dual_norm_X(model, g.values), method, {"norm": "X-dual"})

    if method is SlopeMethod.EKELAND_INEQUALITY:
        if certificate is not None:
            sigma, res, count = certificate.sigma, certificate.d_residual, certificate.sampled_w_count
        else:
            if params is None:
                raise ValueError("EKELAND_INEQUALITY needs params or a certificate")
            sigma = params.sigma
            chk = certify_ekeland_inequality(f, at, sigma, params.cert_samples, params.cert_seed)
            res, count = chk.residual, chk.count
        bound = sigma + res / MIN_PROBE_RADIUS
        detail = {"sigma": sigma, "d_residual": res, "min_radius": MIN_PROBE_RADIUS, "samples": count}
        return SlopeCertificate(at, bound, method, detail)

    samples = 200 if params is None else max(params.cert_samples // 5, 1)
    seed = 0 if params is None else params.cert_seed
    rng = np.random.default_rng(seed)
    x = at.values
    dirs = [rng.normal(size=model.n) for _ in range(samples)]
    g_fd = _fd_gradient(f, x)
    if np.any(g_fd != 0) and np.all(np.isfinite(g_fd)):
        dirs.append(-riesz_representative(model, g_fd))
    radii = np.geomspace(1e-3, 1e-6, 4)
    best = 0.0
    for d in dirs:
        d = d / xnorm(model, d)
        for r in radii:
            fw = f.value(x + r * d)
            if math.isfinite(fw):
                best = max(best, (fa - fw) / r)
    detail = {"directions": len(dirs), "radii": radii.tolist(), "lower_estimate": True}
    return SlopeCertificate(at, best, method, detail)


# -- symmetric Palais-Smale sequences ---------------------------------------


@dataclass
class SPSEntry:
    j: int
    eps: float
    v: FunctionElement
    f_v: float
    slope_bound: float
    slope_method: str
    asymmetry: float
    gradient_norm: Optional[float]
    m_est: float
    m_source: str
    premise_ok: bool
    pre_minimized: bool
    certificate_passed: bool
    conclusions: dict

    def to_dict(self):
        d = dict(self.__dict__)
        d["v"] = self.v.to_dict()
        return d


@dataclass
class SPSTrace:
    entries: list
    C_used: float
    limit: Optional[FunctionElement] = None
    limit_value: Optional[float] = None
    limit_symmetric_residual: Optional[float] = None

    def invariants(self):
        """Per-trace checks: asymmetry ratio, premise, descent, certificates."""
        es = self.entries
        return {
            "asymmetry_le_C_eps": all(e.asymmetry <= self.C_used * e.eps for e in es),
            "premise": all(e.premise_ok for e in es),
            "f_nonincreasing": all(b.f_v <= a.f_v + 1e-10 for a, b in zip(es, es[1:])),
            "certificates": all(e.certificate_passed for e in es),
        }

    @property
    def passed(self):
        return all(self.invariants().values())

    def to_dict(self):
        return {
            "schema": "symek.sps-trace/1",
            "C_used": self.C_used,
            "entries": [e.to_dict() for e in self.entries],
            "limit": None if self.limit is None else self.limit.to_dict(),
            "limit_value": self.limit_value,
            "limit_symmetric_residual": self.limit_symmetric_residual,
            "invariants": self.invariants(),
            "passed": self.passed,
        }

    CSV_FIELDS = ("j", "eps", "f", "slope_bound", "asymmetry")

    def csv_rows(self):
        for e in self.entries:
            yield (e.j, e.eps, e.f_v, e.slope_bound, e.asymmetry)


def _descend(f, u, sigma, params):
    """Ekeland descent from u with a small sigma, mapped back to the cone."""
    p = replace(params, sigma=sigma, rho=params.rho, cert_samples=0)
    w, _ = ekeland_point(f, u, p)
    return f.cone_reduce(w)


def sps_sequence(
    f,
    u_init: FunctionElement,
    eps_schedule,
    params: Optional[EkelandParams] = None,
    schedule: Optional[PolarizationSchedule] = None,
    gradient_check=False,
    rho_factor=1.0,
    sigma_factor=1.0,
) -> SPSTrace:
    """Symmetric Palais-Smale sequence along a decreasing ``eps`` schedule.

    Stage j maps the current point into the cone, descends further if
    ``f < M_est + eps_j**2`` does not yet hold, and runs
    :func:`symmetric_ekeland` with ``rho = sigma = eps_j`` (scaled by the
    factors).  The stage slope bound is the gradient norm when
    ``gradient_check`` is set and f is differentiable there, otherwise the
    Ekeland-inequality bound.  ``M_est`` is ``f.known_min_value`` when
    available, otherwise the best value seen, seeded by a descent from
    ``u_init`` with ``sigma = eps_last**2 / 4``.  Stages warm-start from the
    previous point.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule or any(e <= 0 for e in eps_schedule):
        raise ValueError("eps schedule must be nonempty and positive")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if not f.claims_polarization_monotone:
        raise NotMonotone(f"{f.name} does not claim polarization monotonicity")
    params = params or EkelandParams(rho=eps_schedule[0], sigma=eps_schedule[0])
    model = u_init.model
    trace = SPSTrace(entries=[], C_used=symmetry_constant(model))

    current = f.cone_reduce(u_init)
    if f.known_min_value is not None:
        m_known, source = f.known_min_value, "known"
        best = math.inf
    else:
        m_known, source = None, "observed"
        ref = _descend(f, current, eps_schedule[-1] ** 2 / 4, params)
        best = f(ref)
        if best < f(current):
            current = ref

    for j, eps in enumerate(eps_schedule, start=1):
        try:
            u_hat = f.cone_reduce(current)
            f_hat = f(u_hat)
            best = min(best, f_hat)
            m_est = m_known if m_known is not None else best
            pre = False
            sigma_pre = eps**2 / 4
            for _ in range(6):
                if f_hat < m_est + eps**2:
                    break
                u_hat = _descend(f, u_hat, sigma_pre, params)
                f_hat = f(u_hat)
                best = min(best, f_hat)
                m_est = m_known if m_known is not None else best
                pre = True
                sigma_pre /= 2
            premise_ok = f_hat < m_est + eps**2
            stage = replace(params, rho=rho_factor * eps, sigma=sigma_factor * eps, cert_seed=params.cert_seed + j)
            cert = symmetric_ekeland(f, u_hat, stage, schedule)
        except SymekError as exc:
            raise StageError(j, exc) from exc
        slope = slope_upper_bound(f, cert.v, SlopeMethod.EKELAND_INEQUALITY, certificate=cert)
        gnorm = None
        if gradient_check:
            g = f.gradient(cert.v)
            gnorm = None if g is None else dual_norm_X(model, g.values)
        if gnorm is not None:
            slope = SlopeCertificate(cert.v, gnorm, SlopeMethod.GRADIENT_NORM, {"norm": "X-dual"})
        trace.entries.append(
            SPSEntry(
                j=j,
                eps=eps,
                v=cert.v,
                f_v=cert.f_v,
                slope_bound=slope.upper_bound,
                slope_method=slope.method.value,
                asymmetry=cert.asymmetry,
                gradient_norm=gnorm,
                m_est=m_est,
                m_source=source,
                premise_ok=premise_ok,
                pre_minimized=pre,
                certificate_passed=cert.passed,
                conclusions=cert.conclusions,
            )
        )
        best = min(best, cert.f_v)
        current = cert.v
        log.info("stage %d eps=%g f=%.6g asym=%.3g", j, eps, cert.f_v, cert.asymmetry)
    return trace


def extract_minimizer(trace: SPSTrace, conv_tol):
    """Limit point of an SPS trace when its last stages are Cauchy in X.

    Consecutive X-distances over the last three stages must not exceed
    ``conv_tol``.  The limit is the last point; its asymmetry is compared
    with ``(C_theta+1) K ||v_J - z||_X + ||v_J - v_J*||_V`` at the
    second-to-last stage J, and it is flagged symmetric when the asymmetry is
    at most ``conv_tol * (1 + (C_theta+1) K)``.

    Returns ``(z, report)``; also stores the limit on the trace.

    Raises
    ------
    NotConverged
        If the Cauchy test fails.
    """
    if not trace.entries:
        raise ValueError("empty trace")
    vs = [e.v for e in trace.entries]
    tail = vs[-3:]
    dists = [norm_X(b - a) for a, b in zip(tail, tail[1:])]
    if any(d > conv_tol for d in dists):
        raise NotConverged(
            f"consecutive distances {dists} exceed conv_tol={conv_tol}",
            {"distances": dists, "conv_tol": conv_tol},
        )
    z = vs[-1]
    model = z.model
    k = embedding_constant(model) * (THETA_LIPSCHITZ + 1.0)
    z_asym = norm_V(z - symmetrize(z))
    prev = vs[-2] if len(vs) > 1 else z
    chain = k * norm_X(prev - z) + norm_V(prev - symmetrize(prev))
    f_z = trace.entries[-1].f_v
    report = {
        "distances": dists,
        "f_z": f_z,
        "min_observed": min(e.f_v for e in trace.entries),
        "asymmetry": z_asym,
        "chain_bound": chain,
        "chain_ok": z_asym <= chain + 1e-12,
        "symmetric_limit": z_asym <= conv_tol * (1.0 + k),
    }
    trace.limit = z
    trace.limit_value = f_z
    trace.limit_symmetric_residual = z_asym
    return z, report


# -- starting points --------------------------------------------------------


def near_minimum(f, model, params=None):
    """Best of descents from a few symmetric starts (or the known minimizer)."""
    if f.known_minimizer is not None:
        return f.known_minimizer
    from .functionals import default_profile

    params = params or EkelandParams(rho=1.0, sigma=1.0)
    starts = [FunctionElement(model, np.ones(model.n)), default_profile(model)]
    cands = [_descend(f, FunctionElement(model, f.project_domain(s.values)), 1e-8, params) for s in starts]
    return min(cands, key=f)


def premise_start(f, model, rho, sigma, seed, reference=None, fraction=0.5):
    """Random point of S with ``f(u) < f(reference) + fraction*rho*sigma``.

    ``reference`` defaults to :func:`near_minimum`.  The point is
    ``theta(reference + s*eta)`` for a random V-unit direction eta, with a random
    initial s halved until the value condition holds.
    """
    rng = np.random.default_rng(seed)
    ref = reference if reference is not None else near_minimum(f, model)
    level = f.known_min_value if f.known_min_value is not None else f(ref)
    eta = rng.normal(size=model.n)
    eta /= norm_V(FunctionElement(model, eta))
    s = math.sqrt(rho * sigma) * rng.uniform(0.25, 1.0)
    for _ in range(60):
        u = theta(FunctionElement(model, f.project_domain(ref.values + s * eta)))
        if f(u) < level + fraction * rho * sigma:
            return u
        s /= 2
    return ref
