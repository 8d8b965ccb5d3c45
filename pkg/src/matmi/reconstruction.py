"""The outer fixed-point reconstruction loop.

Each iteration alternates (i) a Neumann field solve for the current
iterate, (ii) an inflow-boundary classification, (iii) a transport solve
for the updated parameter, and (iv) a projection onto the admissible
box with the boundary trace reset to the known target values.
"""

import time

import numpy as np

from .anisotropy import builtin
from .fields import (NodalField, cell_to_nodal, interpolate_nodal,
                     l2_norm_nodal, mass_matrix)
from .functional import load_functional_data, synthesize
from .mesh import build_unit_cube, build_unit_square
from .neumann import SolverError, solve_field
from .transport import (PicardOptions, TransportError, TransportProblem,
                        _h1_matrix, solve_linear_dg, solve_nonlinear,
                        solve_nonlinear_dg, solve_nonlinear_ls)

__all__ = [
    "AdmissibleSet",
    "ReconTrace",
    "ReconConfig",
    "ConfigError",
    "ReconError",
    "project",
    "reconstruct",
]

SOLVERS = ("dg0", "picard", "lsq")


class ConfigError(ValueError):
    """Invalid reconstruction configuration."""


class ReconError(RuntimeError):
    """Reconstruction failure; carries the partial trace."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class AdmissibleSet:
    """Box of admissible parameter fields around a background gamma0.

    The box is [1/lam, lam] unless an explicit (lo, hi) override is
    given (used to keep iterates inside a family's parameter range).
    grad_const and norm_bound describe the smoothness part of the set;
    they are diagnostics only and never enforced by the projection.
    """

    def __init__(self, gamma0, lam, grad_const=None, norm_bound=None,
                 box=None):
        lam = float(lam)
        if lam < 1.0:
            raise ValueError("box bound lam must be >= 1")
        if box is None:
            box = (1.0 / lam, lam)
        lo, hi = float(box[0]), float(box[1])
        if lo >= hi:
            raise ValueError("empty admissible box [%g, %g]" % (lo, hi))
        if gamma0.values.min() < lo or gamma0.values.max() > hi:
            raise ValueError("background gamma0 leaves the admissible box "
                             "[%g, %g]" % (lo, hi))
        self.gamma0 = gamma0
        self.lam = lam
        self.grad_const = grad_const
        self.norm_bound = norm_bound
        self.box = (lo, hi)

    def constraint_values(self, gamma, M=None):
        """Measured values of the (unenforced) smoothness constraints:
        (||grad alpha|| / ||alpha||, ||alpha||) for alpha = gamma - gamma0."""
        mesh = gamma.mesh
        alpha = NodalField(mesh, gamma.values - self.gamma0.values)
        anorm = l2_norm_nodal(mesh, alpha.values, M)
        grads = alpha.cell_gradients()
        gnorm = float(np.sqrt(np.dot(
            mesh.cell_volumes, (grads * grads).sum(axis=1))))
        ratio = gnorm / anorm if anorm > 0 else 0.0
        return ratio, anorm


def project(gamma_half, admissible, boundary_values):
    """Clamp into the admissible box and reset the boundary trace.

    boundary_values: callable of the boundary vertex coordinates (or an
    array over the mesh's boundary vertex indices).  The gradient and
    norm constraints of the admissible set are not enforced here.
    """
    mesh = gamma_half.mesh
    lo, hi = admissible.box
    vals = np.clip(gamma_half.values, lo, hi)
    bidx = mesh.boundary_vertex_indices()
    if callable(boundary_values):
        bvals = np.asarray(boundary_values(mesh.vertices[bidx]),
                           dtype=float).ravel()
    else:
        bvals = np.asarray(boundary_values, dtype=float).ravel()
    if bvals.shape != bidx.shape:
        raise ValueError("expected %d boundary values, got %d"
                         % (bidx.size, bvals.size))
    vals[bidx] = np.clip(bvals, lo, hi)
    return NodalField(mesh, vals)


class ReconTrace:
    """Per-iteration record of a reconstruction run."""

    def __init__(self):
        self.iterates = []            # gamma_k after projection
        self.error_l2 = []            # relative L2 error vs interpolated
                                      # target (nan when unknown)
        self.data_residual = []       # ||F(gamma_k) - F(target)||_L2
        self.seconds = []
        self.picard_changes = []      # inner change history per iteration
        self.constraint_log = []      # (grad ratio, alpha norm) per iter
        self.initial_error = float("nan")
        self.initial_residual = float("nan")

    def ratios(self):
        """Error contraction factors e_k / e_{k-1} (first vs initial)."""
        out = []
        prev = self.initial_error
        for e in self.error_l2:
            out.append(e / prev if prev > 0 else float("nan"))
            prev = e
        return out

    def final_error(self):
        return self.error_l2[-1] if self.error_l2 else float("nan")

    def to_csv(self, path):
        """Deterministic trace table (timing deliberately excluded so
        repeated runs produce byte-identical files)."""
        ratios = self.ratios()
        with open(path, "w", newline="") as fh:
            fh.write("iteration,error_L2,residual,ratio\n")
            for k in range(len(self.error_l2)):
                fh.write("%d,%.17g,%.17g,%.17g\n"
                         % (k + 1, self.error_l2[k], self.data_residual[k],
                            ratios[k]))

    def write_picard_log(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("iteration,inner_iteration,rel_change\n")
            for k, hist in enumerate(self.picard_changes):
                for j, ch in enumerate(hist):
                    fh.write("%d,%d,%.17g\n" % (k + 1, j + 1, ch))


_DEFAULTS = {
    "preset": None,
    "family": None,
    "dim": 2,
    "n": 32,
    "iterations": 10,
    "solver": None,
    "refine": 1,
    "lambda": 4.0,
    "tol_inflow": 1e-12,
    "t_lo": None,
    "t_hi": None,
    "data": None,
    "boundary_value": 1.0,
    "picard.max_outer": 50,
    "picard.rel_tol": 1e-6,
    "picard.damping": 1.0,
    "picard.supg": 1.0,
    "picard.alpha": 1e-2,
    "picard.adaptive": True,
    "picard.accept_last": False,
}

_INT_KEYS = {"dim", "n", "iterations", "refine", "picard.max_outer"}
_FLOAT_KEYS = {"lambda", "tol_inflow", "t_lo", "t_hi", "boundary_value",
               "picard.rel_tol", "picard.damping", "picard.supg",
               "picard.alpha"}
_BOOL_KEYS = {"picard.adaptive", "picard.accept_last"}


class ReconConfig:
    """Flat key=value reconstruction configuration.

    Recognized keys: preset, family, dim, n, iterations, solver, refine,
    lambda, tol_inflow, t_lo, t_hi, data, boundary_value, and the
    picard.* solver controls.  Preset values fill any key left unset.
    """

    def __init__(self, **kwargs):
        values = dict(_DEFAULTS)
        explicit = set()
        for key, val in kwargs.items():
            key = key.replace("_picard_", "picard.")
            if key not in values:
                raise ConfigError("unknown config key %r" % key)
            values[key] = val
            explicit.add(key)
        self.values = values
        self.explicit = explicit
        if values["solver"] is not None and values["solver"] not in SOLVERS:
            raise ConfigError("unknown solver %r; choose from %s"
                              % (values["solver"], ", ".join(SOLVERS)))

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def from_text(cls, text):
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("line %d is not a key = value pair: %r"
                                  % (lineno, raw.strip()))
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _DEFAULTS:
                raise ConfigError("unknown config key %r (line %d)"
                                  % (key, lineno))
            try:
                if key in _INT_KEYS:
                    val = int(val)
                elif key in _FLOAT_KEYS:
                    val = float(val)
                elif key in _BOOL_KEYS:
                    if val.lower() not in ("true", "false", "0", "1"):
                        raise ValueError
                    val = val.lower() in ("true", "1")
            except ValueError:
                raise ConfigError("invalid value %r for key %r (line %d)"
                                  % (val, key, lineno))
            kwargs[key] = val
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def with_overrides(self, **overrides):
        merged = {k: self.values[k] for k in self.explicit}
        merged.update(overrides)
        return ReconConfig(**merged)

    def to_text(self):
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if val is None:
                continue
            lines.append("%s = %s" % (key, val))
        return "\n".join(lines) + "\n"

    def resolve(self):
        """Fill unset keys from the preset; returns a plain dict."""
        out = dict(self.values)
        if out["preset"] is not None:
            from .presets import get_preset
            p = get_preset(out["preset"])
            fills = {"family": p.family_name, "dim": p.dim,
                     "n": p.resolution, "iterations": p.iterations,
                     "solver": p.solver, "lambda": p.lam,
                     "t_lo": p.t_range[0], "t_hi": p.t_range[1]}
            fills.update(p.config_defaults)
            for key, val in fills.items():
                if key not in self.explicit:
                    out[key] = val
            out["gamma_star"] = p.gamma_star
        else:
            out["gamma_star"] = None
            if out["family"] is None:
                raise ConfigError("config needs either a preset or a family")
            if out["data"] is None:
                raise ConfigError("custom configs need a data file (the "
                                  "target is otherwise unknown)")
        if out["solver"] is None:
            out["solver"] = "dg0" if out["family"] == "D1" else "lsq"
        if out["n"] < 2:
            raise ConfigError("mesh resolution n must be >= 2")
        if out["iterations"] < 1:
            raise ConfigError("iterations must be >= 1")
        if out["refine"] < 1:
            raise ConfigError("refine must be >= 1")
        return out


def _picard_options(cfg):
    return PicardOptions(max_outer=cfg["picard.max_outer"],
                         rel_tol=cfg["picard.rel_tol"],
                         damping=cfg["picard.damping"],
                         accept_last=cfg["picard.accept_last"],
                         supg=cfg["picard.supg"])


def _transport_update(solver, problem, opts, alpha, anchor):
    if solver == "dg0":
        try:
            sol = solve_linear_dg(problem)
            sol.picard_history = []
        except TransportError:
            sol = solve_nonlinear_dg(problem, opts)
        return NodalField(problem.mesh, cell_to_nodal(sol)), sol.picard_history
    if solver == "picard":
        sol = solve_nonlinear(problem, opts)
        return sol, sol.picard_history
    sol = solve_nonlinear_ls(problem, opts, alpha=alpha, anchor=anchor)
    return sol, sol.picard_history


# regularization multipliers and step dampings tried per outer iteration
# by the adaptive least-squares update
_ALPHA_MULTIPLIERS = (0.4, 1.0, 2.5)
_STEP_DAMPINGS = (1.0, 0.5)


def _adaptive_ls_update(problem, opts, alpha, anchor, admissible,
                        boundary_values, residual_fn, res_prev):
    """Residual-guided step selection for the least-squares solver.

    Solves the transport update for a few regularization weights around
    `alpha`, forms full and half steps of each, and keeps the candidate
    whose forward data residual is smallest.  A candidate is accepted
    only if it lowers the residual, so the outer loop is monotone in the
    (observable) data misfit even where the plain fixed-point map is
    locally expansive.  Returns (gamma or None, alpha, history, residual
    pair of the accepted candidate or None).
    """
    gamma = problem.gamma_ref
    inner = PicardOptions(max_outer=opts.max_outer, rel_tol=opts.rel_tol,
                          damping=opts.damping, accept_last=True,
                          supg=opts.supg)
    best = None
    failures = []
    for mult in _ALPHA_MULTIPLIERS:
        a = alpha * mult
        try:
            sol = solve_nonlinear_ls(problem, inner, alpha=a, anchor=anchor)
        except TransportError as exc:
            failures.append(str(exc))
            continue
        for omega in _STEP_DAMPINGS:
            mixed = NodalField(problem.mesh,
                               omega * sol.values
                               + (1.0 - omega) * gamma.values)
            cand = project(mixed, admissible, boundary_values)
            res = residual_fn(cand)
            if best is None or res[0] < best[0][0]:
                best = (res, cand, a, sol.picard_history)
    if best is None:
        raise TransportError("all adaptive least-squares candidates failed: "
                             + "; ".join(failures), [])
    if best[0][0] >= res_prev:
        return None, alpha, [], None
    res, cand, a, history = best
    return cand, a, history, res


def reconstruct(config):
    """Run the fixed-point reconstruction described by `config`.

    Returns a ReconTrace; on sub-solver failure raises ReconError with
    the partial trace attached.
    """
    cfg = config.resolve()
    builder = build_unit_square if cfg["dim"] == 2 else build_unit_cube
    mesh = builder(cfg["n"])
    family = builtin(cfg["family"])
    if cfg["t_lo"] is not None and cfg["t_hi"] is not None:
        family = family.with_t_range(cfg["t_lo"], cfg["t_hi"])
    lo, hi = family.t_range
    M = mass_matrix(mesh)

    gamma_star_fn = cfg["gamma_star"]
    if gamma_star_fn is not None:
        target = interpolate_nodal(mesh, gamma_star_fn)
        data = synthesize(family, target, mesh, refine=cfg["refine"],
                          jacobi=True, M=M)
        boundary_values = gamma_star_fn
    else:
        target = None
        data = load_functional_data(mesh, cfg["data"])
        bval = cfg["boundary_value"]
        boundary_values = lambda pts: np.full(pts.shape[0], bval)

    gamma0 = NodalField(mesh, np.ones(mesh.num_vertices))
    lam = cfg["lambda"]
    box = (max(1.0 / lam, lo), min(lam, hi))
    admissible = AdmissibleSet(gamma0, lam, box=box)

    opts = _picard_options(cfg)
    trace = ReconTrace()
    target_norm = (l2_norm_nodal(mesh, target.values, M)
                   if target is not None else float("nan"))

    def rel_error(gamma):
        if target is None:
            return float("nan")
        return l2_norm_nodal(mesh, gamma.values - target.values,
                             M) / target_norm

    adaptive = cfg["solver"] == "lsq" and cfg["picard.adaptive"]
    H = _h1_matrix(mesh) if adaptive else None

    def residual(gamma):
        """(selection norm, reported L2 norm) of the forward data misfit."""
        forward = synthesize(family, gamma, mesh, jacobi=True, M=M)
        diff = (forward.nodal_projection.values
                - data.nodal_projection.values)
        l2 = l2_norm_nodal(mesh, diff, M)
        h1 = float(np.sqrt(diff @ (H @ diff))) if H is not None else l2
        return h1, l2

    gamma = project(gamma0, admissible, boundary_values)
    trace.initial_error = rel_error(gamma)
    try:
        res_h1, trace.initial_residual = residual(gamma)
    except (SolverError, ValueError) as exc:
        raise ReconError("forward solve for the initial residual failed: %s"
                         % exc, trace)

    alpha = cfg["picard.alpha"]
    res_l2 = trace.initial_residual
    for _ in range(cfg["iterations"]):
        t0 = time.perf_counter()
        try:
            _, E = solve_field(mesh, family, gamma, jacobi=True, M=M)
            problem = TransportProblem(mesh, family, E, data,
                                       boundary_values, gamma_ref=gamma,
                                       tol_inflow=cfg["tol_inflow"])
            if adaptive:
                cand, alpha, changes, res = _adaptive_ls_update(
                    problem, opts, alpha, gamma0, admissible,
                    boundary_values, residual, res_h1)
                if cand is not None:
                    gamma = cand
                    res_h1, res_l2 = res
            else:
                half, changes = _transport_update(cfg["solver"], problem,
                                                  opts, alpha, gamma0)
                gamma = project(half, admissible, boundary_values)
                res_h1, res_l2 = residual(gamma)
            trace.picard_changes.append(list(changes))
            trace.iterates.append(gamma)
            trace.error_l2.append(rel_error(gamma))
            trace.data_residual.append(res_l2)
            trace.constraint_log.append(
                admissible.constraint_values(gamma, M))
            trace.seconds.append(time.perf_counter() - t0)
        except (SolverError, TransportError, ValueError) as exc:
            raise ReconError("iteration %d failed: %s"
                             % (len(trace.iterates) + 1, exc), trace)
    return trace
