"""Dense primal-dual interior-point solver for small linear SDPs.

Problems are linear objectives over a product of real symmetric PSD blocks
and free scalars, with scalar (in)equality constraints::

    minimise    sum_j <C_j, X_j> + c_f . x_f
    subject to  sum_j <A_ij, X_j> + a_fi . x_f  (=, <=, >=)  b_i
                X_j PSD

Inequalities get nonnegative slack variables; 1x1 blocks are handled as a
nonnegative orthant. Complex Hermitian variables are used through
:func:`hermitian_embed`: a Hermitian ``W`` and its real embedding satisfy
``tr(A W) = tr(embed(A) embed(W)) / 2``.

The iteration is an infeasible-start path-following method with the HKM
search direction and Mehrotra's predictor-corrector, all dense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla


class ConicInputError(ValueError):
    """Malformed or non-finite problem data."""


@dataclass
class Functional:
    """Linear functional ``sum_j <blocks[j], X_j> + sum_i scalars[i] * x_f[i]``.

    Block coefficients must be symmetric. Missing keys mean zero.
    """

    blocks: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)

    def value(self, block_values, scalar_values) -> float:
        out = sum(float(np.sum(c * block_values[j])) for j, c in self.blocks.items())
        out += sum(c * float(scalar_values[i]) for i, c in self.scalars.items())
        return out


@dataclass
class Constraint:
    func: Functional
    relation: str  # "=", "<=", ">="
    rhs: float

    def __post_init__(self):
        if self.relation not in ("=", "<=", ">="):
            raise ConicInputError(f"unknown relation {self.relation!r}")


@dataclass
class ConicProblem:
    blocks: list
    free_scalars: int
    objective: Functional
    constraints: list
    sense: str = "min"

    def validate(self):
        if self.sense not in ("min", "max"):
            raise ConicInputError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if any(int(n) < 1 for n in self.blocks):
            raise ConicInputError("block dimensions must be positive")
        for func in [self.objective] + [c.func for c in self.constraints]:
            for j, mat in func.blocks.items():
                mat = np.asarray(mat, dtype=float)
                if not 0 <= j < len(self.blocks) or mat.shape != (self.blocks[j],) * 2:
                    raise ConicInputError(f"coefficient for block {j} has shape {mat.shape}")
                if not np.all(np.isfinite(mat)):
                    raise ConicInputError("non-finite coefficient")
                if np.max(np.abs(mat - mat.T), initial=0.0) > 1e-9 * (1 + np.max(np.abs(mat))):
                    raise ConicInputError(f"coefficient for block {j} is not symmetric")
            for i, v in func.scalars.items():
                if not 0 <= i < self.free_scalars or not math.isfinite(v):
                    raise ConicInputError(f"bad scalar coefficient {i}: {v}")
        for c in self.constraints:
            if not math.isfinite(c.rhs):
                raise ConicInputError("non-finite right-hand side")


@dataclass
class ConicSolution:
    block_values: list
    scalar_values: np.ndarray
    objective_value: float
    status: str  # optimal, infeasible, unbounded, max_iter
    residuals: dict
    iterations: int = 0
    duals: Optional[np.ndarray] = None
    dual_objective: float = math.nan


# -- small utilities ----------------------------------------------------------

def hermitian_embed(h) -> np.ndarray:
    """Real symmetric ``[[Re h, -Im h], [Im h, Re h]]`` of a Hermitian matrix."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ConicInputError("expected a square matrix")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(h))):
        raise ConicInputError("matrix is not Hermitian")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def hermitian_extract(x) -> np.ndarray:
    """Hermitian matrix represented by a (not necessarily structured) 2n x 2n block.

    Averages the two copies, which is the projection onto embedded matrices
    and preserves every functional built from :func:`hermitian_embed`.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0] // 2
    re = (x[:n, :n] + x[n:, n:]) / 2
    im = (x[n:, :n] - x[:n, n:]) / 2
    h = re + 1j * im
    return (h + h.conj().T) / 2


def embed_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def min_eigenvalue(m) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.linalg.eigvalsh((m + m.T) / 2)[0])


# -- standard form ------------------------------------------------------------

@dataclass
class _Std:
    psd_dims: list        # dims of PSD blocks (> 1)
    psd_user: list        # user block index of each PSD block
    lp_user: list         # ("block", j) or ("slack", i) for each LP coordinate
    a_psd: list           # per PSD block: (rows, stacked (L, n, n))
    c_psd: list
    a_lp: np.ndarray
    c_lp: np.ndarray
    a_f: np.ndarray
    c_f: np.ndarray
    b: np.ndarray
    row_scale: np.ndarray
    obj_sign: float


def _standard_form(p: ConicProblem) -> _Std:
    m = len(p.constraints)
    psd_dims, psd_user, lp_user = [], [], []
    block_map = {}
    for j, n in enumerate(p.blocks):
        if n == 1:
            block_map[j] = ("lp", len(lp_user))
            lp_user.append(("block", j))
        else:
            block_map[j] = ("psd", len(psd_dims))
            psd_dims.append(int(n))
            psd_user.append(j)
    for i, c in enumerate(p.constraints):
        if c.relation != "=":
            lp_user.append(("slack", i))
    n_lp, n_f = len(lp_user), p.free_scalars

    a_lp = np.zeros((m, n_lp))
    a_f = np.zeros((m, n_f))
    rows = [dict() for _ in psd_dims]
    b = np.array([c.rhs for c in p.constraints], dtype=float)
    slack_col = {u[1]: k for k, u in enumerate(lp_user) if u[0] == "slack"}
    for i, c in enumerate(p.constraints):
        for j, mat in c.func.blocks.items():
            kind, k = block_map[j]
            if kind == "lp":
                a_lp[i, k] += float(np.asarray(mat).ravel()[0])
            else:
                rows[k][i] = np.asarray(mat, dtype=float)
        for s, v in c.func.scalars.items():
            a_f[i, s] += v
        if c.relation == "<=":
            a_lp[i, slack_col[i]] = 1.0
        elif c.relation == ">=":
            a_lp[i, slack_col[i]] = -1.0

    # Row equilibration: every constraint gets unit coefficient norm.
    norms = np.zeros(m)
    for k, rk in enumerate(rows):
        for i, mat in rk.items():
            norms[i] += np.sum(mat * mat)
    norms += np.sum(a_lp**2, axis=1) + np.sum(a_f**2, axis=1)
    scale = 1.0 / np.sqrt(np.where(norms > 0, norms, 1.0))

    a_psd = []
    for k, rk in enumerate(rows):
        idx = np.array(sorted(rk), dtype=int)
        stack = (np.array([rk[i] * scale[i] for i in idx]) if idx.size
                 else np.zeros((0, psd_dims[k], psd_dims[k])))
        a_psd.append((idx, stack))

    sign = -1.0 if p.sense == "max" else 1.0
    c_psd = [np.zeros((n, n)) for n in psd_dims]
    c_lp = np.zeros(n_lp)
    c_f = np.zeros(n_f)
    for j, mat in p.objective.blocks.items():
        kind, k = block_map[j]
        if kind == "lp":
            c_lp[k] += sign * float(np.asarray(mat).ravel()[0])
        else:
            c_psd[k] = c_psd[k] + sign * np.asarray(mat, dtype=float)
    for s, v in p.objective.scalars.items():
        c_f[s] += sign * v
    return _Std(psd_dims, psd_user, lp_user, a_psd, c_psd, a_lp * scale[:, None], c_lp,
                a_f * scale[:, None], c_f, b * scale, scale, sign)


def _apply(std: _Std, xs, x_lp, x_f) -> np.ndarray:
    """Operator ``A`` applied to a primal point."""
    out = std.a_lp @ x_lp + std.a_f @ x_f
    for (idx, stack), x in zip(std.a_psd, xs):
        if idx.size:
            out[idx] += stack.reshape(len(idx), -1) @ x.ravel()
    return out


def _adjoint(std: _Std, y):
    mats = []
    for (idx, stack), n in zip(std.a_psd, std.psd_dims):
        mats.append(np.tensordot(y[idx], stack, axes=1) if idx.size else np.zeros((n, n)))
    return mats, std.a_lp.T @ y, std.a_f.T @ y


def _max_step(x, dx):
    """Largest ``t`` with ``x + t dx`` PSD (inf if unbounded)."""
    try:
        lower = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    li = sla.solve_triangular(lower, np.eye(x.shape[0]), lower=True)
    w = np.linalg.eigvalsh(li @ dx @ li.T)[0]
    return math.inf if w >= 0 else -1.0 / w


def _max_step_lp(x, dx):
    neg = dx < 0
    return float(np.min(-x[neg] / dx[neg])) if np.any(neg) else math.inf


def solve(p: ConicProblem, tol: float = 1e-7, max_iter: int = 200,
          verbose: bool = False) -> ConicSolution:
    """Solve a :class:`ConicProblem`.

    Status is ``optimal`` when the relative gap and both relative
    infeasibilities are below ``tol``; ``infeasible`` / ``unbounded`` when
    the iterates approach a Farkas-type certificate; ``max_iter`` otherwise,
    including numerical stalls (the least-infeasible iterate is returned).
    """
    p.validate()
    std = _standard_form(p)
    m = len(p.constraints)
    dims = std.psd_dims
    n_lp, n_f = std.a_lp.shape[1], std.a_f.shape[1]
    nu = sum(dims) + n_lp

    b, c_lp, c_f = std.b, std.c_lp, std.c_f
    norm_b = np.linalg.norm(b)
    norm_c = math.sqrt(sum(np.sum(c * c) for c in std.c_psd) + c_lp @ c_lp + c_f @ c_f)

    # Starting point in the spirit of SDPT3's default.
    a_norms = np.ones(m)
    for idx, stack in std.a_psd:
        if idx.size:
            a_norms[idx] += np.sqrt(np.sum(stack**2, axis=(1, 2)))
    xi_p = max(10.0, math.sqrt(max(nu, 1)), float(np.max((1 + np.abs(b)) / a_norms, initial=0.0)))
    xi_d = max(10.0, math.sqrt(max(nu, 1)), norm_c, float(np.max(a_norms, initial=0.0)))
    xs = [xi_p * np.eye(n) for n in dims]
    zs = [xi_d * np.eye(n) for n in dims]
    x_lp, z_lp = np.full(n_lp, xi_p), np.full(n_lp, xi_d)
    x_f, y = np.zeros(n_f), np.zeros(m)

    status, it = "max_iter", 0
    res = {}
    best, best_it = (math.inf, None), 0
    for it in range(max_iter + 1):
        aty, aty_lp, aty_f = _adjoint(std, y)
        rp = b - _apply(std, xs, x_lp, x_f)
        rd = [c - a - z for c, a, z in zip(std.c_psd, aty, zs)]
        rd_lp = c_lp - aty_lp - z_lp
        rd_f = c_f - aty_f
        gap = sum(float(np.sum(x * z)) for x, z in zip(xs, zs)) + float(x_lp @ z_lp)
        mu = gap / nu if nu else 0.0
        pobj = sum(float(np.sum(c * x)) for c, x in zip(std.c_psd, xs)) + c_lp @ x_lp + c_f @ x_f
        dobj = float(b @ y)
        pinf = np.linalg.norm(rp) / (1 + norm_b)
        dinf = math.sqrt(sum(np.sum(r * r) for r in rd) + rd_lp @ rd_lp + rd_f @ rd_f) / (1 + norm_c)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        res = {"primal": float(pinf), "dual": float(dinf), "gap": float(relgap),
               "abs_gap": float(gap)}
        if verbose:
            print(f"{it:3d} pobj {pobj: .8e} dobj {dobj: .8e} pinf {pinf:.1e} "
                  f"dinf {dinf:.1e} gap {relgap:.1e}")
        if max(pinf, dinf, relgap) <= tol and gap / (1 + abs(pobj) + abs(dobj)) <= tol:
            status = "optimal"
            best = (0.0, None)
            break
        merit = max(pinf, dinf, relgap)
        if merit < best[0]:
            best = (merit, ([x.copy() for x in xs], x_lp.copy(), x_f.copy(), y.copy(), dict(res)))
            best_it = it
        elif it - best_it >= 8:
            if verbose:
                print("    stop: no progress in 8 iterations")
            break
        # Certificates: dual ray (primal infeasible) or primal ray (dual infeasible).
        if dobj > 0:
            ray = math.sqrt(sum(np.sum((a + z) ** 2) for a, z in zip(aty, zs))
                            + np.sum((aty_lp + z_lp) ** 2) + np.sum(aty_f**2))
            if ray / dobj < tol and dobj > 1e3 * (1 + norm_c):
                status = "infeasible"
                break
        if pobj < 0:
            ax = _apply(std, xs, x_lp, x_f)
            if np.linalg.norm(ax) / -pobj < tol and -pobj > 1e3 * (1 + norm_b):
                status = "unbounded"
                break
        if it == max_iter:
            break

        # Schur complement of the HKM system.
        zinv = []
        schur = np.zeros((m, m))
        try:
            for z in zs:
                li = sla.solve_triangular(np.linalg.cholesky(z), np.eye(z.shape[0]), lower=True)
                zinv.append(li.T @ li)
        except np.linalg.LinAlgError:
            if verbose:
                print("    stop: dual block lost definiteness")
            break
        for (idx, stack), x, zi in zip(std.a_psd, xs, zinv):
            if idx.size:
                flat = stack.reshape(len(idx), -1)
                f = np.matmul(np.matmul(x, stack), zi)  # X A_k Z^-1
                schur[np.ix_(idx, idx)] += flat @ f.transpose(0, 2, 1).reshape(len(idx), -1).T
        ratio = x_lp / z_lp
        schur += (std.a_lp * ratio) @ std.a_lp.T
        schur = (schur + schur.T) / 2
        kkt = np.zeros((m + n_f, m + n_f))
        kkt[:m, :m] = schur
        kkt[:m, m:] = std.a_f
        kkt[m:, :m] = std.a_f.T
        kkt[:m, :m] += 1e-14 * (1 + np.max(np.abs(np.diag(schur)), initial=0.0)) * np.eye(m)
        try:
            lu = sla.lu_factor(kkt, check_finite=True)
        except (ValueError, np.linalg.LinAlgError):
            break

        def direction(target, corr, corr_lp):
            # dX = (target I - T) Z^-1 - X - X dZ Z^-1, dZ = Rd - A^T dy.
            base = []
            for x, zi, r, t in zip(xs, zinv, rd, corr):
                rhs_mat = target * zi - x - x @ r @ zi
                if t is not None:
                    rhs_mat = rhs_mat - t @ zi
                base.append(rhs_mat)
            base_lp = (target - corr_lp) / z_lp - x_lp - ratio * rd_lp
            rhs = np.concatenate([rp - _apply(std, base, base_lp, np.zeros(n_f)), rd_f])
            sol = sla.lu_solve(lu, rhs)
            dy, dxf = sol[:m], sol[m:]
            # Iterative refinement against the unreduced primal equation.
            for sweep in range(4):
                ady, ady_lp, ady_f = _adjoint(std, dy)
                # base already contains -X Rd Z^-1; add X (A^T dy) Z^-1.
                dxs = [bm + x @ a @ zi for bm, x, a, zi in zip(base, xs, ady, zinv)]
                dxs = [(d + d.T) / 2 for d in dxs]
                dx_lp = base_lp + ratio * ady_lp
                err = np.concatenate([rp - _apply(std, dxs, dx_lp, dxf), rd_f - ady_f])
                if sweep == 3 or np.linalg.norm(err) <= 1e-15 * (1 + np.linalg.norm(rhs)):
                    break
                corr_sol = sla.lu_solve(lu, err)
                dy, dxf = dy + corr_sol[:m], dxf + corr_sol[m:]
            dzs = [r - a for r, a in zip(rd, ady)]
            dz_lp = rd_lp - ady_lp
            return dxs, dx_lp, dxf, dy, dzs, dz_lp

        def steps(dxs, dx_lp, dzs, dz_lp):
            ap = min([_max_step(x, d) for x, d in zip(xs, dxs)] + [_max_step_lp(x_lp, dx_lp)],
                     default=math.inf)
            ad = min([_max_step(z, d) for z, d in zip(zs, dzs)] + [_max_step_lp(z_lp, dz_lp)],
                     default=math.inf)
            return ap, ad

        # Predictor.
        none = [None] * len(xs)
        dxs, dx_lp, dxf, dy, dzs, dz_lp = direction(0.0, none, np.zeros(n_lp))
        ap, ad = steps(dxs, dx_lp, dzs, dz_lp)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_aff = (sum(float(np.sum((x + ap * dx) * (z + ad * dz)))
                       for x, dx, z, dz in zip(xs, dxs, zs, dzs))
                   + float((x_lp + ap * dx_lp) @ (z_lp + ad * dz_lp)))
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3 if gap > 0 else 0.0

        # Corrector.
        corr = [dx @ dz for dx, dz in zip(dxs, dzs)]
        corr_lp = dx_lp * dz_lp
        dxs, dx_lp, dxf, dy, dzs, dz_lp = direction(sigma * mu, corr, corr_lp)
        ap, ad = steps(dxs, dx_lp, dzs, dz_lp)
        gamma = 0.9 + 0.09 * min(1.0, ap, ad)
        ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
        if verbose:
            print(f"    ap {ap:.2e} ad {ad:.2e} sigma {sigma:.2e} mu {mu:.1e}")
        if max(ap, ad) < 1e-10:
            if verbose:
                print("    stop: step lengths vanished")
            break  # numerical stall; report the current iterate

        xs = [x + ap * d for x, d in zip(xs, dxs)]
        x_lp = x_lp + ap * dx_lp
        x_f = x_f + ap * dxf
        zs = [z + ad * d for z, d in zip(zs, dzs)]
        z_lp = z_lp + ad * dz_lp
        y = y + ad * dy
        if not (all(np.all(np.isfinite(x)) for x in xs) and np.all(np.isfinite(y))):
            status = "max_iter"
            break

    if status == "max_iter" and best[1] is not None:
        xs, x_lp, x_f, y, res = best[1]
    return _recover(p, std, xs, x_lp, x_f, y, status, res, it)


def _recover(p, std, xs, x_lp, x_f, y, status, res, it) -> ConicSolution:
    blocks = [None] * len(p.blocks)
    for k, j in enumerate(std.psd_user):
        blocks[j] = (xs[k] + xs[k].T) / 2
    for k, (kind, j) in enumerate(std.lp_user):
        if kind == "block":
            blocks[j] = np.array([[x_lp[k]]])
    scalars = np.array(x_f, dtype=float)
    obj = p.objective.value(blocks, scalars)
    # Residuals in the caller's units.
    viol = 0.0
    for c in p.constraints:
        lhs = c.func.value(blocks, scalars)
        if c.relation == "=":
            v = abs(lhs - c.rhs)
        elif c.relation == "<=":
            v = max(0.0, lhs - c.rhs)
        else:
            v = max(0.0, c.rhs - lhs)
        viol = max(viol, v / (1 + abs(c.rhs)))
    res = dict(res)
    res["max_violation"] = viol
    duals = y * std.row_scale * (-std.obj_sign if p.sense == "max" else 1.0)
    return ConicSolution(block_values=blocks, scalar_values=scalars, objective_value=obj,
                         status=status, residuals=res, iterations=it, duals=duals,
                         dual_objective=float(std.obj_sign * (std.b @ y)))


# -- plain-text dump ------------------------------------------------------------

def dump_problem(p: ConicProblem, path) -> None:
    """Write a problem as plain text for offline cross-checking.

    Format (one record per line, ``#`` comments)::

        blocks <n_1> ... <n_B>
        free <count>
        objective <min|max>
        B <block> <row> <col> <value>    # upper triangle, row <= col
        F <scalar> <value>
        constraint <=|=|>= <rhs>
        ... coefficient lines as above ...
        end
    """
    def terms(func):
        out = []
        for j, mat in sorted(func.blocks.items()):
            mat = np.asarray(mat, dtype=float)
            r, c = np.triu_indices(mat.shape[0])
            for a, bb in zip(r, c):
                if mat[a, bb] != 0:
                    out.append(f"B {j} {a} {bb} {float(mat[a, bb])!r}")
        for i, v in sorted(func.scalars.items()):
            if v != 0:
                out.append(f"F {i} {float(v)!r}")
        return out

    lines = ["# conic problem v1", "blocks " + " ".join(str(n) for n in p.blocks),
             f"free {p.free_scalars}", f"objective {p.sense}"]
    lines += terms(p.objective)
    for c in p.constraints:
        lines.append(f"constraint {c.relation} {float(c.rhs)!r}")
        lines += terms(c.func)
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> ConicProblem:
    blocks, free, sense = [], 0, "min"
    objective = Functional()
    constraints = []
    current = objective
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "blocks":
                blocks = [int(t) for t in tok[1:]]
            elif tok[0] == "free":
                free = int(tok[1])
            elif tok[0] == "objective":
                sense = tok[1]
                current = objective
            elif tok[0] == "constraint":
                current = Functional()
                constraints.append(Constraint(current, tok[1], float(tok[2])))
            elif tok[0] == "B":
                j, a, bb, v = int(tok[1]), int(tok[2]), int(tok[3]), float(tok[4])
                mat = current.blocks.setdefault(j, np.zeros((blocks[j], blocks[j])))
                mat[a, bb] += v
                if a != bb:
                    mat[bb, a] += v
            elif tok[0] == "F":
                i, v = int(tok[1]), float(tok[2])
                current.scalars[i] = current.scalars.get(i, 0.0) + v
            elif tok[0] == "end":
                break
            else:
                raise ConicInputError(f"unknown record {tok[0]!r}")
    return ConicProblem(blocks=blocks, free_scalars=free, objective=objective,
                        constraints=constraints, sense=sense)
