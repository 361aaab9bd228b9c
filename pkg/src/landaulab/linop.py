"""Linearised Landau operator, its splittings, spectrum and semigroups.

The operator L = A0 + B0 acts on perturbations h of the Maxwellian mu:
B0 h = Q(mu, h) contracts the precomputed convolved fields (abar, cbar)
with derivatives of h, and A0 h = Q(h, mu) convolves h against the kernel
components. The cutoff split L = A + B adds and subtracts M chi_R.

The discretization is the weak (divergence) form of the collision operator:
every apply builds the flux F_i(g, h) = (a_ij * g) d_j h - h (a_ij * d_j g)
and returns -D^T F, where the divergence is the exact negative transpose of
the gradient stencil. Three structural consequences follow on the lattice:

* summation by parts is exact, so pairing against any test function whose
  gradient the stencil reproduces exactly (1, v_i, |v|^2) conserves mass,
  momentum and energy to machine precision;
* inner gradients go through the product rule on the ratio h / mu, which is
  exact on the equilibrium; combined with the lattice identity
  abar_ij v_j = a_ij * (v_j mu) (a consequence of a(z) z = 0) the B0 flux
  collapses to abar_ij mu D_j(h / mu) and L mu = 0 holds exactly;
* the symmetric eigenproblem uses the mu^(1/2)-conjugated gradient
  G+ = D + v/2, for which the diffusion block -G+^T abar G+ is exactly
  symmetric negative semidefinite and all matrix entries stay free of
  exponential mu ratios.

The convolved fields are computed by discrete convolution of the
discretized Maxwellian and cross-validated against the radial quadrature of
the kernel module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.linalg import splu

from . import kernel as kmod
from .diagnostics import NormSpec, norm_data
from .kernel import CollisionKernel, PhiParams, Weight, abscissa, phi_radial
from .vgrid import (
    A_COMPONENTS,
    A_INDEX,
    CLOSURE_EPS,
    PAIR_COMPONENT,
    GridField,
    VelocityGrid,
    KernelConvolver,
    apply_axis,
    closure_dissipation,
    gradient_axes,
    maxwellian_data,
    neg_adjoint_divergence,
)

DENSE_GUARD = 20000  # largest n^3 for which dense assembly is allowed
GAP_TOL = 0.1  # null eigenvalues are those below GAP_TOL * |lambda_6|

_MULT = {c: (1.0 if A_INDEX[c][0] == A_INDEX[c][1] else 2.0) for c in A_COMPONENTS}


def chi_profile(u: float | np.ndarray) -> float | np.ndarray:
    """Smooth bump: 1 on |u| <= 1, 0 on |u| >= 2, C-infinity in between."""
    u = np.abs(np.asarray(u, dtype=float))
    out = np.zeros_like(u)
    out[u <= 1.0] = 1.0
    mid = (u > 1.0) & (u < 2.0)
    t = u[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - t * t))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SplitParams:
    """Amplitude M and radius R of the cutoff term M chi(v / R)."""

    M: float = 0.0
    R: float = 1.0

    def __post_init__(self):
        if self.M < 0.0:
            raise ValueError(f"M must be >= 0, got {self.M}")
        if self.R < 1.0:
            raise ValueError(f"R must be >= 1, got {self.R}")

    def chi_r(self, speed: np.ndarray) -> np.ndarray:
        return chi_profile(np.asarray(speed) / self.R)


class GridMismatchError(ValueError):
    pass


def diffusion_matrix(grid: VelocityGrid, coeff: dict) -> sp.csc_matrix:
    """Sparse conjugated diffusion -sum_ij K_i^T diag(coeff_ij mu) K_j.

    K_i = D_i diag(mu^{-1/2}) is the gradient-of-ratio stencil conjugated by
    mu^{1/2}; coeff maps a-components to pointwise-psd coefficient fields
    (abar for the equilibrium operator, a * f for frozen-coefficient
    nonlinear stepping). The fourth-difference closure dissipation (see
    vgrid.closure_dissipation) is included with the matching diagonal
    coefficients. The result is exactly the stiff diffusion block of the
    conjugated applies and is symmetric negative semidefinite.
    """
    n = grid.n
    mu = maxwellian_data(grid)
    eye = sp.identity(n, format="csr")
    d1 = sp.csr_matrix(grid.d1())
    d4 = sp.csr_matrix(grid.d4u())

    def along(mat, axis):
        ops = [eye, eye, eye]
        ops[axis] = mat
        return sp.kron(sp.kron(ops[0], ops[1]), ops[2], format="csr")

    w = sp.diags(1.0 / np.sqrt(mu).reshape(-1))
    kmats = [(along(d1, i) @ w).tocsr() for i in range(3)]
    total = None
    for comp, (i, j) in A_INDEX.items():
        diag = sp.diags((coeff[comp] * mu).reshape(-1))
        term = kmats[i].T @ diag @ kmats[j]
        if i != j:
            term = term + term.T
        total = term if total is None else total + term
    for i, comp in enumerate(("a11", "a22", "a33")):
        jmat = (along(d4, i) @ w).tocsr()
        diag = sp.diags((CLOSURE_EPS * coeff[comp] * mu).reshape(-1))
        total = total + jmat.T @ diag @ jmat
    return (-total).tocsc()


# above this unknown count a direct factorization is replaced by iterative CG
DIRECT_SOLVE_MAX = 10000


class CrankNicolsonSolver:
    """Solves (I - 0.5 step smat) x = b for implicit-explicit stepping.

    Small systems get a sparse LU factorization; large ones a warm-started
    Jacobi-preconditioned conjugate gradient (the matrix is symmetric
    positive definite because smat is symmetric negative semidefinite),
    which avoids the multi-minute fill-in of a 3D direct factorization.
    """

    def __init__(self, smat: sp.spmatrix, step: float):
        size = smat.shape[0]
        mat = (sp.identity(size, format="csc") - (0.5 * step) * smat).tocsc()
        self.size = size
        if size <= DIRECT_SOLVE_MAX:
            self._lu = splu(mat)
            self._mat = None
        else:
            self._lu = None
            self._mat = mat
            self._precond = sp.diags(1.0 / mat.diagonal())
            self._warm: dict[int, np.ndarray] = {}

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve for b of shape (size,) or (size, nrhs) column-wise."""
        if self._lu is not None:
            return self._lu.solve(b)
        if b.ndim == 1:
            return self._solve_one(b, 0)
        return np.stack(
            [self._solve_one(b[:, j], j) for j in range(b.shape[1])], axis=1
        )

    def _solve_one(self, b: np.ndarray, key: int) -> np.ndarray:
        x, info = spla.cg(
            self._mat,
            b,
            x0=self._warm.get(key),
            M=self._precond,
            rtol=1e-10,
            atol=0.0,
            maxiter=5000,
        )
        if info != 0:
            raise RuntimeError(f"conjugate-gradient solve failed (info={info})")
        self._warm[key] = x
        return x


class LinearisedOperator:
    """L = A0 + B0 with precomputed convolved fields and a cutoff split."""

    def __init__(
        self,
        grid: VelocityGrid,
        kernel: CollisionKernel,
        split: SplitParams | None = None,
    ):
        self.grid = grid
        self.kernel = kernel
        self.split = split if split is not None else SplitParams()
        self.convolver = KernelConvolver(grid, kernel)

        nodes = grid.nodes()
        r2 = np.sum(nodes * nodes, axis=-1)
        self.mu = maxwellian_data(grid)
        self.mu_sqrt = np.sqrt(self.mu)
        self._coords = [grid.coordinate(i) for i in range(3)]
        # d2mu_ratio = (d_ij mu) / mu = v_i v_j - delta_ij (analytic)
        self.d2mu_ratio = {}
        for comp, (i, j) in A_INDEX.items():
            delta = 1.0 if i == j else 0.0
            self.d2mu_ratio[comp] = nodes[..., i] * nodes[..., j] - delta

        fields = self.convolver.convolve_many(self.mu, A_COMPONENTS + ("b1", "b2", "b3"))
        self.abar = {c: fields[c] for c in A_COMPONENTS}
        self.bbar = np.stack([fields["b1"], fields["b2"], fields["b3"]], axis=0)
        # cbar by parts: (c * mu) = sum_ij a_ij * (d_ij mu), with d_ij mu exact
        self.cbar = self.convolver.convolve_sum(
            {c: _MULT[c] * self.d2mu_ratio[c] * self.mu for c in A_COMPONENTS}
        )
        self.abar_trace = self.abar["a11"] + self.abar["a22"] + self.abar["a33"]
        self._closure_w = [
            CLOSURE_EPS * self.mu * self.abar[c] for c in ("a11", "a22", "a33")
        ]

        self.speed = np.sqrt(r2)
        self.chi_field = self.split.chi_r(self.speed)

        self._proj_basis = self._build_projection_basis()
        self._sym_cache = None
        self._eig_cache = None
        self._dense_cache = None
        self._diff_cache = None
        self._rho_cache = {}

    def with_split(self, split: SplitParams) -> "LinearisedOperator":
        op = LinearisedOperator.__new__(LinearisedOperator)
        op.__dict__.update(self.__dict__)
        op.split = split
        op.chi_field = split.chi_r(self.speed)
        return op

    # -- raw-array applies (batched over leading axes) ----------------------

    def _b0_flux(self, h: np.ndarray) -> list[np.ndarray]:
        """B0 flux: F_i = sum_j abar_ij mu D_j(h / mu).

        Equal to abar_ij d_j h + h (a_ij * v_j mu) because abar_ij v_j =
        a_ij * (v_j mu) exactly on the lattice (a(z) z = 0 pointwise).
        """
        dg = gradient_axes(self.grid, h / self.mu)
        return [
            self.mu
            * sum(self.abar[PAIR_COMPONENT[(i, j)]] * dg[j] for j in range(3))
            for i in range(3)
        ]

    def _a0_flux(self, h: np.ndarray) -> list[np.ndarray]:
        """A0 flux: F_i = -(a_ij * h) v_j mu - mu (a_ij * d_j h)."""
        g = h / self.mu
        dg = gradient_axes(self.grid, g)
        grad_h = [self.mu * (dg[j] - self._coords[j] * g) for j in range(3)]
        hhat = self.convolver.forward(h)
        grad_hat = [self.convolver.forward(grad_h[j]) for j in range(3)]
        flux = []
        for i in range(3):
            near = sum(
                self.convolver.convolve_hat(hhat, PAIR_COMPONENT[(i, j)])
                * self._coords[j]
                for j in range(3)
            )
            far = self.convolver.combine_hats(
                (PAIR_COMPONENT[(i, j)], grad_hat[j]) for j in range(3)
            )
            flux.append(-self.mu * (near + far))
        return flux

    def _closure_data(self, data: np.ndarray) -> np.ndarray:
        return closure_dissipation(self.grid, self._closure_w, data / self.mu)

    def a0_data(self, data: np.ndarray) -> np.ndarray:
        return neg_adjoint_divergence(self.grid, self._a0_flux(data))

    def b0_data(self, data: np.ndarray) -> np.ndarray:
        return neg_adjoint_divergence(
            self.grid, self._b0_flux(data)
        ) + self._closure_data(data)

    def l_data(self, data: np.ndarray) -> np.ndarray:
        fa = self._a0_flux(data)
        fb = self._b0_flux(data)
        return neg_adjoint_divergence(
            self.grid, [fa[i] + fb[i] for i in range(3)]
        ) + self._closure_data(data)

    def a_data(self, data: np.ndarray) -> np.ndarray:
        return self.a0_data(data) + self.split.M * self.chi_field * data

    def b_data(self, data: np.ndarray) -> np.ndarray:
        return self.b0_data(data) - self.split.M * self.chi_field * data

    # -- field-level API ----------------------------------------------------

    def _check(self, h: GridField) -> np.ndarray:
        if h.grid != self.grid:
            raise GridMismatchError(f"field grid {h.grid} does not match operator grid {self.grid}")
        return h.data

    def apply_A0(self, h: GridField) -> GridField:
        return GridField(self.grid, self.a0_data(self._check(h)))

    def apply_B0(self, h: GridField) -> GridField:
        return GridField(self.grid, self.b0_data(self._check(h)))

    def apply_L(self, h: GridField) -> GridField:
        return GridField(self.grid, self.l_data(self._check(h)))

    def apply_A(self, h: GridField) -> GridField:
        return GridField(self.grid, self.a_data(self._check(h)))

    def apply_B(self, h: GridField) -> GridField:
        return GridField(self.grid, self.b_data(self._check(h)))

    # -- projection and quadratic form --------------------------------------

    def _build_projection_basis(self):
        nodes = self.grid.nodes()
        r2 = np.sum(nodes * nodes, axis=-1)
        basis = [self.mu, nodes[..., 0] * self.mu, nodes[..., 1] * self.mu,
                 nodes[..., 2] * self.mu, r2 * self.mu]
        return np.stack(basis, axis=0)

    def _inner_mu(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.grid.h**3 * float(np.sum(f * g / self.mu))

    def projection_Pi(self, h: GridField) -> GridField:
        """Orthogonal projection onto the discrete null space of L.

        Uses the L^2(mu^{-1/2}) inner product over span{mu, v_i mu, |v|^2 mu}.
        """
        data = self._check(h)
        return GridField(self.grid, self.pi_data(data))

    def pi_data(self, data: np.ndarray) -> np.ndarray:
        basis = self._proj_basis
        gram = np.array([[self._inner_mu(bi, bj) for bj in basis] for bi in basis])
        cond = np.linalg.cond(gram)
        if cond > 1e8:
            raise RuntimeError(
                f"projection Gram matrix condition number {cond:.2e} > 1e8: grid too coarse"
            )
        rhs = np.array([
            self.grid.h**3 * np.sum(basis[k] * data / self.mu, axis=(-3, -2, -1))
            for k in range(5)
        ])
        coef = np.linalg.solve(gram, rhs)
        return np.tensordot(np.moveaxis(coef, 0, -1), basis, axes=([-1], [0]))

    def dirichlet_form(self, h: GridField) -> float:
        data = self._check(h)
        return self._inner_mu(-self.l_data(data), data)

    # -- dense symmetrized assembly and spectrum -----------------------------

    def assemble_symmetrized(self, batch: int = 256):
        """Dense matrix of x -> mu^{-1/2} L(mu^{1/2} x), symmetrized.

        The conjugated generator is exactly similar to the raw applies; its
        diffusion block -K^T (abar mu) K with K = D diag(mu^{-1/2}) is
        exactly symmetric negative semidefinite, and the convolution block
        symmetrizes on the lattice, so the measured asymmetry sits at
        roundoff. Returns (matrix, asymmetry) where asymmetry =
        |T - T^T|_F / |T|_F is the discretization diagnostic measured
        before symmetrization.
        """
        if self._sym_cache is not None:
            return self._sym_cache
        cols = self.dense_matrix(batch=batch)
        asym = float(np.linalg.norm(cols - cols.T) / np.linalg.norm(cols))
        sym = 0.5 * (cols + cols.T)
        self._sym_cache = (sym, asym)
        return self._sym_cache

    def conjugated_apply(self, x: np.ndarray, which: str = "L") -> np.ndarray:
        """x -> mu^{-1/2} (L or B)(mu^{1/2} x) with the same discretization
        as the raw applies (exact similarity, unlike t_apply).

        This frame is used for all explicit time stepping and dense matrix
        exponentials: the similarity makes the generator nearly symmetric,
        so transient (pseudospectral) growth and roundoff amplification stay
        bounded, while raw perturbation coordinates carry exponentially
        large off-diagonal matrix entries.
        """
        rhs = self.l_data if which == "L" else self.b_data
        return rhs(self.mu_sqrt * x) / self.mu_sqrt

    def dense_matrix(self, batch: int = 256) -> np.ndarray:
        """Dense matrix of the generator in mu^{1/2}-conjugated coordinates.

        This is the exact (similarity-transformed) generator of the time
        stepping and serves as the matrix-exponential oracle on small grids.
        """
        if self._dense_cache is not None:
            return self._dense_cache
        size = self.grid.size
        if size > DENSE_GUARD:
            raise RuntimeError(
                f"dense assembly refused: n^3 = {size} exceeds guard {DENSE_GUARD}"
            )
        shape = self.grid.shape
        mat = np.empty((size, size))
        for start in range(0, size, batch):
            stop = min(start + batch, size)
            block = np.zeros((stop - start, size))
            block[np.arange(stop - start), np.arange(start, stop)] = 1.0
            out = self.conjugated_apply(block.reshape((-1,) + shape)).reshape(
                stop - start, size
            )
            mat[:, start:stop] = out.T
        self._dense_cache = mat
        return mat

    def _eig(self):
        if self._eig_cache is None:
            sym, asym = self.assemble_symmetrized()
            vals, vecs = np.linalg.eigh(sym)
            self._eig_cache = (vals, vecs, asym)
        return self._eig_cache

    def spectral_gap(self) -> "SpectralReport":
        """Dense symmetric eigendecomposition and gap extraction."""
        vals, vecs, asym = self._eig()
        order = np.argsort(vals)[::-1]  # descending: near-null modes first
        vals_desc = vals[order]
        lam6 = vals_desc[5]
        null_count = int(np.sum(np.abs(vals_desc) < GAP_TOL * abs(lam6)))
        sym = self._sym_cache[0]
        lead = order[:20]
        residuals = [
            float(np.linalg.norm(sym @ vecs[:, i] - vals[i] * vecs[:, i])) for i in lead
        ]
        return SpectralReport(
            eigenvalues=vals_desc.tolist(),
            null_count=null_count,
            lambda0=float(-lam6),
            residuals=residuals,
            asymmetry=asym,
            n=self.grid.n,
            vmax=self.grid.vmax,
            gamma=self.kernel.gamma,
        )

    # -- semigroups ----------------------------------------------------------

    def stable_dt(self, which: str = "L") -> float:
        """Explicit RK4 step bound from a power-iteration spectral radius.

        The dominant eigenvalue of the discrete generator is real negative
        (strongest diffusion at the grid corners, where the coefficient
        grows like |v|^(gamma + 2)), and RK4 is stable on the negative real
        axis out to |z| ~ 2.78; a margin of 2.0 is used. The resulting step
        is very small; explicit stepping is an oracle path, the workhorse
        integrator is the IMEX method.
        """
        if which not in self._rho_cache:
            rng = np.random.default_rng(1234)
            u = rng.standard_normal(self.grid.shape)
            u /= np.linalg.norm(u)
            rho = 0.0
            for _ in range(30):
                w = self.conjugated_apply(u, which)
                rho = float(np.linalg.norm(w))
                if rho == 0.0:
                    break
                u = w / rho
            self._rho_cache[which] = max(rho, 1e-300)
        return 2.0 / self._rho_cache[which]

    def diffusion(self) -> sp.csc_matrix:
        """Sparse conjugated equilibrium diffusion: the entire B0 block."""
        if self._diff_cache is None:
            self._diff_cache = diffusion_matrix(self.grid, self.abar)
        return self._diff_cache

    def imex_dt(self, which: str = "L") -> float:
        """Step bound for the explicit IMEX remainder (A0 and cutoff parts).

        B0 is treated implicitly in full, so the remainder is the bounded
        smoothing part; its power-iteration radius sets the step, capped for
        time accuracy of the recorded norms.
        """
        key = ("imex", which, self.split.M, self.split.R)
        if key not in self._rho_cache:
            smat = self.diffusion()
            rng = np.random.default_rng(99)
            u = rng.standard_normal(self.grid.shape)
            u /= np.linalg.norm(u)
            rho = 0.0
            for _ in range(20):
                w = self.conjugated_apply(u, which) - (
                    smat @ u.reshape(-1)
                ).reshape(self.grid.shape)
                rho = float(np.linalg.norm(w))
                if rho == 0.0:
                    break
                u = w / rho
            self._rho_cache[key] = max(rho, 1e-300)
        return min(0.5 / self._rho_cache[key], 0.02)

    def evolve_semigroup(
        self,
        which: str,
        h0,
        t_end: float,
        dt: float | None = None,
        norm_specs=None,
        n_out: int = 61,
        method: str = "imex",
        callback=None,
    ) -> "SemigroupTrace":
        """Integrate dh/dt = (B or L) h and record weighted norms.

        h0 may be a single GridField or a sequence (evolved as a batch).
        All stepping runs in the mu^{1/2}-conjugated frame. The default
        "imex" method treats the sparse diffusion block (all of B0) with
        Crank-Nicolson and the bounded convolution remainder with
        Adams-Bashforth-2, which removes the severe |v|^(gamma+2)/h^2 step
        restriction; "rk4" is the fully explicit oracle path, and
        "spectral" (which = "L" only) evolves through the dense symmetrized
        eigendecomposition at small n.
        """
        if which not in ("B", "L"):
            raise ValueError(f"which must be 'B' or 'L', got {which!r}")
        single = isinstance(h0, GridField)
        fields = [h0] if single else list(h0)
        data = np.stack([self._check(f) for f in fields], axis=0)
        if norm_specs is None:
            norm_specs = [NormSpec(2.0, "mu_inv_half")]
        times = np.linspace(0.0, t_end, n_out)

        if method == "spectral":
            if which != "L":
                raise ValueError("spectral evolution is only available for L")
            return self._evolve_spectral(data, times, norm_specs, single, callback)
        if method not in ("rk4", "imex"):
            raise ValueError(f"unknown method {method!r}")

        def rhs(x):
            return self.conjugated_apply(x, which)

        if dt is None:
            if method == "rk4":
                dt = self.stable_dt(which)
                if self.split.M > 0.0:
                    dt = min(dt, 1.0 / self.split.M)
            else:
                dt = self.imex_dt(which)
        seg = float(times[1] - times[0])
        nsub = max(1, int(math.ceil(seg / dt - 1e-12)))
        step = seg / nsub

        size = self.grid.size
        if method == "imex":
            smat = self.diffusion()
            solver = CrankNicolsonSolver(smat, step)

            def s_apply(x):
                return (smat @ x.reshape(-1, size).T).T.reshape(x.shape)

        norms = {spec.tag(): [] for spec in norm_specs}
        x = data / self.mu_sqrt
        limit = 1e6 * max(float(np.max(np.abs(x))), 1e-300)
        self._record(data, norm_specs, norms)
        if callback is not None:
            callback(0.0, data)
        prev_r = None
        for i_out in range(1, n_out):
            for _ in range(nsub):
                if method == "rk4":
                    k1 = rhs(x)
                    k2 = rhs(x + 0.5 * step * k1)
                    k3 = rhs(x + 0.5 * step * k2)
                    k4 = rhs(x + step * k3)
                    x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                else:
                    sx = s_apply(x)
                    cur = rhs(x) - sx
                    expl = cur if prev_r is None else 1.5 * cur - 0.5 * prev_r
                    rhs_vec = x + step * (0.5 * sx + expl)
                    x = solver.solve(rhs_vec.reshape(-1, size).T).T.reshape(x.shape)
                    prev_r = cur
            t = float(times[i_out])
            if np.max(np.abs(x)) > limit:
                raise RuntimeError(f"semigroup blow-up detected at t = {t:g}")
            data = self.mu_sqrt * x
            self._record(data, norm_specs, norms)
            if callback is not None:
                callback(t, data)
        return SemigroupTrace(
            times=times,
            norms={k: np.array(v) for k, v in norms.items()},
            final=data[0] if single else data,
            single=single,
        )

    def _evolve_spectral(self, data, times, norm_specs, single, callback):
        vals, vecs, _ = self._eig()
        flat = (data / self.mu_sqrt).reshape(data.shape[0], -1)
        coef = flat @ vecs  # (batch, size)
        norms = {spec.tag(): [] for spec in norm_specs}
        for t in times:
            evolved = (coef * np.exp(vals * t)) @ vecs.T
            cur = evolved.reshape(data.shape) * self.mu_sqrt
            self._record(cur, norm_specs, norms)
            if callback is not None:
                callback(float(t), cur)
        return SemigroupTrace(
            times=times,
            norms={k: np.array(v) for k, v in norms.items()},
            final=cur[0] if single else cur,
            single=single,
        )

    def apply_semigroup_spectral(self, data: np.ndarray, t) -> np.ndarray:
        """S_L(t) through the dense symmetrized eigendecomposition.

        t may be a scalar, or an array matched to the leading batch axis of
        data (one propagation time per batch item).
        """
        vals, vecs, _ = self._eig()
        batched = data.ndim > 3
        flat = (data / self.mu_sqrt).reshape(-1, self.grid.size) if batched else (
            (data / self.mu_sqrt).reshape(1, -1)
        )
        tarr = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        out = ((flat @ vecs) * np.exp(vals[None, :] * tarr)) @ vecs.T
        out = out.reshape(data.shape if batched else self.grid.shape)
        return out * self.mu_sqrt

    def _record(self, data, norm_specs, norms):
        for spec in norm_specs:
            norms[spec.tag()].append(norm_data(self.grid, data, spec))

    # -- cross-validation against radial quadrature -------------------------

    def validate_fields(self, inner_fraction: float = 0.5) -> dict:
        """Compare convolved fields with the kernel module's quadrature.

        Returns max relative errors of abar_ii vs 2 J_{gamma+2}, cbar vs
        -2(gamma+3) J_gamma, and bbar vs -ell1 v on the inner cube.
        """
        g = self.grid
        mask = np.max(np.abs(g.nodes()), axis=-1) <= inner_fraction * g.vmax
        speeds = self.speed[mask]
        trace = self.abar_trace[mask]
        cvals = self.cbar[mask]
        bvec = np.stack([self.bbar[i][mask] for i in range(3)], axis=-1)
        nodes = g.nodes()[mask]
        idx = np.argsort(speeds)
        errs = {"abar_trace": 0.0, "cbar": 0.0, "bbar": 0.0}
        gam = self.kernel.gamma
        for i in idx[:: max(1, len(idx) // 500)]:
            r = float(speeds[i])
            j2 = kmod._j_alpha_radial(r, gam + 2.0)
            j0 = kmod._j_alpha_radial(r, gam)
            ell1, _ = kmod._ell_radial(r, gam)
            errs["abar_trace"] = max(errs["abar_trace"], abs(trace[i] - 2.0 * j2) / (2.0 * j2))
            cref = 2.0 * (gam + 3.0) * j0
            errs["cbar"] = max(errs["cbar"], abs(cvals[i] + cref) / cref)
            errs["bbar"] = max(
                errs["bbar"],
                float(np.linalg.norm(bvec[i] + ell1 * nodes[i])) / (ell1 * (1.0 + r)),
            )
        return errs


@dataclass
class SpectralReport:
    eigenvalues: list
    null_count: int
    lambda0: float
    residuals: list
    asymmetry: float
    n: int
    vmax: float
    gamma: float

    def leading(self, count: int = 20) -> list:
        return self.eigenvalues[:count]

    def to_json(self) -> str:
        d = asdict(self)
        d["eigenvalues"] = self.eigenvalues[:50]
        return json.dumps(d, indent=2)


@dataclass
class SemigroupTrace:
    times: np.ndarray
    norms: dict
    final: np.ndarray
    single: bool

    def norm_series(self, spec_or_tag) -> np.ndarray:
        tag = spec_or_tag if isinstance(spec_or_tag, str) else spec_or_tag.tag()
        arr = self.norms[tag]
        return arr[:, 0] if (self.single and arr.ndim == 2) else arr

    def to_csv(self, path) -> None:
        cols = [np.asarray(self.times)]
        header = ["t"]
        for tag, arr in self.norms.items():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                arr = arr[:, None]
            for b in range(arr.shape[1]):
                cols.append(arr[:, b])
                header.append(tag if arr.shape[1] == 1 else f"{tag}[{b}]")
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="")


def save_matrix_triplets(mat: np.ndarray, path, threshold: float = 0.0) -> None:
    """Dump a dense matrix as (row, col, value) text triplets."""
    rows, cols = np.nonzero(np.abs(mat) > threshold)
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for r, c in zip(rows, cols):
            fh.write(f"{r},{c},{mat[r, c]:.17g}\n")


# ---------------------------------------------------------------------------
# split certification


@dataclass
class CertifyResult:
    ok: bool
    worst_margin: float
    suggested: SplitParams | None

    def as_dict(self) -> dict:
        d = {"ok": self.ok, "worst_margin": self.worst_margin}
        if self.suggested is not None:
            d["suggested"] = {"M": self.suggested.M, "R": self.suggested.R}
        return d


def certify_split(
    op: LinearisedOperator,
    w: Weight,
    params: PhiParams,
    a: float,
    n_radii: int = 400,
) -> CertifyResult:
    """Check max_v [phi(v) - M chi_R(v)] <= a, suggesting (M, R) if needed.

    Scans the speeds present on the grid plus a radial far-field probe out
    to 4 vmax. Rejects targets at or below the weight's growth abscissa.
    """
    absc = abscissa(w, op.kernel)
    if not isinstance(absc, kmod.UnboundedBelow) and a <= absc:
        raise ValueError(f"target a = {a} must exceed the abscissa {absc}")
    rmax = 4.0 * op.grid.vmax
    radii = np.unique(np.concatenate([
        np.linspace(0.0, math.sqrt(3.0) * op.grid.vmax, n_radii),
        np.linspace(math.sqrt(3.0) * op.grid.vmax, rmax, n_radii // 2),
    ]))
    phis = phi_radial(w, params, radii, op.kernel)

    def margin(split: SplitParams) -> float:
        return float(np.max(phis - split.M * split.chi_r(radii) - a))

    worst = margin(op.split)
    if worst <= 0.0:
        return CertifyResult(ok=True, worst_margin=worst, suggested=op.split)
    for r_exp in range(0, 8):
        R = float(2**r_exp)
        if 2.0 * R > rmax:
            break
        for m_exp in range(0, 24):
            cand = SplitParams(M=float(2**m_exp), R=R)
            if margin(cand) <= 0.0:
                return CertifyResult(ok=False, worst_margin=worst, suggested=cand)
    return CertifyResult(ok=False, worst_margin=worst, suggested=None)


def default_split(op: LinearisedOperator, w: Weight, a: float) -> SplitParams:
    """The (M, R) pair certified for target a, as an operator-ready split."""
    theta = kmod.canonical_theta(w)
    params = PhiParams.for_weight(w, theta)
    res = certify_split(op, w, params, a)
    if res.suggested is None:
        raise RuntimeError(f"no (M, R) pair certifies the target a = {a}")
    return res.suggested
