"""Truncated cubic velocity lattice: quadrature, differencing, convolution.

The lattice is cell-centered (no node sits exactly on the boundary), fields
are plain 3D arrays, integration is midpoint quadrature, differentiation is
a fourth-order finite-difference stencil with one-sided closures near the
boundary, and convolution against kernel components is a *linear* (zero
padded, non-periodic) FFT convolution with the kernel sampled on the full
difference lattice [-2 vmax, 2 vmax]^3.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .kernel import CollisionKernel, maxwellian

FIELD_MAGIC = b"LLAB"
FIELD_VERSION = 1


def fornberg_weights(x0: float, nodes: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for d^order/dx^order at x0 on given nodes."""
    n = len(nodes)
    delta = np.zeros((order + 1, n, n))
    delta[0, 0, 0] = 1.0
    c1 = 1.0
    for i in range(1, n):
        c2 = 1.0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            for m in range(min(i, order) + 1):
                delta[m, i, j] = (
                    (nodes[i] - x0) * delta[m, i - 1, j] - m * delta[m - 1, i - 1, j]
                ) / c3
        for m in range(min(i, order) + 1):
            delta[m, i, i] = (
                c1 / c2 * (m * delta[m - 1, i - 1, i - 1] - (nodes[i - 1] - x0) * delta[m, i - 1, i - 1])
            )
        c1 = c2
    return delta[order, n - 1, :]


def _diff_matrix(n: int, h: float, order: int) -> np.ndarray:
    """Dense 1D differentiation matrix, 4th-order interior stencil.

    Rows within 2 cells of either end use one-sided stencils of the same
    order (6-point windows).
    """
    x = h * np.arange(n)
    mat = np.zeros((n, n))
    for i in range(n):
        if 2 <= i <= n - 3:
            lo = i - 2
            window = 5
        else:
            lo = min(max(i - 2, 0), n - 6)
            window = 6
        cols = np.arange(lo, lo + window)
        mat[i, cols] = fornberg_weights(x[i], x[cols], order)
    return mat


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centered cube [-vmax, vmax]^3 with n points per axis."""

    n: int
    vmax: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.vmax <= 0.0:
            raise ValueError(f"vmax must be positive, got {self.vmax}")

    @property
    def h(self) -> float:
        return 2.0 * self.vmax / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n**3

    @property
    def axis(self) -> np.ndarray:
        return -self.vmax + (np.arange(self.n) + 0.5) * self.h

    def nodes(self) -> np.ndarray:
        """All lattice nodes as an array of shape (n, n, n, 3)."""
        x = self.axis
        g = np.meshgrid(x, x, x, indexing="ij")
        return np.stack(g, axis=-1)

    def coordinate(self, i: int) -> np.ndarray:
        """Coordinate field v_i on the lattice, shape (n, n, n)."""
        x = self.axis
        shape = [1, 1, 1]
        shape[i] = self.n
        return np.broadcast_to(x.reshape(shape), self.shape).copy()

    def radius2(self) -> np.ndarray:
        return sum(self.coordinate(i) ** 2 for i in range(3))

    def d1(self) -> np.ndarray:
        return _d1_cached(self.n, self.h)

    def d2(self) -> np.ndarray:
        return _d2_cached(self.n, self.h)

    def d4u(self) -> np.ndarray:
        """Undivided fourth difference [1, -4, 6, -4, 1], stencils shifted
        at the ends.

        Every row annihilates polynomials up to degree 3 regardless of
        shift, so pairing through it preserves the mass/momentum/energy
        quadrature identities, the Maxwellian-ratio null states, and the
        cubic heat-flux ratio exactly. Its characteristic polynomial has the
        root z = 1 only, so no oscillatory lattice mode is invisible to it;
        it is the detector used by the closure dissipation that removes
        spurious near-null modes of the divergence-form operators (see
        linop.diffusion_matrix).
        """
        return _d4u_cached(self.n)


_diff_cache: dict[tuple, np.ndarray] = {}


def _d1_cached(n, h):
    key = ("d1", n, h)
    if key not in _diff_cache:
        _diff_cache[key] = _diff_matrix(n, h, 1)
    return _diff_cache[key]


def _d2_cached(n, h):
    key = ("d2", n, h)
    if key not in _diff_cache:
        _diff_cache[key] = _diff_matrix(n, h, 2)
    return _diff_cache[key]


def _d4u_cached(n):
    key = ("d4u", n)
    if key not in _diff_cache:
        mat = np.zeros((n, n))
        w = np.array([1.0, -4.0, 6.0, -4.0, 1.0])
        for i in range(n):
            lo = min(max(i - 2, 0), n - 5)
            mat[i, lo : lo + 5] = w
        _diff_cache[key] = mat
    return _diff_cache[key]


@dataclass
class GridField:
    """Scalar field on a VelocityGrid (density or perturbation)."""

    grid: VelocityGrid
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.data.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def from_function(cls, grid: VelocityGrid, fn) -> "GridField":
        return cls(grid, fn(grid.nodes()))

    @classmethod
    def zeros(cls, grid: VelocityGrid) -> "GridField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "GridField":
        return GridField(self.grid, self.data.copy())


def discretized_maxwellian(grid: VelocityGrid) -> GridField:
    return GridField.from_function(grid, maxwellian)


def integrate(field: GridField, weight_fn=None) -> float:
    """Midpoint quadrature h^3 sum of weight_fn(v) * field."""
    if weight_fn is None:
        return field.grid.h**3 * float(np.sum(field.data))
    w = weight_fn(field.grid.nodes())
    return field.grid.h**3 * float(np.sum(w * field.data))


def apply_axis(mat: np.ndarray, data: np.ndarray, axis: int) -> np.ndarray:
    """Apply a 1D matrix along one of the three trailing axes.

    Leading axes (if any) are treated as a batch dimension.
    """
    ax = data.ndim - 3 + axis
    moved = np.moveaxis(data, ax, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, ax)


def second_derivative_data(grid: VelocityGrid, data: np.ndarray, i: int, j: int) -> np.ndarray:
    """d^2/dv_i dv_j of a (batched) data array on the grid."""
    if i == j:
        return apply_axis(grid.d2(), data, i)
    return apply_axis(grid.d1(), apply_axis(grid.d1(), data, j), i)


A_COMPONENTS = ("a11", "a22", "a33", "a12", "a13", "a23")
A_INDEX = {"a11": (0, 0), "a22": (1, 1), "a33": (2, 2), "a12": (0, 1), "a13": (0, 2), "a23": (1, 2)}
PAIR_COMPONENT = {}
for _c, (_i, _j) in A_INDEX.items():
    PAIR_COMPONENT[(_i, _j)] = _c
    PAIR_COMPONENT[(_j, _i)] = _c

_mu_cache: dict[tuple, np.ndarray] = {}


def maxwellian_data(grid: VelocityGrid) -> np.ndarray:
    key = (grid.n, grid.vmax)
    if key not in _mu_cache:
        _mu_cache[key] = maxwellian(grid.nodes())
    return _mu_cache[key]


def gradient_axes(grid: VelocityGrid, data: np.ndarray) -> list[np.ndarray]:
    """[D_1 data, D_2 data, D_3 data] with the 4th-order stencil."""
    d1 = grid.d1()
    return [apply_axis(d1, data, i) for i in range(3)]


def ratio_gradient(grid: VelocityGrid, f: np.ndarray, mu: np.ndarray) -> list[np.ndarray]:
    """grad f via the product rule on the ratio f / mu.

    d_j f = mu (D_j g - v_j g) with g = f / mu. Differentiating the ratio
    keeps the scheme exact on the Maxwellian (g = 1) and avoids the large
    absolute stencil errors that raw Gaussian-scale fields suffer near the
    grid boundary.
    """
    g = f / mu
    dg = gradient_axes(grid, g)
    return [mu * (dg[j] - grid.coordinate(j) * g) for j in range(3)]


def neg_adjoint_divergence(grid: VelocityGrid, fluxes) -> np.ndarray:
    """-sum_i D_i^T flux_i: the discrete divergence adjoint to gradient_axes.

    Using the exact transpose makes summation by parts exact, so pairing a
    divergence-form operator against any test function whose gradient the
    stencil reproduces exactly (1, v_i, |v|^2) conserves the corresponding
    moment to machine precision.
    """
    d1t = grid.d1().T
    out = -apply_axis(d1t, fluxes[0], 0)
    out -= apply_axis(d1t, fluxes[1], 1)
    out -= apply_axis(d1t, fluxes[2], 2)
    return out


# strength of the fourth-difference closure dissipation in divergence forms
CLOSURE_EPS = 0.03


def closure_dissipation(grid: VelocityGrid, weights, g: np.ndarray) -> np.ndarray:
    """-sum_i T_i^T (w_i (T_i g)) with T the undivided fourth difference.

    Added to divergence-form operators acting on the Maxwellian ratio g.
    Because T annihilates cubics, the term conserves mass, momentum and
    energy exactly and vanishes exactly on the ratios 1, v_i, |v|^2 spanning
    the collision invariants (and on the cubic heat-flux ratio carrying the
    spectral gap); on smooth ratios it is O(h^8) relative to the physical
    diffusion. Its purpose is spectral hygiene: the centered gradient
    stencil admits interior lattice modes (checkerboards and other
    characteristic-root solutions) whose diffusion-form residual hides under
    the Gaussian weight at the domain boundary, producing spurious near-zero
    eigenvalues; no such mode can simultaneously sit in the near-kernel of
    this form, because T's characteristic polynomial has the root z = 1
    only. The weights carry the same mu-scaled coefficient as the physical
    diffusion so the conjugated stiffness stays comparable.
    """
    t = grid.d4u()
    tt = t.T
    out = -apply_axis(tt, weights[0] * apply_axis(t, g, 0), 0)
    out -= apply_axis(tt, weights[1] * apply_axis(t, g, 1), 1)
    out -= apply_axis(tt, weights[2] * apply_axis(t, g, 2), 2)
    return out


def second_derivative(field: GridField, i: int, j: int) -> GridField:
    return GridField(field.grid, second_derivative_data(field.grid, field.data, i, j))


def first_derivative(field: GridField, i: int) -> GridField:
    return GridField(field.grid, apply_axis(field.grid.d1(), field.data, i))


class KernelConvolver:
    """Linear FFT convolution of grid fields against kernel components.

    The kernel component is sampled on the difference lattice (2n points per
    axis, spanning [-2 vmax, 2 vmax)); fields are zero-padded to 2n per axis
    so the circular transform realizes an exact linear convolution with no
    wrap-around from the growing kernel.
    """

    def __init__(self, grid: VelocityGrid, kernel: CollisionKernel):
        self.grid = grid
        self.kernel = kernel
        self.pad = 2 * grid.n
        d = grid.h * (((np.arange(self.pad) + grid.n) % self.pad) - grid.n)
        z1, z2, z3 = np.meshgrid(d, d, d, indexing="ij")
        self._r2 = z1 * z1 + z2 * z2 + z3 * z3
        self._zc = (z1, z2, z3)
        self._khat: dict[str, np.ndarray] = {}

    def _sample(self, component: str) -> np.ndarray:
        g = self.kernel.gamma
        r2 = self._r2
        with np.errstate(divide="ignore", invalid="ignore"):
            if component == "c":
                vals = -2.0 * (g + 3.0) * r2 ** (g / 2.0)
            elif component in A_INDEX:
                i, j = A_INDEX[component]
                rg = r2 ** (g / 2.0)
                proj = (1.0 if i == j else 0.0) - self._zc[i] * self._zc[j] / r2
                vals = rg * r2 * proj
            elif component in ("b1", "b2", "b3"):
                i = int(component[1]) - 1
                vals = -2.0 * r2 ** (g / 2.0) * self._zc[i]
            else:
                raise ValueError(f"unknown kernel component {component!r}")
        # z = 0 entry: a and b vanish there; c vanishes unless gamma = 0
        origin = self._r2 == 0.0
        if component == "c":
            vals[origin] = -2.0 * (g + 3.0) if g == 0.0 else 0.0
        else:
            vals[origin] = 0.0
        return np.nan_to_num(vals, nan=0.0)

    def _kernel_hat(self, component: str) -> np.ndarray:
        if component not in self._khat:
            self._khat[component] = sp_fft.rfftn(self._sample(component), workers=-1)
        return self._khat[component]

    def forward(self, data: np.ndarray) -> np.ndarray:
        """rfftn of zero-padded (possibly batched) field data."""
        n, pad = self.grid.n, self.pad
        shape = data.shape[:-3] + (pad, pad, pad)
        padded = np.zeros(shape)
        padded[..., :n, :n, :n] = data
        return sp_fft.rfftn(padded, axes=(-3, -2, -1), workers=-1)

    def convolve_hat(self, data_hat: np.ndarray, component: str) -> np.ndarray:
        n = self.grid.n
        out = sp_fft.irfftn(
            data_hat * self._kernel_hat(component),
            s=(self.pad,) * 3,
            axes=(-3, -2, -1),
            workers=-1,
        )
        return out[..., :n, :n, :n] * self.grid.h**3

    def convolve(self, data: np.ndarray, component: str) -> np.ndarray:
        return self.convolve_hat(self.forward(data), component)

    def convolve_many(self, data: np.ndarray, components) -> dict[str, np.ndarray]:
        data_hat = self.forward(data)
        return {c: self.convolve_hat(data_hat, c) for c in components}

    def convolve_sum(self, fields: dict[str, np.ndarray]) -> np.ndarray:
        """sum_c (K_c * fields[c]) with a single inverse transform."""
        return self.combine_hats(
            (comp, self.forward(data)) for comp, data in fields.items()
        )

    def combine_hats(self, terms) -> np.ndarray:
        """sum over (component, data_hat) pairs of K_c * field, one inverse.

        Lets callers transform each field once and reuse it across several
        component sums (e.g. the three flux components of the collision
        operator share the forward transforms of the field gradient).
        """
        total_hat = None
        for comp, data_hat in terms:
            term = self._kernel_hat(comp) * data_hat
            total_hat = term if total_hat is None else total_hat + term
        n = self.grid.n
        out = sp_fft.irfftn(total_hat, s=(self.pad,) * 3, axes=(-3, -2, -1), workers=-1)
        return out[..., :n, :n, :n] * self.grid.h**3


_convolver_cache: dict[tuple, KernelConvolver] = {}


def get_convolver(grid: VelocityGrid, kernel: CollisionKernel) -> KernelConvolver:
    key = (grid.n, grid.vmax, kernel.gamma)
    if key not in _convolver_cache:
        _convolver_cache[key] = KernelConvolver(grid, kernel)
    return _convolver_cache[key]


def convolve_kernel(g: GridField, component: str, kernel: CollisionKernel) -> GridField:
    """(component * g)(v) on the lattice; component in a11..a23, b1..b3, c."""
    conv = get_convolver(g.grid, kernel)
    return GridField(g.grid, conv.convolve(g.data, component))


def boundary_mass(field: GridField) -> float:
    """Integral of |f| over the 2-cell frame nearest the boundary."""
    g = field.grid
    inner = np.max(np.abs(g.nodes()), axis=-1) > g.vmax - 2.0 * g.h
    return g.h**3 * float(np.sum(np.abs(field.data[inner])))


# ---------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<4sIId12x")  # magic, version, n, vmax, pad to 32 bytes


def save_field(field: GridField, path) -> None:
    """Flat binary snapshot: 32-byte header then little-endian float64 data."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, field.grid.n, field.grid.vmax))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def load_field(path) -> GridField:
    with open(path, "rb") as fh:
        magic, version, n, vmax = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != FIELD_MAGIC:
            raise ValueError(f"bad magic {magic!r} in field snapshot {path}")
        if version != FIELD_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape((n, n, n))
    return GridField(VelocityGrid(n, vmax), data.copy())


def export_csv(field: GridField, path) -> None:
    nodes = field.grid.nodes().reshape(-1, 3)
    rows = np.column_stack([nodes, field.data.reshape(-1)])
    np.savetxt(path, rows, delimiter=",", header="v1,v2,v3,value", comments="")
