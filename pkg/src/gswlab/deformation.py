"""Deformation complex of the gauged Dirac system, assembled as matrices.

Every operator is a dense matrix together with block-tagged row/column
spaces carrying diagonal metric weights (h^4 per site dof, 2 h^4 for
self-dual components).  Adjoints are exact weighted transposes; ranks,
kernels and cokernels come from the SVD of the weight-normalized matrix
with the cutoff  max(shape) * sigma_max * 1e-10  and a 10x margin
warning.

Equation rows are restricted to the trusted stencil support
(`gsw.row_masks`); on a box this leaves the faces unconstrained, which
is what makes under-determined smooth solution families possible.
All assemblies use the forward/backward stencil pairing so that the
matrix adjoints are the discrete adjoints exactly.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lattice as lat
from . import quaternion as quat
from .gsw import Configuration, Sources, phi4_diff, residual, residual_norm, row_masks
from .lattice import LatticeGeom, Stencil
from .targets import GaugeGroup

RANK_REL_CUTOFF = 1e-10
RANK_MARGIN = 10.0
MAX_DENSE_DIM = 4096


class RankMarginWarning(UserWarning):
    """Retained and discarded singular values are less than 10x apart."""


# ---------------------------------------------------------------------------
# dof spaces


@dataclass
class BlockSpace:
    """Named blocks of a flat vector space with per-dof metric weights."""

    blocks: list  # [(name, size, weight)]

    def __post_init__(self):
        self.dim = int(sum(n for _, n, _ in self.blocks))
        self.weights = np.concatenate(
            [np.full(n, w) for _, n, w in self.blocks]
        ) if self.blocks else np.zeros(0)
        self._slices = {}
        start = 0
        for name, n, _ in self.blocks:
            self._slices[name] = slice(start, start + n)
            start += n

    def block(self, name):
        return self._slices[name]

    def inner(self, x, y):
        return float(np.sum(x * y * self.weights))

    def norm(self, x):
        return np.sqrt(max(self.inner(x, x), 0.0))


class TangentSpace(BlockSpace):
    """Columns of the deformation operators: (one-form b, spinor v)."""

    def __init__(self, geom: LatticeGeom, group: GaugeGroup):
        self.geom = geom
        self.group = group
        h4 = geom.h**4
        self.link_masks = []
        self.link_counts = []
        if group is GaugeGroup.TRIVIAL:
            n_links = 0
        else:
            for i in range(4):
                m = lat.forward_link_exists(geom, i)
                self.link_masks.append(m.reshape(-1))
                self.link_counts.append(int(m.sum()))
            n_links = sum(self.link_counts)
        n_sites = geom.n_sites
        super().__init__([("oneform", n_links, h4), ("spinor", 4 * n_sites, h4)])
        self.n_links = n_links
        self.n_sites = n_sites
        # flat site index -> dof index of link (site, dir), -1 if absent
        self.link_dof = -np.ones((4, n_sites), dtype=int)
        off = 0
        if group is not GaugeGroup.TRIVIAL:
            for i in range(4):
                sel = np.flatnonzero(self.link_masks[i])
                self.link_dof[i, sel] = off + np.arange(sel.size)
                off += sel.size

    def spinor_dof(self, site_flat, comp):
        return self.n_links + 4 * site_flat + comp

    def pack(self, b_links, v_sites):
        """Pack full-shape (links, site) arrays into a dof vector."""
        vec = np.zeros(self.dim)
        if self.group is not GaugeGroup.TRIVIAL and b_links is not None:
            flat = b_links.reshape(-1, 4)
            off = 0
            for i in range(4):
                sel = np.flatnonzero(self.link_masks[i])
                vec[off : off + sel.size] = flat[sel, i]
                off += sel.size
        vec[self.n_links :] = np.asarray(v_sites, dtype=float).reshape(-1)
        return vec

    def unpack(self, vec):
        """Return (b_links fullshape or None, v_sites array)."""
        v = vec[self.n_links :].reshape(self.geom.dims + (4,)).copy()
        if self.group is GaugeGroup.TRIVIAL:
            return None, v
        b = np.zeros((self.geom.n_sites, 4))
        off = 0
        for i in range(4):
            sel = np.flatnonzero(self.link_masks[i])
            b[sel, i] = vec[off : off + sel.size]
            off += sel.size
        return b.reshape(self.geom.dims + (4,)), v


class EquationSpace(BlockSpace):
    """Rows of the linearized equations: (dirac, selfdual) on trusted sites."""

    def __init__(self, geom: LatticeGeom, group: GaugeGroup):
        self.geom = geom
        self.group = group
        h4 = geom.h**4
        dm, sm = row_masks(geom)
        self.dirac_sites = np.flatnonzero(dm.reshape(-1))
        n_dirac = 4 * self.dirac_sites.size
        if group is GaugeGroup.TRIVIAL:
            self.sd_sites = np.zeros(0, dtype=int)
        else:
            self.sd_sites = np.flatnonzero(sm.reshape(-1))
        n_sd = 3 * self.sd_sites.size
        super().__init__([("dirac", n_dirac, h4), ("selfdual", n_sd, 2.0 * h4)])
        self.site_to_dirac = -np.ones(geom.n_sites, dtype=int)
        self.site_to_dirac[self.dirac_sites] = np.arange(self.dirac_sites.size)
        self.site_to_sd = -np.ones(geom.n_sites, dtype=int)
        self.site_to_sd[self.sd_sites] = np.arange(self.sd_sites.size)

    def dirac_dof(self, site_flat, comp):
        return 4 * self.site_to_dirac[site_flat] + comp

    def sd_dof(self, site_flat, comp):
        return 4 * self.dirac_sites.size + 3 * self.site_to_sd[site_flat] + comp

    def pack(self, dirac_field, sd_vals):
        vec = np.zeros(self.dim)
        nd = self.dirac_sites.size
        vec[: 4 * nd] = dirac_field.reshape(-1, 4)[self.dirac_sites].reshape(-1)
        if self.sd_sites.size:
            vec[4 * nd :] = sd_vals.reshape(-1, 3)[self.sd_sites].reshape(-1)
        return vec


class GaugeScalarSpace(BlockSpace):
    """Gauge Lie-algebra valued site scalars; empty for the trivial group."""

    def __init__(self, geom: LatticeGeom, group: GaugeGroup = GaugeGroup.U1):
        self.geom = geom
        self.group = group
        n = 0 if group is GaugeGroup.TRIVIAL else geom.n_sites
        super().__init__([("gauge", n, geom.h**4)])

    def pack(self, xi):
        if self.dim == 0:
            return np.zeros(0)
        return np.asarray(xi, dtype=float).reshape(-1).copy()

    def unpack(self, vec):
        if self.dim == 0:
            return np.zeros(self.geom.dims)
        return vec.reshape(self.geom.dims).copy()


class StackedSpace(BlockSpace):
    """Rows of the full elliptic operator: equations over the gauge slice."""

    def __init__(self, eq: EquationSpace, gauge: GaugeScalarSpace):
        self.eq = eq
        self.gauge = gauge
        super().__init__(list(eq.blocks) + list(gauge.blocks))

    def pack(self, dirac_field, sd_vals, xi):
        return np.concatenate([self.eq.pack(dirac_field, sd_vals), self.gauge.pack(xi)])


# ---------------------------------------------------------------------------
# linear maps


class LinearMap:
    """Dense matrix between block spaces with exact weighted adjoints."""

    def __init__(self, matrix, row_space: BlockSpace, col_space: BlockSpace):
        self.matrix = np.ascontiguousarray(matrix, dtype=float)
        self.row_space = row_space
        self.col_space = col_space
        if self.matrix.shape != (row_space.dim, col_space.dim):
            raise ValueError("matrix shape does not match block spaces")
        self._svd = None

    # -- basic algebra -----------------------------------------------------
    def apply(self, x):
        return self.matrix @ x

    def adjoint_apply(self, y):
        y = np.asarray(y, dtype=float)
        w_r = self.row_space.weights
        w_c = self.col_space.weights
        if y.ndim == 1:
            return (self.matrix.T @ (w_r * y)) / w_c
        return (self.matrix.T @ (w_r[:, None] * y)) / w_c[:, None]

    def adjoint(self):
        w_r = self.row_space.weights
        w_c = self.col_space.weights
        mat = (self.matrix.T * w_r[None, :]) / w_c[:, None]
        return LinearMap(mat, self.col_space, self.row_space)

    def compose(self, other):
        """self o other (matrix product); other's rows must be our columns."""
        if other.row_space.dim != self.col_space.dim:
            raise ValueError("incompatible composition")
        return LinearMap(self.matrix @ other.matrix, self.row_space, other.col_space)

    @staticmethod
    def vstack(maps, row_space):
        col = maps[0].col_space
        mat = np.vstack([m.matrix for m in maps])
        return LinearMap(mat, row_space, col)

    # -- weighted SVD machinery ---------------------------------------------
    def _weighted(self):
        if self._svd is None:
            if max(self.matrix.shape) > MAX_DENSE_DIM:
                raise ValueError(
                    "dense SVD limited to dimension %d; use a smaller lattice"
                    % MAX_DENSE_DIM
                )
            sr = np.sqrt(self.row_space.weights)
            sc = np.sqrt(self.col_space.weights)
            m_hat = (self.matrix * sr[:, None]) / sc[None, :]
            u, s, vt = np.linalg.svd(m_hat, full_matrices=True)
            self._svd = (u, s, vt, sr, sc)
        return self._svd

    def singular_values(self):
        return self._weighted()[1]

    def rank(self):
        u, s, vt, _, _ = self._weighted()
        if s.size == 0 or s[0] == 0.0:
            return 0, (np.inf, 0.0)
        cutoff = max(self.matrix.shape) * s[0] * RANK_REL_CUTOFF
        r = int(np.sum(s > cutoff))
        retained = s[r - 1] if r > 0 else np.inf
        discarded = s[r] if r < s.size else 0.0
        if discarded > 0 and retained / discarded < RANK_MARGIN:
            warnings.warn(
                "rank decision margin below 10x (retained %.3e, discarded %.3e)"
                % (retained, discarded),
                RankMarginWarning,
            )
        return r, (retained, discarded)

    def kernel_basis(self):
        """Columns: an orthonormal kernel basis in the weighted metric."""
        u, s, vt, sr, sc = self._weighted()
        r, _ = self.rank()
        null_hat = vt[r:].T
        return null_hat / sc[:, None]

    def cokernel_basis(self):
        u, s, vt, sr, sc = self._weighted()
        r, _ = self.rank()
        return u[:, r:] / sr[:, None]

    def pinv_apply(self, y):
        u, s, vt, sr, sc = self._weighted()
        r, _ = self.rank()
        y_hat = sr * y
        coeff = (u[:, :r].T @ y_hat) / s[:r]
        return (vt[:r].T @ coeff) / sc

    def lstsq(self, rhs):
        """Weighted least-squares solve; returns (solution, rank)."""
        r, _ = self.rank()
        return self.pinv_apply(rhs), r

    def operator_norm(self):
        s = self.singular_values()
        return float(s[0]) if s.size else 0.0


# ---------------------------------------------------------------------------
# tangent configurations


@dataclass
class TangentConfig:
    """Tangent (b, v) at a configuration; b is None for the trivial group."""

    b: np.ndarray
    v: np.ndarray

    def copy(self):
        return TangentConfig(None if self.b is None else self.b.copy(), self.v.copy())


def pack_tangent(space: TangentSpace, t: TangentConfig):
    return space.pack(t.b, t.v)


def unpack_tangent(space: TangentSpace, vec):
    b, v = space.unpack(vec)
    return TangentConfig(b, v)


def random_tangent(c: Configuration, seed, amplitude=1.0) -> TangentConfig:
    rng = np.random.default_rng(seed)
    v = amplitude * rng.normal(size=c.geom.dims + (4,))
    if c.group is GaugeGroup.TRIVIAL:
        return TangentConfig(None, v)
    b = amplitude * rng.normal(size=c.geom.dims + (4,))
    for i in range(4):
        b[..., i] *= lat.forward_link_exists(c.geom, i)
    return TangentConfig(b, v)


# ---------------------------------------------------------------------------
# operator assembly


def _neighbor_index(geom: LatticeGeom, axis):
    """Flat site index of x + e_axis (wrapping; callers mask boxes)."""
    idx = np.arange(geom.n_sites).reshape(geom.dims)
    return np.roll(idx, -1, axis=axis).reshape(-1)


def _transported_neighbor(c: Configuration, axis):
    """T_i u(x + e_i) as a site array (valid where the link exists)."""
    u_nb = lat._shift(c.u.values, axis, +1, c.geom.topology)
    if c.a.links is None:
        return u_nb
    return quat.mul(u_nb, quat.exp_i(c.geom.h * c.a.links[..., axis]))


def lin_gauge(c: Configuration) -> LinearMap:
    """Linearized gauge action: xi -> (d xi, -K_xi|_u)."""
    geom = c.geom
    cols = GaugeScalarSpace(geom, c.group)
    rows = TangentSpace(geom, c.group)
    mat = np.zeros((rows.dim, cols.dim))
    n = geom.n_sites
    if c.group is not GaugeGroup.TRIVIAL:
        nb = [_neighbor_index(geom, i) for i in range(4)]
        for i in range(4):
            sites = np.flatnonzero(rows.link_masks[i])
            r = rows.link_dof[i, sites]
            mat[r, nb[i][sites]] += 1.0 / geom.h
            mat[r, sites] += -1.0 / geom.h
        ku = quat.mul(c.u.values, quat.QI).reshape(-1, 4)  # K_1|_u = u i
        for a in range(4):
            r = rows.spinor_dof(np.arange(n), a)
            mat[r, np.arange(n)] += -ku[:, a]
    return LinearMap(mat, rows, cols)


def lin_gauge_adjoint(c: Configuration) -> LinearMap:
    """Exact weighted transpose of lin_gauge (the slice operator)."""
    return lin_gauge(c).adjoint()


def lin_gauge_adjoint_formula(c: Configuration, zeta) -> LinearMap:
    """Slice operator from the moment-map formula d_u mu_zeta(I_zeta v).

    Provided for the zeta-independence and dual-pairing cross-checks;
    zeta must be a unit imaginary quaternion.
    """
    from .targets import moment_values_diff

    geom = c.geom
    rows = GaugeScalarSpace(geom, c.group)
    cols = TangentSpace(geom, c.group)
    mat = np.zeros((rows.dim, cols.dim))
    if c.group is GaugeGroup.TRIVIAL:
        return LinearMap(mat, rows, cols)
    n = geom.n_sites
    # d* on the one-form block
    for i in range(4):
        sites = np.flatnonzero(cols.link_masks[i])
        dofs = cols.link_dof[i, sites]
        nb = _neighbor_index(geom, i)
        mat[sites, dofs] += -1.0 / geom.h
        mat[nb[sites], dofs] += 1.0 / geom.h
    # pointwise term: for each spinor basis direction e_a evaluate
    # d_u mu_zeta (zeta e_a) sitewise
    zim = np.asarray(zeta, dtype=float)[1:]
    for a in range(4):
        w = quat.mul(zeta, quat.BASIS[a])
        dmu = moment_values_diff(c.u.values, w, c.group)  # (...,3)
        coef = dmu.reshape(-1, 3) @ zim
        mat[np.arange(n), cols.spinor_dof(np.arange(n), a)] += coef
    return LinearMap(mat, rows, cols)


def linearize_fsw(c: Configuration, stencil=Stencil.FORWARD) -> LinearMap:
    """Exact Jacobian of the residual map on the trusted equation rows."""
    if stencil is not Stencil.FORWARD:
        raise NotImplementedError("deformation operators use the forward stencil")
    geom = c.geom
    cols = TangentSpace(geom, c.group)
    rows = EquationSpace(geom, c.group)
    mat = np.zeros((rows.dim, cols.dim))
    n = geom.n_sites
    sites = rows.dirac_sites
    nb = [_neighbor_index(geom, i) for i in range(4)]

    # Dirac rows, spinor columns: sum_i e_i (v(x+e_i) T_i - v(x)) / h
    for i in range(4):
        if c.a.links is None:
            blk_nb = np.broadcast_to(
                quat.left_matrix(quat.BASIS[i]), (sites.size, 4, 4)
            ) / geom.h
        else:
            phase = quat.exp_i(geom.h * c.a.links[..., i]).reshape(-1, 4)[sites]
            blk_nb = np.einsum(
                "ab,nbc->nac", quat.left_matrix(quat.BASIS[i]), quat.right_matrix(phase)
            ) / geom.h
        blk_self = -quat.left_matrix(quat.BASIS[i]) / geom.h
        for comp_r in range(4):
            r = rows.dirac_dof(sites, comp_r)
            for comp_c in range(4):
                np.add.at(mat, (r, cols.spinor_dof(nb[i][sites], comp_c)), blk_nb[:, comp_r, comp_c])
                mat[r, cols.spinor_dof(sites, comp_c)] += blk_self[comp_r, comp_c]

    if c.group is not GaugeGroup.TRIVIAL:
        # Dirac rows, one-form columns: e_i (T_i u(x+e_i)) i per link
        for i in range(4):
            w = _transported_neighbor(c, i).reshape(-1, 4)[sites]
            colvec = quat.mul(quat.BASIS[i], quat.mul(w, quat.QI))
            dofs = cols.link_dof[i, sites]
            for comp_r in range(4):
                np.add.at(mat, (rows.dirac_dof(sites, comp_r), dofs), colvec[:, comp_r])

        # self-dual rows, one-form columns: d^+ b
        ssites = rows.sd_sites
        for p, (i, j) in enumerate(lat.PLAQ_PAIRS):
            l = p % 3
            half = 0.5 / geom.h
            r_rows = rows.sd_dof(ssites, l)
            # F_p(x) = (b_j(x+e_i) - b_j(x) - b_i(x+e_j) + b_i(x)) / h
            np.add.at(mat, (r_rows, cols.link_dof[j, nb[i][ssites]]), np.full(ssites.size, half))
            np.add.at(mat, (r_rows, cols.link_dof[j, ssites]), np.full(ssites.size, -half))
            np.add.at(mat, (r_rows, cols.link_dof[i, nb[j][ssites]]), np.full(ssites.size, -half))
            np.add.at(mat, (r_rows, cols.link_dof[i, ssites]), np.full(ssites.size, half))

        # self-dual rows, spinor columns: d_u Phi_4(v)
        for a in range(4):
            basis_field = np.broadcast_to(quat.BASIS[a], geom.dims + (4,))
            dphi = phi4_diff(c.u, basis_field, c.group).reshape(-1, 3)[ssites]
            for l in range(3):
                np.add.at(
                    mat,
                    (rows.sd_dof(ssites, l), cols.spinor_dof(ssites, a)),
                    dphi[:, l],
                )
    return LinearMap(mat, rows, cols)


def elliptic_op(c: Configuration, stencil=Stencil.FORWARD) -> LinearMap:
    """The linearized equations stacked over the gauge slice condition."""
    e = linearize_fsw(c, stencil)
    d_star = lin_gauge_adjoint(c)
    rows = StackedSpace(e.row_space, d_star.row_space)
    return LinearMap.vstack([e, d_star], rows)


def residual_rowvec(c: Configuration, s: Sources, space: EquationSpace, stencil=Stencil.FORWARD):
    dirac_row, sd_row = residual(c, s, stencil)
    return space.pack(dirac_row, sd_row.values)


def second_derivative_rows(c: Configuration, t1: TangentConfig, t2: TangentConfig, space: EquationSpace):
    """Exact mixed second derivative of the residual map along (t1, t2).

    Dirac rows pick up the gauge-coupling cross terms and the
    second-order link-exponential term; self-dual rows carry the
    constant Hessian of the quadratic moment map.
    """
    geom = c.geom
    from .targets import moment_values_diff

    dirac = np.zeros(geom.dims + (4,))
    for i in range(4):
        if c.a.links is None:
            continue
        w = _transported_neighbor(c, i)
        b1 = t1.b[..., i][..., None]
        b2 = t2.b[..., i][..., None]
        v1_nb = lat._shift(t1.v, i, +1, geom.topology)
        v2_nb = lat._shift(t2.v, i, +1, geom.topology)
        phase = quat.exp_i(geom.h * c.a.links[..., i])
        term = quat.mul(quat.mul(v1_nb, phase), quat.QI) * b2
        term = term + quat.mul(quat.mul(v2_nb, phase), quat.QI) * b1
        term = term - geom.h * w * (b1 * b2)
        dirac += quat.mul(quat.BASIS[i], term)
    if c.group is GaugeGroup.TRIVIAL:
        sd = np.zeros(geom.dims + (3,))
    else:
        sd = 0.5 * (
            moment_values_diff(t1.v, t2.v, c.group)
        )
    return space.pack(dirac, sd)


def hessians(c: Configuration, s: Sources, v1, v2):
    """(Hess D_A(v1, v2), Hess Phi_4(v1, v2)) for spinor directions.

    The Dirac operator is affine in u on flat targets, so the first
    entry vanishes identically; the second is the constant symmetric
    bilinear form of the quadratic moment map.
    """
    from .targets import moment_values_diff

    geom = c.geom
    hd = np.zeros(geom.dims + (4,))
    if c.group is GaugeGroup.TRIVIAL:
        hp = np.zeros(geom.dims + (3,))
    else:
        hp = 0.5 * moment_values_diff(np.asarray(v1, float), np.asarray(v2, float), c.group)
    return hd, lat.SelfDualForm(geom, hp)


# ---------------------------------------------------------------------------
# cohomology and the local chart


@dataclass
class CohomologyReport:
    h0: int
    h1: int
    h2: int
    index: int
    margins: dict
    warnings_: list = field(default_factory=list)

    def as_dict(self):
        return {
            "h0": self.h0,
            "h1": self.h1,
            "h2": self.h2,
            "index": self.index,
            "margins": {k: list(v) for k, v in self.margins.items()},
            "warnings": list(self.warnings_),
        }


def cohomology(c: Configuration, stencil=Stencil.FORWARD) -> CohomologyReport:
    """Dimensions of the deformation cohomology at c.

    h0 = dim ker(gauge linearization), h1 = dim ker(elliptic operator),
    h2 = dim coker(equations restricted to the slice), computed as
    coker(elliptic) minus coker(slice operator).
    """
    margins = {}
    warns = []
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always", RankMarginWarning)
        d = lin_gauge(c)
        rank_d, margins["lin_gauge"] = d.rank()
        h0 = d.col_space.dim - rank_d
        op = elliptic_op(c, stencil)
        rank_op, margins["elliptic_op"] = op.rank()
        h1 = op.col_space.dim - rank_op
        coker_op = op.row_space.dim - rank_op
        h2 = coker_op - h0
        warns = [str(w.message) for w in wlist]
    index = h1 - h0 - h2
    return CohomologyReport(h0, h1, h2, index, margins, warns)


def complex_check(c: Configuration, s: Sources, stencil=Stencil.FORWARD):
    """Operator norm of (linearized equations) o (gauge linearization).

    Vanishes at solutions whose sources are gauge invariant (psi = 0);
    a Dirac-row source breaks strict equivariance and shows up here at
    the scale of |psi|.  Warns when c is not on-shell.
    """
    res = residual_norm(c, s, stencil)
    if res > 1e-8:
        warnings.warn(
            "complex_check evaluated off-shell (residual %.3e); the identity "
            "only holds at solutions" % res
        )
    comp = linearize_fsw(c, stencil).compose(lin_gauge(c))
    return comp.operator_norm()


def _orthonormal_complement(basis, inside, weights):
    """Orthonormalize `inside` against span(basis) in the weighted metric."""
    if basis.shape[1] == 0:
        keep = inside
    else:
        gram = basis.T @ (inside * weights[:, None])
        keep = inside - basis @ gram
    q, r = np.linalg.qr(keep * np.sqrt(weights)[:, None])
    diag = np.abs(np.diag(r))
    cols = diag > 1e-8 * (diag.max() if diag.size else 1.0)
    return (q[:, cols]) / np.sqrt(weights)[:, None]


class KuranishiChart:
    """Local chart of the solution set over ker(elliptic operator).

    phi(xi) solves the equations projected off the cokernel, inside the
    gauge slice and orthogonal to the kernel; kappa(xi) is the cokernel
    component of the full residual at phi(xi).
    """

    def __init__(self, c: Configuration, s: Sources, stencil=Stencil.FORWARD,
                 tol=1e-11, max_iter=60):
        self.c = c
        self.s = s
        self.stencil = stencil
        self.tol = tol
        self.max_iter = max_iter
        self.space = TangentSpace(c.geom, c.group)
        self.eq = linearize_fsw(c, stencil)
        self.slice_op = lin_gauge_adjoint(c)
        self.h1_basis = elliptic_op(c, stencil).kernel_basis()
        self.coker_basis = self.eq.cokernel_basis()
        slice_basis = self.slice_op.kernel_basis()
        self.w_basis = _orthonormal_complement(
            self.h1_basis, slice_basis, self.space.weights
        )
        # chord-Newton matrix: equations restricted to the complement
        red = self.eq.matrix @ self.w_basis
        red = red - self.coker_basis @ (
            self.coker_basis.T @ (red * self.eq.row_space.weights[:, None])
        )
        self._red = LinearMap(
            red,
            self.eq.row_space,
            BlockSpace([("w", self.w_basis.shape[1], 1.0)]),
        )

    @property
    def h1_dim(self):
        return self.h1_basis.shape[1]

    @property
    def h2_dim(self):
        return self.coker_basis.shape[1]

    def _config_at(self, tangent_vec):
        b, v = self.space.unpack(tangent_vec)
        c2 = self.c.copy()
        if c2.group is not GaugeGroup.TRIVIAL:
            c2.a.links = c2.a.links + b
        c2.u.values = c2.u.values + v
        return c2

    def _residual_vec(self, cfg):
        return residual_rowvec(cfg, self.s, self.eq.row_space, self.stencil)

    def _project_off_coker(self, r):
        if self.h2_dim == 0:
            return r
        coeff = self.coker_basis.T @ (r * self.eq.row_space.weights)
        return r - self.coker_basis @ coeff

    def solve(self, xi):
        """Return (phi_vec, kappa_coeffs, info) for chart coordinates xi."""
        xi = np.asarray(xi, dtype=float)
        base = self.h1_basis @ xi
        y = np.zeros(self.w_basis.shape[1])
        info = {"iters": 0, "converged": False, "proj_residual": np.inf}
        for it in range(1, self.max_iter + 1):
            vec = base + self.w_basis @ y
            r = self._residual_vec(self._config_at(vec))
            pr = self._project_off_coker(r)
            norm = self.eq.row_space.norm(pr)
            info["iters"] = it
            info["proj_residual"] = norm
            if norm <= self.tol:
                info["converged"] = True
                break
            step, _ = self._red.lstsq(-pr)
            y = y + step
        vec = base + self.w_basis @ y
        r = self._residual_vec(self._config_at(vec))
        kappa = (
            self.coker_basis.T @ (r * self.eq.row_space.weights)
            if self.h2_dim
            else np.zeros(0)
        )
        info["full_residual"] = self.eq.row_space.norm(r)
        return vec, kappa, info

    def kappa_norm(self, xi):
        _, kappa, info = self.solve(xi)
        return float(np.linalg.norm(kappa)), info


@dataclass
class KuranishiReport:
    h_dims: tuple
    regular: bool
    smooth: bool
    kappa0: float
    samples: list

    def as_dict(self):
        return {
            "h0": self.h_dims[0],
            "h1": self.h_dims[1],
            "h2": self.h_dims[2],
            "regular": self.regular,
            "smooth": self.smooth,
            "kappa0": self.kappa0,
            "samples": self.samples,
        }


def kuranishi(
    c: Configuration,
    s: Sources,
    radius=1e-2,
    tol=1e-11,
    n_samples=20,
    seed=0,
    stencil=Stencil.FORWARD,
) -> KuranishiReport:
    """Sample the local chart on a ball in ker(elliptic operator).

    Classification: regular iff h2 = 0; smooth iff additionally the
    stabilizer Lie algebra is trivial (h0 = 0).  Per-sample records
    carry the kappa norm, Newton iterations and convergence flags.
    """
    rep = cohomology(c, stencil)
    chart = KuranishiChart(c, s, stencil, tol=tol)
    kappa0, info0 = chart.kappa_norm(np.zeros(chart.h1_dim))
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(n_samples):
        xi = rng.normal(size=chart.h1_dim)
        nrm = np.linalg.norm(xi)
        if nrm > 0:
            xi *= radius * rng.uniform() ** (1.0 / max(chart.h1_dim, 1)) / nrm
        knorm, info = chart.kappa_norm(xi)
        samples.append(
            {
                "sample": k,
                "kappa_norm": knorm,
                "iters": info["iters"],
                "converged": bool(info["converged"]),
                "proj_residual": info["proj_residual"],
            }
        )
    return KuranishiReport(
        (rep.h0, rep.h1, rep.h2),
        rep.h2 == 0,
        rep.h2 == 0 and rep.h0 == 0,
        kappa0,
        samples,
    )


# ---------------------------------------------------------------------------
# matrix export


def export_triplets(path, lm: LinearMap, tol=0.0):
    """Write a LinearMap in the documented sparse triplet text format.

    Line 1: `rows cols nnz`; then one `row col value` triple per line
    (0-based indices, repr floats), sorted by row then column.
    """
    mat = lm.matrix
    rr, cc = np.nonzero(np.abs(mat) > tol)
    order = np.lexsort((cc, rr))
    with open(path, "w") as fh:
        fh.write("%d %d %d\n" % (mat.shape[0], mat.shape[1], rr.size))
        for k in order:
            fh.write("%d %d %s\n" % (rr[k], cc[k], repr(float(mat[rr[k], cc[k]]))))
