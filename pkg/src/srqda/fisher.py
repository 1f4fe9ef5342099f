"""Asymptotic Fisher ratio of the SR-QDA statistic and its grid maximisation.

Shrinkage vectors follow the class-major, lower-then-upper order
``(class 0 lower, class 0 upper, class 1 lower, class 1 upper)``.

Two assembly forms are available. ``"derived"`` (default) uses the limits of the
quadratic-form covariances, which keep the sign of every cross-class alignment and
square the off-diagonal alignment sums. ``"display"`` reproduces the printed
block formulas literally (absolute alignments, unsquared off-diagonal sums,
sigma_0^4 scaling and the swapped cross-block factor) for sensitivity analysis.

The limit statistic replaces the isotropic quadratic term of the discriminant by its
mean, so its variance omits ``2 (1/s1 - 1/s0)^2 tr(Sigma_i^2)``, which grows like p.
Passing ``isotropic=True`` to the optimiser adds that term back. It is off by default,
which reproduces the reference accuracy figures; with it on, SR-QDA exploits the
noise-level gap between classes much harder. ``var_bar`` without the flag is the
variance of the limit statistic itself.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

DELTA_OMEGA = 1e-3
VAR_CLAMP = 1e-9


@dataclass(frozen=True)
class GammaParams:
    gamma1_0: float
    gamma2_0: float
    gamma1_1: float
    gamma2_1: float

    def pair(self, class_index: int) -> tuple[float, float]:
        return (self.gamma1_0, self.gamma2_0) if class_index == 0 else (self.gamma1_1, self.gamma2_1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.gamma1_0, self.gamma2_0, self.gamma1_1, self.gamma2_1)

    def check(self, quantities: "PopulationQuantities", bound: float = np.inf, delta: float = 0.0):
        for g in self.as_tuple():
            if not 0 < g < bound:
                raise ValueError(f"gamma {g} outside (0, {bound})")
        for i in (0, 1):
            g2 = self.pair(i)[1]
            for lam in quantities.lower(i):
                if abs(g2 - 1 / abs(lam)) < delta:
                    raise ValueError(f"gamma2_{i}={g2} within {delta} of 1/|lambda|={1 / abs(lam)}")


@dataclass(frozen=True)
class OmegaParams:
    omega1_1: float
    omega2_1: float
    omega1_0: float
    omega2_0: float

    def __post_init__(self):
        for w in self.as_tuple():
            if not 0 < w < 1:
                raise ValueError(f"omega {w} outside (0, 1)")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.omega1_1, self.omega2_1, self.omega1_0, self.omega2_0)

    def pair(self, class_index: int) -> tuple[float, float]:
        return (self.omega1_0, self.omega2_0) if class_index == 0 else (self.omega1_1, self.omega2_1)


@dataclass(frozen=True)
class ShrinkageCoefficients:
    values: np.ndarray
    sizes: tuple[tuple[int, int], tuple[int, int]]  # ((r2_0, r1_0), (r2_1, r1_1))

    def block(self, class_index: int) -> np.ndarray:
        r0 = sum(self.sizes[0])
        return self.values[:r0] if class_index == 0 else self.values[r0:]


@dataclass(frozen=True)
class PopulationQuantities:
    """Everything the asymptotic mean and variance depend on.

    Per-class arrays (``lam``, ``a``, ``beta``) are in lower-then-upper order with
    ``n_lower[i]`` leading lower spikes. ``beta`` is the signed normalised
    projection of the mean difference on each direction (``b = beta**2``).
    ``psi[j, l]`` is the alignment between class-0 spike j and class-1 spike l.
    """

    p: int
    sigma_sq: tuple[float, float]
    c: tuple[float, float]
    alpha: tuple[float, float]
    lam: tuple[np.ndarray, np.ndarray]
    a: tuple[np.ndarray, np.ndarray]
    beta: tuple[np.ndarray, np.ndarray]
    psi: np.ndarray
    n_lower: tuple[int, int]
    log_prior_ratio: float = 0.0  # log(pi_1 / pi_0)
    form: str = "derived"

    def __post_init__(self):
        r0, r1 = len(self.lam[0]), len(self.lam[1])
        for i in (0, 1):
            if not (len(self.a[i]) == len(self.beta[i]) == len(self.lam[i])):
                raise ValueError(f"class {i}: lam, a, beta lengths differ")
        if np.shape(self.psi) != (r0, r1):
            raise ValueError(f"psi must be {r0} x {r1}, got {np.shape(self.psi)}")
        if self.form not in ("derived", "display"):
            raise ValueError(f"unknown form {self.form!r}")
        object.__setattr__(self, "lam", tuple(np.asarray(x, float) for x in self.lam))
        object.__setattr__(self, "a", tuple(np.asarray(x, float) for x in self.a))
        object.__setattr__(self, "beta", tuple(np.asarray(x, float) for x in self.beta))
        object.__setattr__(self, "psi", np.asarray(self.psi, float).reshape(r0, r1))

    @property
    def r(self) -> tuple[int, int]:
        return len(self.lam[0]), len(self.lam[1])

    @property
    def b(self) -> tuple[np.ndarray, np.ndarray]:
        return self.beta[0] ** 2, self.beta[1] ** 2

    def lower(self, i: int) -> np.ndarray:
        return self.lam[i][:self.n_lower[i]]

    def upper(self, i: int) -> np.ndarray:
        return self.lam[i][self.n_lower[i]:]

    def psi_from(self, i: int) -> np.ndarray:
        """Alignments with rows indexed by class-``i`` spikes, columns by the other class."""
        return self.psi if i == 0 else self.psi.T

    @property
    def phi(self) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for i in (0, 1):
            t = 1 - i
            psi_ti = self.psi_from(t)  # rows: other-class spikes k, cols: class-i spikes j
            out.append(1 + self.a[i] * (self.lam[t] @ psi_ti ** 2))
        return out[0], out[1]

    def theta(self, i: int) -> np.ndarray:
        """Alignment sums of class-``i`` spikes seen from the other class's eigenvectors.

        Entry ``[j, l]`` (j, l spikes of the other class) is
        ``sqrt(a_j a_l) sum_k lambda_{k,i} psi_{k,j} psi_{k,l}``; the display form
        takes absolute values of the alignment products.
        """
        t = 1 - i
        psi_it = self.psi_from(i)  # rows: class-i spikes k, cols: other-class spikes j
        if self.form == "display":
            prod = np.einsum("k,kj,kl->jl", self.lam[i], np.abs(psi_it), np.abs(psi_it))
        else:
            prod = np.einsum("k,kj,kl->jl", self.lam[i], psi_it, psi_it)
        at = self.a[t]
        return np.sqrt(np.outer(at, at)) * prod


def shrinkage_coefficients(gamma: GammaParams, quantities: PopulationQuantities,
                           delta: float = 0.0) -> ShrinkageCoefficients:
    parts = []
    for i in (0, 1):
        g1, g2 = gamma.pair(i)
        lo, up = quantities.lower(i), quantities.upper(i)
        d_lo = 1 + g2 * lo
        if np.any(np.abs(d_lo) <= max(delta, 0.0)) or np.any(d_lo == 0):
            raise ValueError(f"class {i}: 1 + gamma2 * lambda vanishes (gamma2={g2})")
        parts.append(g2 * lo / d_lo)
        parts.append(g1 * up / (1 + g1 * up))
    sizes = tuple((quantities.n_lower[i], quantities.r[i] - quantities.n_lower[i]) for i in (0, 1))
    return ShrinkageCoefficients(np.concatenate(parts), sizes)


def _anchor(quantities: PopulationQuantities, i: int) -> tuple[float, float]:
    """(lambda_{1,i}, lambda_{-1,i}) used by the omega map; unit stand-ins for absent blocks."""
    up, lo = quantities.upper(i), quantities.lower(i)
    lam1 = float(up[0]) if up.size else 1.0
    lam_m1 = float(lo[-1]) if lo.size else -1.0
    return lam1, lam_m1


def omega_to_gamma(omega: OmegaParams, quantities: PopulationQuantities) -> GammaParams:
    vals = {}
    for i in (0, 1):
        w1, w2 = omega.pair(i)
        lam1, lam_m1 = _anchor(quantities, i)
        vals[i] = (w1 / (lam1 * (1 - w1)), -w2 / (lam_m1 * (1 - w2)))
    return GammaParams(vals[0][0], vals[0][1], vals[1][0], vals[1][1])


def gamma_to_omega(gamma: GammaParams, quantities: PopulationQuantities) -> OmegaParams:
    vals = {}
    for i in (0, 1):
        g1, g2 = gamma.pair(i)
        lam1, lam_m1 = _anchor(quantities, i)
        vals[i] = (g1 * lam1 / (1 + g1 * lam1), -g2 * lam_m1 / (1 - g2 * lam_m1))
    return OmegaParams(vals[1][0], vals[1][1], vals[0][0], vals[0][1])


def omega_singular_points(quantities: PopulationQuantities, i: int) -> np.ndarray:
    lo = quantities.lower(i)
    if not lo.size:
        return np.zeros(0)
    return 1.0 / (1.0 + lo / lo[-1])


@dataclass(frozen=True)
class FisherComponents:
    g: np.ndarray
    e: np.ndarray
    Omega: np.ndarray
    b: float
    beta0: float
    beta1: float
    # per-class pieces of the asymptotic mean and variance
    g_i: tuple[np.ndarray, np.ndarray] = field(repr=False)
    e_i: tuple[np.ndarray, np.ndarray] = field(repr=False)
    Omega_i: tuple[np.ndarray, np.ndarray] = field(repr=False)
    b_i: tuple[float, float] = field(repr=False)
    # variance of the isotropic quadratic term, per class
    isotropic: tuple[float, float] = field(default=(0.0, 0.0), repr=False)


def build_components(q: PopulationQuantities) -> FisherComponents:
    r0, r1 = q.r
    r = r0 + r1
    s = q.sigma_sq
    c0, c1 = q.c
    b = q.b
    phi = q.phi
    display = q.form == "display"
    blk = (slice(0, r0), slice(r0, r))
    g_i, e_i, Om_i, b_i = [], [], [], []
    for i in (0, 1):
        t = 1 - i
        g = np.zeros(r)
        e = np.zeros(r)
        Om = np.zeros((r, r))
        own = 1 + q.lam[i] * q.a[i]
        # own-class block
        g[blk[i]] = own if i == 0 else -own
        Om[blk[i], blk[i]] = 0.5 * np.diag(own ** 2)
        # other-class block: Theta_t + M_t
        ratio = s[i] / s[t]
        cross_from_other = phi[t] * ratio
        at_bt = q.a[t] * b[t]
        g[blk[t]] = (-(cross_from_other + q.alpha[t] * at_bt) if i == 0
                     else cross_from_other + q.alpha[t] * at_bt)
        T = q.theta(i)
        theta_blk = np.diag(0.5 * ratio ** 2 * phi[t] ** 2)
        off = ~np.eye(len(phi[t]), dtype=bool)
        if display:
            theta_blk[off] = (0.5 * s[i] ** 2 / s[0] ** 2 * T)[off]
        else:
            theta_blk[off] = (0.5 * ratio ** 2 * T ** 2)[off]
        theta_blk += np.diag(q.alpha[t] * ratio * at_bt)
        # alignment of the other class's directions with this class's spikes
        psi_it = q.psi_from(i)  # rows: class-i spikes k, cols: class-t spikes j
        bt_signed = np.sqrt(b[t]) if display else q.beta[t]
        bi_signed = np.sqrt(b[i]) if display else q.beta[i]
        psi_use = np.abs(psi_it) if display else psi_it
        if display:
            mix = np.einsum("k,kj,kl->jl", q.lam[i], np.abs(psi_it), np.abs(psi_it))
        else:
            mix = np.einsum("k,kj,kl->jl", q.lam[i], psi_it, psi_it)
        M = q.alpha[t] * ratio * np.outer(q.a[t] * bt_signed, q.a[t] * bt_signed) * mix
        Om[blk[t], blk[t]] = theta_blk + M
        # cross block between class 0 and class 1 spikes
        if display:
            lam_fac = q.lam[1][None, :] if i == 0 else q.lam[0][:, None]
            N = -(s[t] / (2 * s[i])) * (1 + lam_fac) ** 2
        else:
            lam_fac = q.lam[0][:, None] if i == 0 else q.lam[1][None, :]
            N = -(s[i] / (2 * s[t])) * (1 + lam_fac) ** 2
        N = N * np.outer(q.a[0], q.a[1]) * q.psi ** 2
        Om[blk[0], blk[1]] = N
        Om[blk[1], blk[0]] = N.T
        # linear term, other-class block only
        lin = q.alpha[t] * ratio * (-at_bt - q.a[t] * bt_signed * ((q.lam[i] * bi_signed) @ psi_use))
        e[blk[t]] = lin
        bconst = c1 * s[i] / s[1] + c0 * s[i] / s[0] + q.alpha[t] * ratio * (1 + q.lam[i] @ b[i])
        g_i.append(g)
        e_i.append(e)
        Om_i.append(0.5 * (Om + Om.T))
        b_i.append(float(bconst))
    k = 1 / s[1] - 1 / s[0]
    # tr(Sigma_i^2) = sigma_i^4 (p + sum(2 lam + lam^2))
    iso = tuple(float(2 * k * k * s[i] ** 2 * (q.p + np.sum(2 * q.lam[i] + q.lam[i] ** 2)))
                for i in (0, 1))
    beta0 = q.alpha[0] + q.p * (s[0] / s[1] - 1)
    beta1 = q.alpha[1] + q.p * (s[1] / s[0] - 1)
    return FisherComponents(g_i[0] - g_i[1], e_i[0] + e_i[1], Om_i[0] + Om_i[1], b_i[0] + b_i[1],
                            float(beta0), float(beta1), tuple(g_i), tuple(e_i), tuple(Om_i),
                            tuple(b_i), iso)


def log_det_inverse(q: PopulationQuantities, coeffs: ShrinkageCoefficients, i: int) -> float:
    """log|det H_i^{-1}| = -p log sigma_i^2 + sum_j log|1 - gamma_tilde_j| (determinant lemma)."""
    return float(-q.p * np.log(q.sigma_sq[i]) + np.sum(np.log(np.abs(1 - coeffs.block(i)))))


def eta(q: PopulationQuantities, coeffs: ShrinkageCoefficients) -> float:
    return -0.5 * (log_det_inverse(q, coeffs, 1) - log_det_inverse(q, coeffs, 0)) - q.log_prior_ratio


def mean_bar(components: FisherComponents, coeffs: ShrinkageCoefficients,
             q: PopulationQuantities, class_index: int) -> float:
    i, t = class_index, 1 - class_index
    s = q.sigma_sq
    c0, c1 = q.c
    const = (2 * eta(q, coeffs) + c1 - c0 + q.p * (s[i] / s[1] - s[i] / s[0])
             + (-1) ** i * q.alpha[t])
    return float(const + components.g_i[i] @ coeffs.values)


def var_bar(components: FisherComponents, coeffs: ShrinkageCoefficients, class_index: int,
            isotropic: bool = False) -> float:
    x = coeffs.values
    i = class_index
    v = 4 * (x @ components.Omega_i[i] @ x + 2 * components.e_i[i] @ x + components.b_i[i])
    if isotropic:
        v += components.isotropic[i]
    if v < 0:
        if v < -VAR_CLAMP:
            raise ValueError(f"asymptotic variance {v:.3g} is negative: inconsistent quantities")
        return 0.0
    return float(v)


def fisher_ratio_bar(gamma: GammaParams, q: PopulationQuantities,
                     components: FisherComponents | None = None, isotropic: bool = False) -> float:
    comps = components if components is not None else build_components(q)
    coeffs = shrinkage_coefficients(gamma, q)
    m0 = mean_bar(comps, coeffs, q, 0)
    m1 = mean_bar(comps, coeffs, q, 1)
    denom = var_bar(comps, coeffs, 0, isotropic) + var_bar(comps, coeffs, 1, isotropic)
    if denom <= 0:
        raise ValueError("zero variance in the Fisher ratio")
    return float(abs(m0 - m1) / np.sqrt(denom))


def fisher_ratio_quadratic(coeffs: np.ndarray, comps: FisherComponents,
                        isotropic: bool = False) -> np.ndarray:
    """Vectorised ``|g'x + beta0 + beta1| / (2 sqrt(x' Omega x + 2 e'x + b))`` over rows of x.

    Rows with a nonpositive variance map to -inf. With ``isotropic`` the constant
    gains a quarter of the summed isotropic variances.
    """
    x = np.atleast_2d(coeffs)
    num = np.abs(x @ comps.g + comps.beta0 + comps.beta1)
    quad = np.einsum("ij,jk,ik->i", x, comps.Omega, x) + 2 * x @ comps.e + comps.b
    if isotropic:
        quad = quad + 0.25 * (comps.isotropic[0] + comps.isotropic[1])
    out = np.full(x.shape[0], -np.inf)
    ok = quad > 0
    out[ok] = num[ok] / (2 * np.sqrt(quad[ok]))
    return out


def _block_coeffs(q: PopulationQuantities, i: int, kind: int, omegas: np.ndarray) -> np.ndarray:
    """Shrinkage coefficients of one block (kind 1 = upper, 2 = lower) for each omega."""
    lam1, lam_m1 = _anchor(q, i)
    w = omegas[:, None]
    if kind == 1:
        lam = q.upper(i)[None, :]
        return w * lam / (lam1 * (1 - w) + w * lam)
    lam = q.lower(i)[None, :]
    return -w * lam / (lam_m1 * (1 - w) - w * lam)


@dataclass(frozen=True)
class OmegaSearchResult:
    omega: OmegaParams
    gamma: GammaParams
    value: float
    evaluated: int


def _axis_grid(centers: np.ndarray, singular: np.ndarray, delta: float) -> np.ndarray:
    if singular.size:
        keep = np.all(np.abs(centers[:, None] - singular[None, :]) >= delta, axis=1)
        centers = centers[keep]
    return centers


def _search(q: PopulationQuantities, comps: FisherComponents, axes: list[np.ndarray],
            isotropic: bool, chunk: int = 65536) -> tuple[tuple[float, ...], float, int]:
    """Exhaustive evaluation over the product grid in omega order (w11, w21, w10, w20)."""
    # axis -> (class, kind)
    spec = [(1, 1), (1, 2), (0, 1), (0, 2)]
    blocks = [_block_coeffs(q, i, kind, ax) for (i, kind), ax in zip(spec, axes)]
    r0, r1 = q.r
    nl0, nl1 = q.n_lower
    # column positions of each axis' block inside the full coefficient vector
    pos = [np.arange(r0 + nl1, r0 + r1), np.arange(r0, r0 + nl1),
           np.arange(nl0, r0), np.arange(0, nl0)]
    sizes = [len(ax) for ax in axes]
    total = int(np.prod(sizes))
    if total == 0:
        raise ValueError("admissible omega grid is empty")
    best_val, best_idx = -np.inf, None
    flat = np.arange(total)
    for start in range(0, total, chunk):
        ids = flat[start:start + chunk]
        multi = np.unravel_index(ids, sizes)
        x = np.zeros((ids.shape[0], r0 + r1))
        for k in range(4):
            if pos[k].size:
                x[:, pos[k]] = blocks[k][multi[k]]
        vals = fisher_ratio_quadratic(x, comps, isotropic)
        j = int(np.argmax(vals))  # first max = lexicographically smallest omega
        if vals[j] > best_val:
            best_val, best_idx = float(vals[j]), ids[j]
    if best_idx is None:
        raise ValueError("no omega in the grid gives a positive variance")
    multi = np.unravel_index(best_idx, sizes)
    return tuple(float(axes[k][multi[k]]) for k in range(4)), best_val, total


def optimize_omega(q: PopulationQuantities, grid_resolution: int = 20, refine_resolution: int = 10,
                   delta: float = DELTA_OMEGA, isotropic: bool = False) -> OmegaSearchResult:
    """Grid maximisation of the Fisher ratio over omega in (0, 1)^4.

    Each axis uses the centres of ``grid_resolution`` equal subintervals, minus points
    within ``delta`` of a singular value. Axes that do not influence the objective
    (no spikes in that block) collapse to their first centre, which is what the
    lexicographic tie rule would select anyway. With ``refine_resolution > 0`` a
    second pass searches the best cell at that resolution; it is only accepted if it
    improves the value.
    """
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    comps = build_components(q)
    spec = [(1, 1), (1, 2), (0, 1), (0, 2)]
    centers = (np.arange(grid_resolution) + 0.5) / grid_resolution
    axes = []
    for i, kind in spec:
        active = (q.upper(i).size if kind == 1 else q.lower(i).size) > 0
        sing = omega_singular_points(q, i) if kind == 2 else np.zeros(0)
        ax = _axis_grid(centers, sing, delta)
        axes.append(ax if active else ax[:1])
    best, val, count = _search(q, comps, axes, isotropic)
    if refine_resolution and refine_resolution > 0:
        half = 0.5 / grid_resolution
        sub = (np.arange(refine_resolution) + 0.5) / refine_resolution
        raxes = []
        for k, (i, kind) in enumerate(spec):
            if len(axes[k]) == 1:
                raxes.append(axes[k])
                continue
            lo = best[k] - half
            ax = lo + 2 * half * sub
            ax = ax[(ax > 0) & (ax < 1)]
            sing = omega_singular_points(q, i) if kind == 2 else np.zeros(0)
            raxes.append(_axis_grid(ax, sing, delta))
        try:
            rbest, rval, rcount = _search(q, comps, raxes, isotropic)
            count += rcount
            if rval > val:
                best, val = rbest, rval
        except ValueError:
            pass
    omega = OmegaParams(*best)
    return OmegaSearchResult(omega, omega_to_gamma(omega, q), val, count)


def grid_values(q: PopulationQuantities, grid_resolution: int, delta: float = DELTA_OMEGA,
                isotropic: bool = False) -> tuple[list[np.ndarray], np.ndarray]:
    """All objective values on the first-stage grid (for diagnostics and tests)."""
    comps = build_components(q)
    centers = (np.arange(grid_resolution) + 0.5) / grid_resolution
    spec = [(1, 1), (1, 2), (0, 1), (0, 2)]
    axes = [_axis_grid(centers, omega_singular_points(q, i) if kind == 2 else np.zeros(0), delta)
            for i, kind in spec]
    vals = []
    for w in itertools.product(*axes):
        om = OmegaParams(*w)
        coeffs = shrinkage_coefficients(omega_to_gamma(om, q), q)
        vals.append(fisher_ratio_quadratic(coeffs.values, comps, isotropic)[0])
    return axes, np.array(vals).reshape([len(a) for a in axes])


def population_quantities(spec0, spec1, n0: int, n1: int, pi0: float = 0.5,
                          form: str = "derived") -> PopulationQuantities:
    """True-parameter quantities from two :class:`SpikedCovarianceSpec` objects."""
    from .spikes import compute_a

    p = spec0.p
    c = (p / n0, p / n1)
    mu = spec0.mean - spec1.mean
    norm_sq = float(mu @ mu)
    unit = mu / np.sqrt(norm_sq) if norm_sq > 0 else np.zeros(p)
    lam, a, beta, dirs = [], [], [], []
    for i, spec in enumerate((spec0, spec1)):
        r1 = len(spec.spikes_upper)
        # lower-then-upper order; direction columns are stored upper-then-lower
        order = np.r_[np.arange(r1, r1 + len(spec.spikes_lower)), np.arange(r1)]
        li = spec.spikes[order]
        vi = spec.directions[:, order]
        lam.append(li)
        a.append(np.asarray(compute_a(li, c[i]), float).reshape(-1))
        beta.append(vi.T @ unit)
        dirs.append(vi)
    return PopulationQuantities(
        p=p, sigma_sq=(spec0.sigma_sq, spec1.sigma_sq), c=c,
        alpha=(norm_sq / spec0.sigma_sq, norm_sq / spec1.sigma_sq),
        lam=tuple(lam), a=tuple(a), beta=tuple(beta), psi=dirs[0].T @ dirs[1],
        n_lower=(len(spec0.spikes_lower), len(spec1.spikes_lower)),
        log_prior_ratio=float(np.log((1 - pi0) / pi0)), form=form)


def plugin_quantities(est0, est1, p: int, n0: int, n1: int, pi0: float = 0.5,
                      use_corrected: bool = True, form: str = "derived") -> PopulationQuantities:
    """Plug-in quantities from a pair of :class:`SpikeEstimates`.

    Eigenvectors are assumed sign-aligned with the estimated mean difference, so the
    signed projection of each direction is ``+sqrt(b_hat)``.
    """
    ests = (est0, est1)
    s = tuple(e.noise.corrected if use_corrected else e.noise.raw for e in ests)
    alpha = tuple(0.0 if not np.isfinite(e.alpha_inv_hat) else 1.0 / e.alpha_inv_hat for e in ests)
    # est0.psi_hat rows: class-1 spikes, cols: class-0 spikes
    return PopulationQuantities(
        p=p, sigma_sq=s, c=(p / n0, p / n1), alpha=alpha,
        lam=(est0.lambda_hat, est1.lambda_hat), a=(est0.a_hat, est1.a_hat),
        beta=(np.sqrt(np.maximum(est0.b_hat, 0)), np.sqrt(np.maximum(est1.b_hat, 0))),
        psi=np.asarray(est0.psi_hat).T.reshape(len(est0.lambda_hat), len(est1.lambda_hat)),
        n_lower=(est0.counts.lower, est1.counts.lower),
        log_prior_ratio=float(np.log((1 - pi0) / pi0)), form=form)
