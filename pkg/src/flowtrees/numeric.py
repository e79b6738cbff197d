"""Discrete-torus interpreter for the symbolic evaluation maps.

Space is periodic on [0,1)^d (d=1 in practice), time lives on [0,1] with
causal convolution and no wrap-around.  The base kernel is the spectral heat
semigroup of d_t + (-Lap)^(lam/2); the scale cutoff is a fixed closed-form
smooth ramp, so the scale derivative of the cut kernel is analytic.

Everything is plain numpy at desk scale; fields are (nt, nx) arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .eval import Expr, KERNEL_BAR, KERNEL_DOT, KERNEL_FULL
from .trees import MultiIndex, Rule


@dataclass(frozen=True)
class TorusGrid:
    d: int
    nt: int
    nx: int

    @property
    def dt(self) -> float:
        return 1.0 / (self.nt - 1)

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def tt(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @property
    def xx(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    def zeros(self) -> np.ndarray:
        return np.zeros((self.nt, self.nx))


def chi(s: np.ndarray | float) -> np.ndarray:
    """Smooth ramp: 0 below 1, 1 above 2, C-infinity in between."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s >= 2.0] = 1.0
    mid = (s > 1.0) & (s < 2.0)
    u = 2.0 - s[mid]
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - u * u))
    return out


def chi_prime(s: np.ndarray | float) -> np.ndarray:
    """Derivative of the ramp (supported on (1,2))."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 1.0) & (s < 2.0)
    u = 2.0 - s[mid]
    w = 1.0 - u * u
    out[mid] = np.exp(1.0 - 1.0 / w) * (2.0 * u) / (w * w)
    return out


class KernelTable:
    """Sampled kernels and their space/time derivatives at one scale."""

    def __init__(self, grid: TorusGrid, r: Rule, mu: float):
        if grid.d != 1:
            raise ValueError("the numeric back end is one-dimensional in space")
        self.grid = grid
        self.rule = r
        self.mu = float(mu)
        self._cache: dict[tuple[str, MultiIndex], np.ndarray] = {}
        n = np.fft.fftfreq(grid.nx) * grid.nx  # integer modes
        self._modes = n
        self._symbol = np.abs(2.0 * np.pi * n) ** float(r.lam)

    def _heat(self, a: MultiIndex) -> np.ndarray:
        """d^a of the spectral semigroup, sampled on the grid."""
        g = self.grid
        n = self._modes
        tt = g.tt[:, None]
        mult = np.exp(-self._symbol[None, :] * tt)
        mult = mult * (-self._symbol[None, :]) ** a[0]
        mult = mult * (2j * np.pi * n[None, :]) ** a[1]
        return np.real(np.fft.ifft(mult, axis=1)) * g.nx

    def _cut(self) -> np.ndarray:
        if self.mu == 0.0:
            return np.ones(self.grid.nt)
        return chi(self.grid.tt / self.mu**2)

    def _cut_scale_derivative(self) -> np.ndarray:
        if self.mu == 0.0:
            return np.zeros(self.grid.nt)
        tt = self.grid.tt
        return chi_prime(tt / self.mu**2) * (-2.0 * tt / self.mu**3)

    def get(self, kind: str, a: MultiIndex) -> np.ndarray:
        key = (kind, tuple(a))
        if key not in self._cache:
            heat = self._heat(a)
            if kind == KERNEL_FULL:
                out = heat
            elif kind == KERNEL_BAR:
                out = (1.0 - self._cut())[:, None] * heat
            elif kind == KERNEL_DOT:
                out = self._cut_scale_derivative()[:, None] * heat
            else:
                raise KeyError(f"no sampled kernel for {kind!r}")
            self._cache[key] = out
        return self._cache[key]


def build_kernels(grid: TorusGrid, r: Rule, mu: float | Fraction) -> KernelTable:
    return KernelTable(grid, r, float(mu))


def convolve(grid: TorusGrid, kernel: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Causal time / circular space convolution of sampled fields."""
    kf = np.fft.fft(kernel, axis=1)
    ff = np.fft.fft(f, axis=1)
    out = np.zeros((grid.nt, grid.nx), dtype=complex)
    for i in range(grid.nt):
        acc = np.zeros(grid.nx, dtype=complex)
        for j in range(i + 1):
            acc += kf[i - j] * ff[j]
        out[i] = acc
    return np.real(np.fft.ifft(out, axis=1)) * grid.dt * grid.dx


def sample_noise(grid: TorusGrid, eps: float, seed: int) -> np.ndarray:
    """Mollified space-time white noise, deterministic per seed."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((grid.nt, grid.nx)) / math.sqrt(grid.dt * grid.dx)
    return mollify(grid, white, eps)


def white_noise(grid: TorusGrid, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((grid.nt, grid.nx)) / math.sqrt(grid.dt * grid.dx)


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inner = np.abs(s) < 1.0
    out[inner] = np.exp(-1.0 / (1.0 - s[inner] ** 2))
    return out


def mollify(grid: TorusGrid, f: np.ndarray, eps: float, lam: float = 2.0) -> np.ndarray:
    """Convolve with a parabolically scaled normalized bump.

    Time uses zero padding (no wrap), space wraps; eps below two grid
    spacings cannot be resolved.
    """
    if eps < 2 * min(grid.dt, grid.dx):
        raise ValueError("mollification scale below grid resolution")
    tt = np.concatenate([grid.tt, -grid.tt[1:][::-1]])
    rho_t = _bump(tt / eps**lam)
    xs = grid.xx.copy()
    xs[xs > 0.5] -= 1.0
    rho_x = _bump(xs / eps)
    kern = rho_t[:, None] * rho_x[None, :]
    total = kern.sum() * grid.dt * grid.dx
    kern /= total
    # direct convolution, zero-padded in time, circular in space
    kf = np.fft.fft(kern, axis=1)
    ff = np.fft.fft(f, axis=1)
    out = np.zeros((grid.nt, grid.nx), dtype=complex)
    half = grid.nt
    for i in range(grid.nt):
        acc = np.zeros(grid.nx, dtype=complex)
        for j in range(grid.nt):
            lag = i - j
            if lag <= -half or lag >= half:
                continue
            acc += kf[lag] * ff[j]
        out[i] = acc
    return np.real(np.fft.ifft(out, axis=1)) * grid.dt * grid.dx


# ---------------------------------------------------------------------------
# nonlinearities and interpretation


@dataclass(frozen=True)
class PolyNonlinearity:
    """Polynomial in the solution value only (no gradient dependence)."""

    coeffs: tuple[float, ...]  # c0 + c1 u + c2 u^2 + ...

    def derivative(self, order: int) -> "PolyNonlinearity":
        c = list(self.coeffs)
        for _ in range(order):
            c = [i * c[i] for i in range(1, len(c))]
        return PolyNonlinearity(tuple(c))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        for c in reversed(self.coeffs):
            out = out * u + c
        return out


@dataclass
class InterpretEnv:
    grid: TorusGrid
    kernels: KernelTable
    xi: np.ndarray
    phi: np.ndarray
    g: PolyNonlinearity
    f: PolyNonlinearity
    char_values: dict[str, Fraction] = field(default_factory=dict)
    phi_tilde: np.ndarray | None = None
    basepoint: tuple[int, int] | None = None  # grid indices of the mono basepoint

    def field_for(self, tilde: bool) -> np.ndarray:
        if tilde and self.phi_tilde is not None:
            return self.phi_tilde
        return self.phi


def _spectral_dx(grid: TorusGrid, f: np.ndarray, order: int) -> np.ndarray:
    if order == 0:
        return f
    n = np.fft.fftfreq(grid.nx) * grid.nx
    mult = (2j * np.pi * n) ** order
    return np.real(np.fft.ifft(np.fft.fft(f, axis=1) * mult[None, :], axis=1))


def interpret(e: Expr, env: InterpretEnv) -> np.ndarray:
    """Evaluate a symbolic expression to a sampled field."""
    out = env.grid.zeros()
    for atoms, syms, coeff in e:
        c = float(coeff)
        unresolved = [s for s in syms if s not in env.char_values]
        if unresolved:
            raise KeyError(f"unbound character symbols: {unresolved}")
        for s in syms:
            c *= float(env.char_values[s])
        term = np.full((env.grid.nt, env.grid.nx), c)
        for a in atoms:
            term = term * _interpret_atom(a, env)
        out = out + term
    return out


def _interpret_atom(a, env: InterpretEnv) -> np.ndarray:
    grid = env.grid
    if a[0] == "xi":
        return env.xi
    if a[0] == "mono":
        k = a[1]
        if env.basepoint is None:
            raise ValueError("monomial atom without a basepoint")
        it, ix = env.basepoint
        tdiff = grid.tt - grid.tt[it]
        xdiff = (grid.xx - grid.xx[ix] + 0.5) % 1.0 - 0.5
        return (tdiff[:, None] ** k[0]) * (xdiff[None, :] ** k[1])
    if a[0] == "fn":
        _, tilde, l, k, D = a
        poly = env.g if l == 0 else env.f
        for idx in D:
            if any(idx[1:]) or idx[0]:
                return grid.zeros()  # nonlinearities depend on the value only
        base = poly.derivative(len(D))(env.field_for(tilde))
        if k[0]:
            return grid.zeros()  # static profiles: time derivatives vanish
        return _spectral_dx(grid, base, k[1])
    if a[0] == "conv":
        kern = env.kernels.get(a[1], a[2])
        inner = interpret((((a[3]), (), Fraction(1)),), env)
        return convolve(grid, kern, inner)
    raise ValueError(a)


def band_limited_profile(grid: TorusGrid, seed: int, modes: int = 2) -> np.ndarray:
    """Static low-mode trigonometric profile (exact spectral derivatives)."""
    rng = np.random.default_rng(seed)
    x = grid.xx
    prof = np.zeros(grid.nx)
    for m in range(1, modes + 1):
        prof += rng.normal() * np.cos(2 * np.pi * m * x) + rng.normal() * np.sin(2 * np.pi * m * x)
    return np.tile(prof, (grid.nt, 1))


# ---------------------------------------------------------------------------
# numeric identity checks


def check_kernel_contract(grid: TorusGrid, r: Rule, mu: float) -> dict:
    """Support and boundary identities of the cut kernels."""
    kt_mu = build_kernels(grid, r, mu)
    kt0 = build_kernels(grid, r, 0.0)
    kt1 = build_kernels(grid, r, 1.0)
    a0 = (0, 0)
    g_full = kt_mu.get(KERNEL_FULL, a0)
    g0_bar = kt0.get(KERNEL_BAR, a0)  # G - G_0 = 0
    g1_bar = kt1.get(KERNEL_BAR, a0)  # G - G_1 = G
    gdot = kt_mu.get(KERNEL_DOT, a0)
    tt = grid.tt
    outside = (tt < mu**2 - grid.dt) | (tt > 2 * mu**2 + grid.dt)
    return {
        "zero_scale_difference": float(np.max(np.abs(g0_bar))),
        "full_scale_difference": float(np.max(np.abs(g1_bar - g_full))),
        "dot_support_violation": float(np.max(np.abs(gdot[outside]))) if outside.any() else 0.0,
        "decomposition": float(
            np.max(np.abs((kt_mu.get(KERNEL_BAR, a0) + kt_mu._cut()[:, None] * kt_mu._heat(a0)) - g_full))
        ),
    }


def richardson_commutation(
    ctx,
    tree,
    grid: TorusGrid,
    mu: float,
    h: float,
    eps: float,
    seed: int,
    char_values: dict[str, Fraction],
    g: PolyNonlinearity,
    f: PolyNonlinearity,
    amplitude: float = 5e-4,
) -> dict:
    """Central-difference check of the scale-derivative commutation.

    The h-halving error ratio is scale invariant and carries the consistency
    content; the inputs are normalized to the given sup-norm amplitude so the
    absolute error at the stated h reflects the quadratic remainder.
    """
    from .eval import E_ZERO, e_add, e_scale
    from .operators import scale_derivative
    from .trees import TreeVec

    xi = sample_noise(grid, eps, seed)
    xi = amplitude * xi / float(np.max(np.abs(xi)))
    phi = band_limited_profile(grid, seed + 1)
    phi = amplitude * phi / float(np.max(np.abs(phi)))
    expr = ctx.pi_r(tree)
    rhs_expr = E_ZERO
    for u, c in scale_derivative(TreeVec.lift(tree)).terms.items():
        rhs_expr = e_add(rhs_expr, e_scale(ctx.pi_r(u), c))

    def value(mu_val: float, e: Expr) -> np.ndarray:
        env = InterpretEnv(grid, build_kernels(grid, ctx.rule, mu_val), xi, phi, g, f, char_values)
        return interpret(e, env)

    exact = value(mu, rhs_expr)
    errors = []
    for hh in (h, h / 2):
        fd = (value(mu + hh, expr) - value(mu - hh, expr)) / (2 * hh)
        errors.append(float(np.max(np.abs(fd - exact))))
    ratio = errors[0] / errors[1] if errors[1] > 0 else float("inf")
    return {"h": h, "errors": errors, "ratio": ratio}


def check_localization(
    ctx,
    tree,
    grid: TorusGrid,
    mu: float,
    eps: float,
    seed: int,
    char_values: dict[str, Fraction],
    g: PolyNonlinearity,
    f: PolyNonlinearity,
) -> float:
    """Max-abs gap between the evaluation map and its localized form.

    Both sides are interpreted pointwise with the basepoint at the evaluation
    point; polynomial nonlinearities terminate every Taylor ladder, so the
    gap is pure floating-point noise.
    """
    from .eval import E_ZERO, e_add, e_term, fn_atom
    from .upsilon import upsilon

    xi = sample_noise(grid, eps, seed)
    xi = xi / float(np.max(np.abs(xi)))
    phi = band_limited_profile(grid, seed + 1)
    phi = 0.5 * phi / float(np.max(np.abs(phi)))
    kt = build_kernels(grid, ctx.rule, mu)
    env = InterpretEnv(grid, kt, xi, phi, g, f, char_values)
    lhs = interpret(ctx.pi_r(tree), env)

    rhs = grid.zeros()
    # localized form: node-polynomial insertions of the elementary
    # differential at the evaluation point times the local pre-model there
    budget = ctx.budget(tree)
    terms = []
    for dec, coeff in _mloc_alive(tree, ctx.rule, budget):
        ups = upsilon(dec, ctx.rule)
        if ups.is_zero():
            continue
        pre = ctx.pi_hat_diag(dec, "mu")
        terms.append((coeff, ups, pre))
    for coeff, ups, pre in terms:
        ups_expr = E_ZERO
        for (factors, fsyms), fc in ups.terms.items():
            ups_expr = e_add(ups_expr, e_term(tuple(fn_atom(x) for x in factors), fc, fsyms))
        # pointwise product: both factor fields live at the evaluation point,
        # and the pre-model's root monomials vanish on the diagonal, so no
        # per-point basepoint loop is needed
        f1 = interpret(ups_expr, env)
        f2 = interpret(pre, env)
        rhs = rhs + float(coeff) * f1 * f2
    return float(np.max(np.abs(lhs - rhs)))


def _mloc_alive(tree, r: Rule, budget: Fraction):
    """Node-polynomial insertions within the character's degree budget."""
    from .eval import _mloc_variants

    return _mloc_variants(tree, r, budget)
