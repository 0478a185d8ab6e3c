"""Linear-quadratic reduction: moment ODEs, P/nu/tau systems and block Riccati equations.

Indexing convention: population matrices are stored with a leading axis of
length 2 (``A[i]``), pair matrices with two leading axes (``Abar[i, j]`` is the
coefficient of the mean of population ``j`` in the drift of population ``i``).
Everything is 0-based here; the public population labels elsewhere are 1, 2.

Two regimes are supported. ``"CMFC"`` carries the coupling integral of the
common control problem in the adjoint equation; ``"CMFG"`` (the mean field
game, shared by the Nash variant) does not.

The stacked Riccati equation for ``K`` is integrated as a full ``2n x 2n``
matrix: its off-diagonal blocks do not vanish, but its action on the stacked
mean reproduces ``K^i mbar_i = P^i mbar_i + nu^i`` for each population.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ParameterError

REGIMES = ("CMFC", "CMFG")
_POP_KEYS = ("A", "B", "Q", "R", "QT")
_PAIR_KEYS = ("Abar", "Qbar", "S", "QbarT", "ST")


def _regime(regime):
    key = str(regime).upper()
    if key in ("MFG", "NMFG"):
        key = "CMFG"
    if key not in REGIMES:
        raise DomainError(f"LQ regime must be one of {REGIMES}, got {regime!r}")
    return key


def _entry(value, shape):
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(*shape)
    if a.shape != shape:
        raise ParameterError(f"expected a {shape} matrix, got shape {a.shape}")
    return a


def _per_pop(value, shape):
    a = np.asarray(value, dtype=float) if not isinstance(value, (list, tuple)) else None
    if a is not None and (a.ndim == 0 or a.shape == shape):
        return np.stack([_entry(value, shape)] * 2)
    if a is not None and a.shape == (2,) + shape:
        return a.copy()
    if len(value) != 2:
        raise ParameterError("per-population entries need one value per population")
    return np.stack([_entry(v, shape) for v in value])


def _per_pair(value, shape):
    a = np.asarray(value, dtype=float) if not isinstance(value, (list, tuple)) else None
    if a is not None and a.ndim == 0:
        return np.stack([np.stack([_entry(value, shape)] * 2)] * 2)
    if a is not None and a.shape == (2, 2) + shape:
        return a.copy()
    if len(value) != 2 or any(len(row) != 2 for row in value):
        raise ParameterError("pair entries need a 2x2 layout, one value per (i, j)")
    return np.stack([np.stack([_entry(v, shape) for v in row]) for row in value])


def _check_psd(name, mats, definite=False):
    for idx in np.ndindex(mats.shape[:-2]):
        m = mats[idx]
        if not np.allclose(m, m.T, atol=1e-12, rtol=0):
            raise ParameterError(f"{name}{list(idx)} must be symmetric")
        eig = np.linalg.eigvalsh(0.5 * (m + m.T))
        if definite and eig.min() <= 0:
            raise ParameterError(f"{name}{list(idx)} must be positive definite")
        if not definite and eig.min() < -1e-12:
            raise ParameterError(f"{name}{list(idx)} must be positive semi-definite")


@dataclass(frozen=True)
class LQParams:
    """Constant coefficients of a two-population LQ model.

    Use :meth:`create` to build from scalars or nested lists; scalars are
    broadcast as multiples of the identity.
    """

    n: int
    d: int
    A: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    S: np.ndarray
    QT: np.ndarray
    QbarT: np.ndarray
    ST: np.ndarray
    sigma: np.ndarray
    T: float
    mbar0: np.ndarray = field(default=None)

    @classmethod
    def create(
        cls,
        n=1,
        d=1,
        *,
        A=0.0,
        Abar=0.0,
        B=1.0,
        Q=0.0,
        Qbar=0.0,
        R=1.0,
        S=0.0,
        QT=0.0,
        QbarT=0.0,
        ST=0.0,
        sigma=0.0,
        T=1.0,
        mbar0=None,
    ):
        nn = (n, n)
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (2,)).copy()
        if mbar0 is None:
            m0 = np.zeros((2, n))
        else:
            m0 = np.asarray(mbar0, dtype=float).reshape(2, n)
        return cls(
            n=n,
            d=d,
            A=_per_pop(A, nn),
            Abar=_per_pair(Abar, nn),
            B=_per_pop(B, (n, d)),
            Q=_per_pop(Q, nn),
            Qbar=_per_pair(Qbar, nn),
            R=_per_pop(R, (d, d)),
            S=_per_pair(S, nn),
            QT=_per_pop(QT, nn),
            QbarT=_per_pair(QbarT, nn),
            ST=_per_pair(ST, nn),
            sigma=sig,
            T=float(T),
            mbar0=m0,
        )

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ParameterError("state and control dimensions must be >= 1")
        if not self.T > 0:
            raise ParameterError("horizon T must be positive")
        if np.any(np.asarray(self.sigma) < 0):
            raise ParameterError("sigma must be non-negative")
        _check_psd("Q", self.Q)
        _check_psd("Qbar", self.Qbar)
        _check_psd("QT", self.QT)
        _check_psd("QbarT", self.QbarT)
        _check_psd("R", self.R, definite=True)
        if self.mbar0 is None:
            object.__setattr__(self, "mbar0", np.zeros((2, self.n)))

    def with_mbar0(self, mbar0):
        kw = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kw["mbar0"] = np.asarray(mbar0, dtype=float).reshape(2, self.n)
        return LQParams(**kw)

    @property
    def control_gain(self):
        """B^i R^{i,-1} B^{i,*}, shape (2, n, n)."""
        return np.stack([self.B[i] @ np.linalg.solve(self.R[i], self.B[i].T) for i in range(2)])

    @property
    def diffusion(self):
        """a^i = sigma_i^2 / 2 times the identity, shape (2, n, n)."""
        return np.stack([0.5 * self.sigma[i] ** 2 * np.eye(self.n) for i in range(2)])


# ---------------------------------------------------------------------------
# block Riccati data


@dataclass(frozen=True)
class RiccatiBlocks:
    """Stacked ``2n x 2n`` coefficients of the K-equation of one regime."""

    regime: str
    B: np.ndarray
    A: np.ndarray
    Abar: np.ndarray
    G: np.ndarray
    G_T: np.ndarray

    def rhs(self, K):
        """Time derivative of K."""
        if self.regime == "CMFC":
            M = self.A + self.Abar
            return K @ self.B @ K - M.T @ K - K @ M + self.G
        return K @ self.B @ K - self.A.T @ K - K @ self.A - K @ self.Abar + self.G


def _blockdiag(mats):
    n = mats.shape[-1]
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = mats[0]
    out[n:, n:] = mats[1]
    return out


def _blocks(pair):
    n = pair.shape[-1]
    out = np.zeros((2 * n, 2 * n))
    for i in range(2):
        for j in range(2):
            out[i * n : (i + 1) * n, j * n : (j + 1) * n] = pair[i, j]
    return out


def _g_cmfc(Q, Qbar, S):
    n = Q.shape[-1]
    G = np.zeros((2 * n, 2 * n))
    for i in range(2):
        o = 1 - i
        gi = -Q[i] - Qbar[i, 0] - Qbar[i, 1] + Qbar[i, i] @ S[i, i] + S[i, i].T @ Qbar[i, i]
        for j in range(2):
            gi = gi - S[j, i].T @ Qbar[j, i] @ S[j, i]
        G[i * n : (i + 1) * n, i * n : (i + 1) * n] = gi
        G[i * n : (i + 1) * n, o * n : (o + 1) * n] = S[o, i].T @ Qbar[o, i] + Qbar[i, o] @ S[i, o]
    return G


def _g_cmfg(Q, Qbar, S, variant):
    n = Q.shape[-1]
    G = np.zeros((2 * n, 2 * n))
    for i in range(2):
        o = 1 - i
        if variant == "displayed":
            own = 0.5 * (Qbar[i, i] @ S[i, i] + S[i, i].T @ Qbar[i, i])
            cross = 0.5 * (Qbar[i, o] @ S[i, o] + S[i, o].T @ Qbar[i, o])
        else:
            own = Qbar[i, i] @ S[i, i]
            cross = Qbar[i, o] @ S[i, o]
        G[i * n : (i + 1) * n, i * n : (i + 1) * n] = -Q[i] - Qbar[i, 0] - Qbar[i, 1] + own
        G[i * n : (i + 1) * n, o * n : (o + 1) * n] = cross
    return G


def build_riccati_blocks(regime, params, variant="displayed"):
    """Assemble the stacked coefficients of the regime's K-Riccati equation.

    For CMFG, ``variant="displayed"`` uses the symmetrized S-terms
    ``(Qbar S + S* Qbar) / 2``; ``variant="derived"`` keeps the unsymmetrized
    ``Qbar S`` that falls out of differentiating ``K mbar``. They coincide for
    scalar states. The terminal block is signed so that ``K_T mbar_T`` equals
    ``P_T mbar_T + nu_T``.
    """
    regime = _regime(regime)
    if variant not in ("displayed", "derived"):
        raise DomainError(f"unknown G variant {variant!r}")
    p = params
    if regime == "CMFC":
        G = _g_cmfc(p.Q, p.Qbar, p.S)
        G_T = -_g_cmfc(p.QT, p.QbarT, p.ST)
    else:
        G = _g_cmfg(p.Q, p.Qbar, p.S, variant)
        G_T = -_g_cmfg(p.QT, p.QbarT, p.ST, variant)
    return RiccatiBlocks(
        regime=regime,
        B=_blockdiag(p.control_gain),
        A=_blockdiag(p.A),
        Abar=_blocks(p.Abar),
        G=G,
        G_T=G_T,
    )


# ---------------------------------------------------------------------------
# ODE integration


def _rk4_backward(f, y_T, nt, dt):
    ys = np.empty((nt + 1,) + np.shape(y_T))
    ys[nt] = y_T
    h = -dt
    y = np.array(y_T, dtype=float)
    for k in range(nt, 0, -1):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"Riccati integration blew up at step {k - 1}")
        ys[k - 1] = y
    return ys


def _hermite_mid(y, dy, dt):
    """Cubic Hermite value at interval midpoints from nodal values and slopes."""
    return 0.5 * (y[:-1] + y[1:]) + (dt / 8.0) * (dy[:-1] - dy[1:])


def _p_rhs(params):
    A, Bg = params.A, params.control_gain
    Qtot = params.Q + params.Qbar[:, 0] + params.Qbar[:, 1]
    At = np.swapaxes(A, -1, -2)

    def f(P):
        return -(P @ A + At @ P - P @ Bg @ P + Qtot)

    return f


class _LinearSystem:
    """Stacked (mbar, nu) dynamics: d/dt [m; nu] = M(t) [m; nu], nu_T = L m_T."""

    def __init__(self, regime, params, P):
        self.regime = regime
        self.params = params
        self.n = n = params.n
        self.N = N = 2 * n
        p = params
        Bg = p.control_gain
        nt1 = P.shape[0]
        M = np.zeros((nt1, 2 * N, 2 * N))
        for i in range(2):
            si = slice(i * n, (i + 1) * n)
            ni = slice(N + i * n, N + (i + 1) * n)
            for j in range(2):
                sj = slice(j * n, (j + 1) * n)
                nj = slice(N + j * n, N + (j + 1) * n)
                # moments
                M[:, si, sj] += p.Abar[i, j]
                # adjoint linear coefficient from the Hamiltonian
                M[:, ni, sj] -= P[:, i] @ p.Abar[i, j] - p.Qbar[i, j] @ p.S[i, j]
                if regime == "CMFC":
                    # coupling integral: sum over k of Abar[k,i]^T (P_k m_k + nu_k)
                    #   - S[k,i]^T Qbar[k,i] (m_k - S[k,i] m_i)
                    k = j
                    M[:, ni, sj] -= p.Abar[k, i].T @ P[:, k] - p.S[k, i].T @ p.Qbar[k, i]
                    M[:, ni, si] -= p.S[k, i].T @ p.Qbar[k, i] @ p.S[k, i]
                    M[:, ni, nj] -= p.Abar[k, i].T
            M[:, si, si] += p.A[i] - Bg[i] @ P[:, i]
            M[:, si, ni] -= Bg[i]
            M[:, ni, ni] -= p.A[i].T - P[:, i] @ Bg[i]
        self.M = M
        L = np.zeros((N, N))
        for i in range(2):
            si = slice(i * n, (i + 1) * n)
            for j in range(2):
                sj = slice(j * n, (j + 1) * n)
                L[si, sj] -= p.QbarT[i, j] @ p.ST[i, j]
                if regime == "CMFC":
                    k = j
                    L[si, sj] -= p.ST[k, i].T @ p.QbarT[k, i]
                    L[si, si] += p.ST[k, i].T @ p.QbarT[k, i] @ p.ST[k, i]
        self.L = L

    def with_midpoints(self, M_mid):
        self.M_mid = M_mid
        return self


def _system_midpoints(regime, params, P, dP, dt):
    P_mid = _hermite_mid(P, dP, dt)
    nodes = _LinearSystem(regime, params, P)
    mids = _LinearSystem(regime, params, P_mid)
    return nodes.with_midpoints(mids.M)


def _picard(sys, m0, nt, dt, tol=1e-10, max_iter=10_000):
    N = sys.N
    M, Mm = sys.M, sys.M_mid
    Mmm, Mmn = M[:, :N, :N], M[:, :N, N:]
    Mnm, Mnn = M[:, N:, :N], M[:, N:, N:]
    Hmm, Hmn = Mm[:, :N, :N], Mm[:, :N, N:]
    Hnm, Hnn = Mm[:, N:, :N], Mm[:, N:, N:]
    m = np.tile(m0, (nt + 1, 1))
    nu = np.zeros((nt + 1, N))
    prev_change = np.inf
    growth = 0
    for it in range(1, max_iter + 1):
        dnu = np.einsum("kab,kb->ka", Mnm, m) + np.einsum("kab,kb->ka", Mnn, nu)
        nu_mid = _hermite_mid(nu, dnu, dt)
        m_new = np.empty_like(m)
        m_new[0] = m0
        y = m0.copy()
        h = dt
        for k in range(nt):
            k1 = Mmm[k] @ y + Mmn[k] @ nu[k]
            k2 = Hmm[k] @ (y + 0.5 * h * k1) + Hmn[k] @ nu_mid[k]
            k3 = Hmm[k] @ (y + 0.5 * h * k2) + Hmn[k] @ nu_mid[k]
            k4 = Mmm[k + 1] @ (y + h * k3) + Mmn[k + 1] @ nu[k + 1]
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            m_new[k + 1] = y
        dm = np.einsum("kab,kb->ka", Mmm, m_new) + np.einsum("kab,kb->ka", Mmn, nu)
        m_mid = _hermite_mid(m_new, dm, dt)
        nu_new = np.empty_like(nu)
        y = sys.L @ m_new[nt]
        nu_new[nt] = y
        h = -dt
        for k in range(nt, 0, -1):
            j = k - 1
            k1 = Mnn[k] @ y + Mnm[k] @ m_new[k]
            k2 = Hnn[j] @ (y + 0.5 * h * k1) + Hnm[j] @ m_mid[j]
            k3 = Hnn[j] @ (y + 0.5 * h * k2) + Hnm[j] @ m_mid[j]
            k4 = Mnn[j] @ (y + h * k3) + Mnm[j] @ m_new[j]
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            nu_new[j] = y
        change = max(np.max(np.abs(m_new - m)), np.max(np.abs(nu_new - nu)))
        m, nu = m_new, nu_new
        if not np.isfinite(change):
            return None, None, it
        if change <= tol:
            return m, nu, it
        growth = growth + 1 if change > prev_change else 0
        if growth >= 50:
            return None, None, it
        prev_change = change
    return None, None, max_iter


def _two_point(sys, m0, nt, dt):
    N = sys.N
    M, Mm = sys.M, sys.M_mid
    Phi = np.empty((nt + 1, 2 * N, 2 * N))
    Y = np.eye(2 * N)
    Phi[0] = Y
    h = dt
    for k in range(nt):
        k1 = M[k] @ Y
        k2 = Mm[k] @ (Y + 0.5 * h * k1)
        k3 = Mm[k] @ (Y + 0.5 * h * k2)
        k4 = M[k + 1] @ (Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        Phi[k + 1] = Y
    PT = Phi[nt]
    L = sys.L
    lhs = PT[N:, N:] - L @ PT[:N, N:]
    rhs = -(PT[N:, :N] - L @ PT[:N, :N]) @ m0
    try:
        nu0 = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        raise NumericalError("two-point boundary system for (mbar, nu) is singular") from None
    z0 = np.concatenate([m0, nu0])
    z = Phi @ z0
    return z[:, :N], z[:, N:]


@dataclass
class RiccatiState:
    """Trajectories of the LQ reduction on a uniform time mesh."""

    regime: str
    params: LQParams
    t: np.ndarray
    P: np.ndarray  # (nt+1, 2, n, n)
    nu: np.ndarray  # (nt+1, 2, n)
    tau: np.ndarray  # (nt+1, 2)
    mbar: np.ndarray  # (nt+1, 2, n)
    K: np.ndarray  # (nt+1, 2n, 2n), stacked Riccati solution
    method: str = "picard"
    picard_iterations: int = 0
    k_ill_defined: bool = False
    nu_relation_residual: float = np.nan
    nu_relation_residual_alt: float = np.nan
    blocks: RiccatiBlocks = None

    @property
    def nt(self):
        return self.t.shape[0] - 1

    @property
    def dt(self):
        return self.t[1] - self.t[0]

    def symmetry_defect(self):
        """max over time of ||K - K^T||_max."""
        return float(np.max(np.abs(self.K - np.swapaxes(self.K, -1, -2))))

    def block_gains(self):
        """Per-population scalar gains K^i = (K mbar)_i / mbar_i; n = 1 only."""
        if self.params.n != 1:
            raise DomainError("per-population gains are defined by K mbar only when n = 1")
        if self.k_ill_defined:
            raise NumericalError("a first moment vanishes on the mesh; K^i is ill-defined")
        m = self.mbar[:, :, 0]
        Km = np.einsum("kab,kb->ka", self.K, m)
        return Km / m

    def gradient_means(self):
        """Stacked P^i mbar_i + nu^i, i.e. the integral of Du_i against m_i."""
        return np.einsum("kiab,kib->kia", self.P, self.mbar) + self.nu


def _nu_relation(K, P, nu, mbar):
    nt1 = K.shape[0]
    m = mbar.reshape(nt1, -1)
    lhs = np.einsum("kab,kb->ka", K, m)
    rhs = (np.einsum("kiab,kib->kia", P, mbar) + nu).reshape(nt1, -1)
    return float(np.max(np.abs(lhs - rhs)))


def integrate_lq(regime, params, nt, *, picard_tol=1e-10, picard_max_iter=10_000):
    """Integrate the P/nu/tau/mbar system and the stacked K-Riccati equation with RK4.

    Steps: P backward; the linear forward-backward (mbar, nu) system by Picard
    sweeps (two-point linear solve if Picard does not contract); tau backward;
    K from its own Riccati equation, cross-checked against ``K mbar = P mbar + nu``.
    """
    regime = _regime(regime)
    if nt < 10:
        raise DomainError("integrate_lq needs nt >= 10")
    p = params
    n = p.n
    dt = p.T / nt
    t = np.linspace(0.0, p.T, nt + 1)

    f_p = _p_rhs(p)
    P_T = p.QT + p.QbarT[:, 0] + p.QbarT[:, 1]
    P = _rk4_backward(f_p, P_T, nt, dt)
    dP = np.stack([f_p(Pk) for Pk in P])

    sys = _system_midpoints(regime, p, P, dP, dt)
    m0 = p.mbar0.reshape(-1)
    m, nu, iters = _picard(sys, m0, nt, dt, tol=picard_tol, max_iter=picard_max_iter)
    method = "picard"
    if m is None:
        m, nu = _two_point(sys, m0, nt, dt)
        method = "two_point"

    mbar = m.reshape(nt + 1, 2, n)
    nu_p = nu.reshape(nt + 1, 2, n)

    # tau: integrand does not involve tau, so RK4 reduces to Simpson's rule
    z = np.concatenate([m, nu], axis=1)
    dz = np.einsum("kab,kb->ka", sys.M, z)
    z_mid = _hermite_mid(z, dz, dt)
    N = 2 * n
    P_mid = _hermite_mid(P, dP, dt)
    g_nodes = _tau_integrand(p, P, mbar, nu_p)
    g_mid = _tau_integrand(
        p, P_mid, z_mid[:, :N].reshape(nt, 2, n), z_mid[:, N:].reshape(nt, 2, n)
    )
    tau = np.empty((nt + 1, 2))
    Sm_T = np.einsum("ijab,jb->ija", p.ST, mbar[nt])
    tau[nt] = 0.5 * np.einsum("ija,ijab,ijb->i", Sm_T, p.QbarT, Sm_T)
    for k in range(nt, 0, -1):
        tau[k - 1] = tau[k] + (dt / 6.0) * (g_nodes[k] + 4.0 * g_mid[k - 1] + g_nodes[k - 1])

    blocks = build_riccati_blocks(regime, p)
    K = _rk4_backward(blocks.rhs, blocks.G_T, nt, dt)

    state = RiccatiState(
        regime=regime,
        params=p,
        t=t,
        P=P,
        nu=nu_p,
        tau=tau,
        mbar=mbar,
        K=K,
        method=method,
        picard_iterations=iters,
        k_ill_defined=bool(np.any(np.linalg.norm(mbar, axis=-1) < 1e-12)),
        blocks=blocks,
    )
    state.nu_relation_residual = _nu_relation(K, P, nu_p, mbar)
    if regime == "CMFG":
        alt = build_riccati_blocks(regime, p, variant="derived")
        K_alt = _rk4_backward(alt.rhs, alt.G_T, nt, dt)
        state.nu_relation_residual_alt = _nu_relation(K_alt, P, nu_p, mbar)
    return state


def _tau_integrand(p, P, mbar, nu):
    """-(d tau / dt): Tr(a P) + nu.Abar m - nu B R^-1 B* nu / 2 + (S m)* Qbar (S m) / 2."""
    a = p.diffusion
    Bg = p.control_gain
    tr = np.einsum("iab,kiba->ki", a, P)
    drift = np.einsum("kia,ijab,kjb->ki", nu, p.Abar, mbar)
    ctrl = 0.5 * np.einsum("kia,iab,kib->ki", nu, Bg, nu)
    Sm = np.einsum("ijab,kjb->kija", p.S, mbar)
    state = 0.5 * np.einsum("kija,ijab,kijb->ki", Sm, p.Qbar, Sm)
    return tr + drift - ctrl + state


def riccati_residual(regime, params, K_traj, nt=None, variant="displayed"):
    """Max-norm mismatch between a finite-difference dK/dt and the Riccati right-hand side.

    Uses the fourth-order central stencil on the interior of the mesh.
    """
    regime = _regime(regime)
    K_traj = np.asarray(K_traj, dtype=float)
    if nt is None:
        nt = K_traj.shape[0] - 1
    if K_traj.shape[0] != nt + 1:
        raise DomainError("K trajectory length does not match nt")
    dt = params.T / nt
    blocks = build_riccati_blocks(regime, params, variant=variant)
    if nt >= 4:
        dK = (-K_traj[4:] + 8 * K_traj[3:-1] - 8 * K_traj[1:-3] + K_traj[:-4]) / (12 * dt)
        mid = K_traj[2:-2]
    else:
        dK = (K_traj[2:] - K_traj[:-2]) / (2 * dt)
        mid = K_traj[1:-1]
    rhs = np.stack([blocks.rhs(Kk) for Kk in mid])
    return float(np.max(np.abs(dK - rhs)))


def reconstruct_value(state, x, t, i):
    """u_i(x, t) = x* P x / 2 + x* nu + tau, linearly interpolated in time.

    For ``n == 1`` ``x`` may be an array of points.
    """
    if i not in (1, 2):
        raise DomainError(f"population index must be 1 or 2, got {i!r}")
    k = i - 1
    tt = state.t
    if not tt[0] - 1e-12 <= t <= tt[-1] + 1e-12:
        raise DomainError(f"t={t} outside [0, {tt[-1]}]")
    P = np.stack([np.interp(t, tt, state.P[:, k, a, b]) for a in range(state.params.n) for b in range(state.params.n)])
    n = state.params.n
    P = P.reshape(n, n)
    nu = np.array([np.interp(t, tt, state.nu[:, k, a]) for a in range(n)])
    tau = float(np.interp(t, tt, state.tau[:, k]))
    x = np.asarray(x, dtype=float)
    if n == 1:
        return 0.5 * P[0, 0] * x * x + nu[0] * x + tau
    if x.shape[-1] != n:
        raise DomainError(f"x must have trailing dimension {n}")
    return 0.5 * np.einsum("...a,ab,...b->...", x, P, x) + x @ nu + tau
