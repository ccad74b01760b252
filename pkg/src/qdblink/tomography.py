"""Two-photon polarization state reconstruction.

Projective coincidence counts in the {HH, HV, VH, VV} basis are turned
into a 4x4 density matrix either by direct linear inversion (fast, may be
non-physical) or by maximum-likelihood estimation over the factorized
parameterization ``rho = T^dag T / tr(T^dag T)`` with lower-triangular T,
which guarantees a positive-semidefinite unit-trace result.  The
likelihood is Poissonian in the counts with the overall intensity
profiled out analytically.

Phase convention for the analyzer states (fixed so matrices are
comparable across implementations):

    D = (H + V)/sqrt(2)   A = (H - V)/sqrt(2)
    R = (H + iV)/sqrt(2)  L = (H - iV)/sqrt(2)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MleConvergenceError, ValidationError

_SQ2 = 1.0 / np.sqrt(2.0)
BASIS_VECTORS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "R": np.array([_SQ2, 1j * _SQ2], dtype=complex),
    "L": np.array([_SQ2, -1j * _SQ2], dtype=complex),
}


@dataclass(frozen=True)
class ProjectorSetting:
    """Analyzer bases for the two photons, each one of H V D A R L."""

    basis_1: str
    basis_2: str

    def __post_init__(self):
        for b in (self.basis_1, self.basis_2):
            if b not in BASIS_VECTORS:
                raise ValidationError(
                    f"unknown analyzer basis {b!r}; expected one of "
                    f"{sorted(BASIS_VECTORS)}")

    @property
    def name(self) -> str:
        return self.basis_1 + self.basis_2

    @property
    def is_canonical(self) -> bool:
        return self.name in _CANONICAL_NAMES


_CANONICAL_NAMES = ("HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL")

CANONICAL_SETTINGS = tuple(ProjectorSetting(n[0], n[1]) for n in _CANONICAL_NAMES)
FULL_SETTINGS = tuple(ProjectorSetting(a, b)
                      for a in "HVDARL" for b in "HVDARL")


@dataclass(frozen=True)
class CoincidenceRecord:
    setting: ProjectorSetting
    counts: int
    acquisition_time_s: float = 1.0

    def __post_init__(self):
        if self.counts < 0:
            raise ValidationError("counts must be >= 0")
        if self.acquisition_time_s <= 0:
            raise ValidationError("acquisition_time_s must be > 0")


def projector(setting: ProjectorSetting) -> np.ndarray:
    """Rank-1 projector |psi1 psi2><psi1 psi2| in the HH,HV,VH,VV basis."""
    psi = np.kron(BASIS_VECTORS[setting.basis_1], BASIS_VECTORS[setting.basis_2])
    return np.outer(psi, psi.conj())


@dataclass(frozen=True)
class DensityMatrix4:
    """4x4 Hermitian unit-trace two-photon polarization state.

    Construction enforces hermiticity and trace normalization to 1e-12;
    positivity is a separate property because linear inversion may yield
    (flagged) negative eigenvalues.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValidationError(f"expected a 4x4 matrix, got shape {m.shape}")
        if np.abs(m - m.conj().T).max() > 1e-12:
            raise ValidationError("matrix is not Hermitian to 1e-12")
        if abs(np.trace(m).real - 1.0) > 1e-12 or abs(np.trace(m).imag) > 1e-12:
            raise ValidationError("matrix trace differs from 1 by more than 1e-12")
        object.__setattr__(self, "matrix", m)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= -1e-9


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix4):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def check_physical(rho, eig_tol: float = 1e-9) -> np.ndarray:
    """Validate that rho is Hermitian, unit trace and PSD; returns the matrix."""
    m = _as_matrix(rho)
    if m.shape != (4, 4):
        raise ValidationError(f"expected a 4x4 matrix, got shape {m.shape}")
    if np.abs(m - m.conj().T).max() > 1e-10:
        raise ValidationError("state is not Hermitian")
    if abs(np.trace(m) - 1.0) > 1e-10:
        raise ValidationError("state trace is not 1")
    if np.linalg.eigvalsh(m)[0] < -eig_tol:
        raise ValidationError("state has a negative eigenvalue")
    return m


def bell_phi_plus() -> np.ndarray:
    """(|HH> + |VV>)/sqrt(2)."""
    return np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2.0)


def werner_state(p: float) -> np.ndarray:
    """p |phi+><phi+| + (1-p)/4 identity (physical for -1/3 <= p <= 1)."""
    if not -1.0 / 3.0 <= p <= 1.0:
        raise ValidationError(f"Werner parameter must be in [-1/3, 1], got {p}")
    psi = bell_phi_plus()
    return p * np.outer(psi, psi.conj()) + (1.0 - p) * np.eye(4) / 4.0


def _hermitian_basis():
    basis = []
    for i in range(4):
        e = np.zeros((4, 4), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(4):
        for j in range(i + 1, 4):
            e = np.zeros((4, 4), dtype=complex)
            e[i, j] = e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((4, 4), dtype=complex)
            e[i, j] = -1j
            e[j, i] = 1j
            basis.append(e)
    return np.array(basis)


_HERM_BASIS = _hermitian_basis()


def _design_matrix(projectors: np.ndarray) -> np.ndarray:
    # rows: settings, columns: Hermitian basis components
    return np.real(np.einsum("mij,kji->mk", projectors, _HERM_BASIS))


def _stack(records):
    settings = [r.setting for r in records]
    projs = np.array([projector(s) for s in settings])
    counts = np.array([r.counts for r in records], dtype=float)
    acq = np.array([r.acquisition_time_s for r in records], dtype=float)
    return settings, projs, counts, acq


def _linear_estimate(projs, counts) -> np.ndarray:
    """Least-squares Hermitian estimate from raw counts, trace-normalized."""
    design = _design_matrix(projs)
    if design.shape[0] == design.shape[1]:
        try:
            x = np.linalg.solve(design, counts)
        except np.linalg.LinAlgError as exc:
            raise ValidationError(f"singular tomography design matrix: {exc}") from exc
    else:
        x, *_ = np.linalg.lstsq(design, counts, rcond=None)
    rho = np.einsum("k,kij->ij", x, _HERM_BASIS)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValidationError("counts do not determine a positive-trace state")
    return rho / tr


@dataclass(frozen=True)
class LinearReconstruction:
    rho: DensityMatrix4
    min_eigenvalue: float
    negativity_flag: bool


def linear_reconstruct(records) -> LinearReconstruction:
    """Invert the canonical 16-setting linear map count -> state.

    Requires exactly the canonical settings (any order).  The result is
    Hermitian with unit trace but may carry negative eigenvalues, reported
    through ``negativity_flag`` (threshold -1e-6).
    """
    names = [r.setting.name for r in records]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate settings make the design matrix singular")
    missing = sorted(set(_CANONICAL_NAMES) - set(names))
    extra = sorted(set(names) - set(_CANONICAL_NAMES))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing canonical settings: {', '.join(missing)}")
        if extra:
            parts.append(f"non-canonical settings: {', '.join(extra)}")
        raise ValidationError("; ".join(parts))
    _, projs, counts, _ = _stack(records)
    if counts.sum() <= 0:
        raise ValidationError("total count is zero")
    rho = _linear_estimate(projs, counts)
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    return LinearReconstruction(
        rho=DensityMatrix4(rho),
        min_eigenvalue=min_eig,
        negativity_flag=min_eig < -1e-6,
    )


def _physicalize(rho: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the trace."""
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals, 0.0, None)
    if vals.sum() <= 0:
        return np.eye(4, dtype=complex) / 4.0
    rho = (vecs * vals) @ vecs.conj().T
    return rho / np.trace(rho).real


def _lower_factor(g: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dag T = g for PSD g (ridge-stabilized)."""
    flip = np.eye(4)[::-1]
    ridge = 1e-12 * np.trace(g).real * np.eye(4)
    c = np.linalg.cholesky(flip @ (g + ridge) @ flip)
    return (flip @ c @ flip).conj().T


# flat positions of the diagonal and of the strict lower triangle (row
# major, the parameter layout: 4 real diagonals then re/im pairs)
_DIAG_POS = np.array([0, 5, 10, 15])
_LOWER_POS = np.array([4, 8, 9, 12, 13, 14])
_EYE4 = np.eye(4)


def _params_to_t(theta: np.ndarray) -> np.ndarray:
    flat = np.zeros(16, dtype=complex)
    flat[_DIAG_POS] = theta[:4]
    flat[_LOWER_POS] = theta[4::2] + 1j * theta[5::2]
    return flat.reshape(4, 4)


def _t_to_params(t: np.ndarray) -> np.ndarray:
    flat = t.reshape(16)
    theta = np.empty(16)
    theta[:4] = flat[_DIAG_POS].real
    theta[4::2] = flat[_LOWER_POS].real
    theta[5::2] = flat[_LOWER_POS].imag
    return theta


def _loglike_and_grad(theta, projs_flat, scaled_proj_sum, log_acq_dot_counts,
                      counts, acq_scale, n_total):
    t = _params_to_t(theta)
    g = t.conj().T @ t
    tr_g = g.ravel()[_DIAG_POS].sum().real
    rho = g / tr_g
    # tr(P rho) for all settings at once: P_flat . (rho^T)_flat
    p = np.real(projs_flat @ rho.T.reshape(16))
    p = np.maximum(p, 1e-12)
    weighted = float(acq_scale @ p)
    ll = float(counts @ np.log(p)) + log_acq_dot_counts \
        - n_total * np.log(weighted)

    w = counts / p
    big_w = (w @ projs_flat).reshape(4, 4) \
        - (n_total / weighted) * scaled_proj_sum
    c = (rho @ big_w).ravel()[_DIAG_POS].sum().real
    v = (big_w - c * _EYE4) / tr_g
    m_flat = (t @ v).ravel()
    grad = np.empty(16)
    grad[:4] = 2.0 * m_flat[_DIAG_POS].real
    grad[4::2] = 2.0 * m_flat[_LOWER_POS].real
    grad[5::2] = 2.0 * m_flat[_LOWER_POS].imag
    return ll, grad, rho


@dataclass(frozen=True)
class MleReconstruction:
    rho: DensityMatrix4
    log_likelihood: float
    log_likelihood_trace: np.ndarray
    n_iterations: int
    converged: bool


def mle_reconstruct(records, tol: float = 1e-10,
                    max_iterations: int = 10000) -> MleReconstruction:
    """Maximum-likelihood density matrix from projective coincidence counts.

    Gradient ascent with backtracking line search on the 16 real
    parameters of the lower-triangular factor, seeded from the
    physicalized linear estimate.  The accepted log-likelihood sequence is
    strictly increasing; iteration stops once an accepted step improves it
    by less than ``tol``.
    """
    records = list(records)
    if len(records) < 16:
        raise ValidationError(
            f"need at least 16 settings for state reconstruction, got {len(records)}")
    names = [r.setting.name for r in records]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate settings in tomography records")
    _, projs, counts, acq = _stack(records)
    if counts.sum() <= 0:
        raise ValidationError("total count is zero")
    if np.linalg.matrix_rank(_design_matrix(projs)) < 16:
        raise ValidationError("settings are not informationally complete")

    acq_scale = acq / acq.mean()
    n_total = counts.sum()
    seed_rho = _physicalize(_linear_estimate(projs, counts))
    theta = _t_to_params(_lower_factor(seed_rho))

    projs_flat = np.ascontiguousarray(projs.reshape(len(records), 16))
    scaled_proj_sum = (acq_scale @ projs_flat).reshape(4, 4)
    log_acq_dot_counts = float(counts @ np.log(acq_scale))
    args = (projs_flat, scaled_proj_sum, log_acq_dot_counts, counts,
            acq_scale, n_total)

    # backtracking-line-search ascent; conjugate-gradient momentum
    # (Polak-Ribiere, reset on non-ascent directions) keeps the iteration
    # count manageable when small eigenvalues make the problem stiff
    ll, grad, rho = _loglike_and_grad(theta, *args)
    trace = [ll]
    direction = grad.copy()
    step = 1.0 / max(np.linalg.norm(grad), 1.0)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        if grad @ direction <= 0.0:
            direction = grad.copy()
        improved = False
        while step > 1e-300:
            cand = theta + step * direction
            ll_c, grad_c, rho_c = _loglike_and_grad(cand, *args)
            if ll_c > ll:
                improved = True
                break
            step *= 0.5
        if not improved:
            if not np.array_equal(direction, grad):
                direction = grad.copy()  # retry along the raw gradient
                step = 1.0 / max(np.linalg.norm(grad), 1.0)
                continue
            converged = True  # no ascent direction left at float precision
            break
        delta = ll_c - ll
        gg = grad @ grad
        beta_pr = max(0.0, grad_c @ (grad_c - grad) / gg) if gg > 0 else 0.0
        direction = grad_c + beta_pr * direction
        theta, ll, grad, rho = cand, ll_c, grad_c, rho_c
        trace.append(ll)
        step *= 1.3
        if delta < tol:
            converged = True
            break

    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    result = MleReconstruction(
        rho=DensityMatrix4(rho),
        log_likelihood=float(ll),
        log_likelihood_trace=np.asarray(trace),
        n_iterations=iterations,
        converged=converged,
    )
    if not converged:
        raise MleConvergenceError(
            f"likelihood maximisation did not converge in {max_iterations} "
            "iterations", last_result=result)
    return result


def fidelity(rho, target=None) -> float:
    """Overlap <target|rho|target> with a pure target state.

    Defaults to the Bell state (|HH> + |VV>)/sqrt(2).  The imaginary part
    must vanish (guard against non-Hermitian input).
    """
    m = _as_matrix(rho)
    if np.abs(m - m.conj().T).max() > 1e-10:
        raise ValidationError("fidelity needs a Hermitian state")
    if abs(np.trace(m) - 1.0) > 1e-8:
        raise ValidationError("fidelity needs a unit-trace state")
    psi = bell_phi_plus() if target is None else np.asarray(target, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    value = psi.conj() @ m @ psi
    if abs(value.imag) > 1e-10:
        raise ValidationError("fidelity has a non-vanishing imaginary part")
    return float(value.real)


@dataclass(frozen=True)
class ResampleErrors:
    fidelity_mean: float
    fidelity_sigma: float
    n_resamples: int
    n_dropped: int
    drop_rate: float
    fidelities: np.ndarray


def resample_errors(records, n_resamples: int, seed: int = 0,
                    target=None, tol: float = 1e-10) -> ResampleErrors:
    """Poisson-resampled fidelity statistics of the MLE reconstruction.

    Every count is redrawn from a Poisson distribution with the observed
    value as mean, the state is re-reconstructed and the fidelity
    recomputed.  Failed reconstructions are dropped and reported through
    ``drop_rate``.
    """
    if n_resamples < 100:
        raise ValidationError(
            f"need at least 100 resamples for stable errors, got {n_resamples}")
    records = list(records)
    rng = np.random.default_rng(seed)
    counts = np.array([r.counts for r in records], dtype=float)
    fidelities = []
    dropped = 0
    for _ in range(n_resamples):
        new_counts = rng.poisson(counts)
        resampled = [
            CoincidenceRecord(setting=r.setting, counts=int(c),
                              acquisition_time_s=r.acquisition_time_s)
            for r, c in zip(records, new_counts)
        ]
        try:
            rec = mle_reconstruct(resampled, tol=tol)
            fidelities.append(fidelity(rec.rho, target=target))
        except (MleConvergenceError, ValidationError):
            dropped += 1
    if not fidelities:
        raise MleConvergenceError("every resample failed to reconstruct")
    fid = np.asarray(fidelities)
    return ResampleErrors(
        fidelity_mean=float(fid.mean()),
        fidelity_sigma=float(fid.std(ddof=1)) if fid.size > 1 else 0.0,
        n_resamples=n_resamples,
        n_dropped=dropped,
        drop_rate=dropped / n_resamples,
        fidelities=fid,
    )


__all__ = [
    "BASIS_VECTORS",
    "CANONICAL_SETTINGS",
    "FULL_SETTINGS",
    "ProjectorSetting",
    "CoincidenceRecord",
    "DensityMatrix4",
    "LinearReconstruction",
    "MleReconstruction",
    "ResampleErrors",
    "projector",
    "check_physical",
    "bell_phi_plus",
    "werner_state",
    "linear_reconstruct",
    "mle_reconstruct",
    "fidelity",
    "resample_errors",
]
