"""
Method-of-moments forward solver for the 2-D TM volume integral equation.

Pulse basis on square cells, point matching at cell centres, and Richmond's
equal-area-disk closed forms for the cell integrals

    Gd[m, n] = k0^2 * integral over cell n of G(r_m, r') dr',   G = H0^(2)(k0 r) / 4j
    off-diagonal: -(j pi k0 a / 2) J1(k0 a) H0^(2)(k0 |r_m - r_n|)
    diagonal:     -(j pi k0 a / 2) H1^(2)(k0 a) - 1

The "-1" is part of the exact disk integral and stays inside Gd. With G solving
(lap + k0^2) G = -delta, the frozen convention is

    (I - Gd diag(tau)) E_tot = E_inc,        E_sca = Gr diag(E_tot) tau

Time dependence exp(+jwt); fields are returned as complex values and amplitudes.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, bicgstab

from . import special
from .exceptions import ConfigurationError, DomainError, GeometryError, OracleError, ShapeError, SolverError
from .scene import image_to_contrast, make_array_layout, make_grid
from .toeplitz import BlockToeplitzOperator

logger = logging.getLogger(__name__)

GREEN_CONVENTION = 'G=H0^(2)(k0 r)/4j; (I - Gd diag(tau)) E_tot = E_inc; E_sca = Gr diag(E_tot) tau; exp(+jwt)'
DENSE_GRID_LIMIT = 32
SOLVER_METHODS = ('auto', 'dense', 'fft')
MAX_RESTARTS = 3
MIE_MAX_ORDER = 400
MIE_ORDER_STEP = 5


@dataclass(frozen=True)
class SolverOptions:
    method: str = 'auto'
    tolerance: float = 1e-8
    max_iterations: int = 2000

    def __post_init__(self):
        if self.method not in SOLVER_METHODS:
            raise ConfigurationError(f"solver method must be one of {', '.join(SOLVER_METHODS)} (got {self.method!r})")
        if not 0 < self.tolerance < 1:
            raise ConfigurationError(f"solver tolerance must lie in (0, 1) (got {self.tolerance})")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1 (got {self.max_iterations})")

    def resolve(self, grid_n):
        if self.method != 'auto':
            return self.method
        return 'dense' if grid_n <= DENSE_GRID_LIMIT else 'fft'

    def as_dict(self):
        return {'method': self.method, 'tolerance': self.tolerance, 'max_iterations': self.max_iterations}


@dataclass
class ComplexFieldVector:
    values: np.ndarray
    role: str

    def __len__(self):
        return len(self.values)


@dataclass
class GreenDomainMatrix:
    operator: BlockToeplitzOperator
    k0: float

    @property
    def n_cells(self):
        return self.operator.shape[0]

    def entry(self, m, n):
        return self.operator.entry(m, n)

    def matvec(self, x):
        return self.operator.matvec(x)

    def dense(self):
        return self.operator.dense()


@dataclass
class GreenReceiverMatrix:
    entries: np.ndarray
    k0: float


def _check_k0(k0):
    if not k0 > 0:
        raise DomainError(f"wavenumber must be > 0 (got {k0})")


def _outside_domain(grid, positions, what):
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    half = grid.half_side_m
    inside = (np.abs(positions[:, 0]) <= half) & (np.abs(positions[:, 1]) <= half)
    if inside.any():
        bad = positions[np.argmax(inside)]
        raise GeometryError(f"{what} at ({bad[0]:.4f}, {bad[1]:.4f}) m lies inside the investigation domain")
    return positions


def disk_offdiagonal_factor(k0, a):
    return -1j * math.pi * k0 * a / 2 * special.j1(k0 * a)


def disk_self_term(k0, a):
    return -1j * math.pi * k0 * a / 2 * special.h1_2(k0 * a) - 1.0


def green_domain_matrix(grid, k0):
    _check_k0(k0)
    n = grid.grid_n
    a = grid.equiv_radius_m
    disp = np.arange(-(n - 1), n)
    rho = grid.cell_side_m * np.hypot(disp[:, None], disp[None, :])
    kernel = np.empty(rho.shape, dtype=np.complex128)
    off = rho > 0
    kernel[off] = disk_offdiagonal_factor(k0, a) * special.h0_2(k0 * rho[off])
    kernel[~off] = disk_self_term(k0, a)
    return GreenDomainMatrix(operator=BlockToeplitzOperator(kernel), k0=k0)


def green_receiver_matrix(grid, rx, k0):
    _check_k0(k0)
    positions = rx.rx_positions if hasattr(rx, 'rx_positions') else rx
    positions = _outside_domain(grid, positions, 'receiver')
    dist = np.linalg.norm(positions[:, None, :] - grid.centers[None, :, :], axis=-1)
    entries = disk_offdiagonal_factor(k0, grid.equiv_radius_m) * special.h0_2(k0 * dist)
    return GreenReceiverMatrix(entries=entries, k0=k0)


def incident_field(grid, tx, k0):
    _check_k0(k0)
    tx = _outside_domain(grid, tx, 'transmitter')[0]
    dist = np.linalg.norm(grid.centers - tx[None, :], axis=-1)
    return ComplexFieldVector(values=special.green_2d(k0, dist), role='incident')


def plane_wave_field(points, k0, incidence_angle):
    """Unit plane wave exp(-j k0 (x cos phi + y sin phi)); validation only."""
    points = np.atleast_2d(points)
    phase = points[:, 0] * math.cos(incidence_angle) + points[:, 1] * math.sin(incidence_angle)
    return ComplexFieldVector(values=np.exp(-1j * k0 * phase), role='incident')


def _relative_residual(apply, x, b):
    norm_b = np.linalg.norm(b)
    if norm_b == 0:
        return float(np.linalg.norm(apply(x)))
    return float(np.linalg.norm(b - apply(x)) / norm_b)


def _system(Gd, tau):
    def apply(x):
        return x - Gd.matvec(tau * x)
    return apply


def _dense_system(Gd, tau):
    return np.eye(Gd.n_cells, dtype=np.complex128) - Gd.dense() * tau[None, :]


def _factorize(A):
    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.any(np.abs(np.diag(lu)) == 0):
        raise SolverError("singular system matrix in dense factorization")
    return lu, piv


def _solve_dense(Gd, tau, rhs, opts, lu_piv=None):
    lu_piv = lu_piv or _factorize(_dense_system(Gd, tau))
    x = scipy.linalg.lu_solve(lu_piv, rhs)
    return x, lu_piv


def _solve_iterative(Gd, tau, b, opts):
    n = Gd.n_cells
    apply = _system(Gd, tau)
    A = LinearOperator((n, n), matvec=apply, dtype=np.complex128)
    x = b.copy()
    residual = np.inf
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    for _ in range(MAX_RESTARTS + 1):
        budget = opts.max_iterations - iterations
        if budget <= 0:
            break
        x, info = bicgstab(A, b, x0=x, rtol=opts.tolerance, atol=0.0, maxiter=budget, callback=count)
        residual = _relative_residual(apply, x, b)
        if info < 0:
            raise SolverError(f"BiCGSTAB breakdown (info={info})", residual=residual)
        if residual <= opts.tolerance:
            logger.debug(f"BiCGSTAB converged in {iterations} iterations, residual {residual:.2e}")
            return x
    raise SolverError(
        f"BiCGSTAB did not reach residual {opts.tolerance:.1e} within {opts.max_iterations} iterations "
        f"(final residual {residual:.3e})",
        residual=residual,
    )


def solve_total_field(Gd, tau, Einc, opts=None):
    opts = opts or SolverOptions()
    tau = np.asarray(tau, dtype=np.float64)
    b = Einc.values if isinstance(Einc, ComplexFieldVector) else np.asarray(Einc)
    if tau.shape != (Gd.n_cells,) or b.shape != (Gd.n_cells,):
        raise ShapeError(f"contrast {tau.shape} and incident field {b.shape} must both be ({Gd.n_cells},)")
    if not tau.any():
        return ComplexFieldVector(values=np.array(b, dtype=np.complex128), role='total')
    method = opts.resolve(Gd.operator.grid_n)
    if method == 'dense':
        x, _ = _solve_dense(Gd, tau, b, opts)
        residual = _relative_residual(_system(Gd, tau), x, b)
        if residual > opts.tolerance:
            raise SolverError(f"dense solve residual {residual:.3e} exceeds {opts.tolerance:.1e}", residual=residual)
    else:
        x = _solve_iterative(Gd, tau, np.asarray(b, dtype=np.complex128), opts)
    return ComplexFieldVector(values=x, role='total')


def scattered_field(Gr, Etot, tau):
    tau = np.asarray(tau, dtype=np.float64)
    values = Etot.values if isinstance(Etot, ComplexFieldVector) else np.asarray(Etot)
    if Gr.entries.shape[1] != tau.shape[0] or values.shape[0] != tau.shape[0]:
        raise ShapeError(
            f"receiver matrix {Gr.entries.shape}, total field {values.shape} and contrast {tau.shape} disagree"
        )
    return ComplexFieldVector(values=Gr.entries @ (values * tau), role='scattered')


def scattered_fields_at(grid, tau, k0, sources, receivers, opts=None):
    """Complex scattered field, shape (n_receivers, n_sources), for unit line sources."""
    opts = opts or SolverOptions()
    sources = np.atleast_2d(sources)
    Gd = green_domain_matrix(grid, k0)
    Gr = green_receiver_matrix(grid, receivers, k0)
    incident = np.column_stack([incident_field(grid, s, k0).values for s in sources])
    totals = solve_many(Gd, tau, incident, opts)
    return Gr.entries @ (totals * tau[:, None])


def solve_many(Gd, tau, incident, opts):
    """Total fields for several incident columns; the dense path factorizes once."""
    tau = np.asarray(tau, dtype=np.float64)
    if not tau.any():
        return np.array(incident, dtype=np.complex128)
    method = opts.resolve(Gd.operator.grid_n)
    if method == 'dense':
        totals, _ = _solve_dense(Gd, tau, incident, opts)
        apply = _system(Gd, tau)
        for col in range(incident.shape[1]):
            residual = _relative_residual(apply, totals[:, col], incident[:, col])
            if residual > opts.tolerance:
                raise SolverError(
                    f"dense solve residual {residual:.3e} exceeds {opts.tolerance:.1e}",
                    residual=residual,
                    tx_index=col,
                )
        return totals
    totals = np.empty_like(incident, dtype=np.complex128)
    for col in range(incident.shape[1]):
        try:
            totals[:, col] = _solve_iterative(Gd, tau, incident[:, col], opts)
        except SolverError as exc:
            raise SolverError(str(exc), residual=exc.residual, tx_index=col) from exc
    return totals


def simulate_complex(img, scene, opts=None):
    """Complex scattered fields, shape (n_freq, n_tx, n_rx)."""
    opts = opts or SolverOptions()
    grid = make_grid(scene)
    layout = make_array_layout(scene)
    tau = image_to_contrast(img, scene.grid_n)
    out = np.zeros((len(scene.frequencies_hz), scene.n_tx, scene.n_rx), dtype=np.complex128)
    for f_index, k0 in enumerate(scene.wavenumbers()):
        Gd = green_domain_matrix(grid, k0)
        Gr = green_receiver_matrix(grid, layout, k0)
        incident = np.column_stack([incident_field(grid, tx, k0).values for tx in layout.tx_positions])
        try:
            totals = solve_many(Gd, tau, incident, opts)
        except SolverError as exc:
            raise exc.tagged(f_index, exc.tx_index) from exc
        out[f_index] = (Gr.entries @ (totals * tau[:, None])).T
    return out


def simulate_response(img, scene, opts=None):
    return np.abs(simulate_complex(img, scene, opts)).ravel()


def field_index(scene, freq_index, tx_index, rx_index):
    return (freq_index * scene.n_tx + tx_index) * scene.n_rx + rx_index


def add_noise(fields, snr_db, rng):
    fields = np.asarray(fields, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        return fields.copy()
    if not math.isfinite(snr_db):
        raise ConfigurationError(f"snr_db must be finite or +inf (got {snr_db})")
    power = float(np.mean(fields ** 2))
    if power == 0:
        return fields.copy()
    sigma = math.sqrt(power / 10 ** (snr_db / 10))
    return np.maximum(fields + rng.normal(0.0, sigma, size=fields.shape), 0.0)


def dump_fields(img, scene, opts, path, freq_index=0, tx_index=0):
    """Write incident/total/scattered fields and Gr for one (frequency, transmitter) to an .npz."""
    opts = opts or SolverOptions()
    grid = make_grid(scene)
    layout = make_array_layout(scene)
    tau = image_to_contrast(img, scene.grid_n)
    k0 = scene.wavenumber(scene.frequencies_hz[freq_index])
    Gd = green_domain_matrix(grid, k0)
    Gr = green_receiver_matrix(grid, layout, k0)
    einc = incident_field(grid, layout.tx_positions[tx_index], k0)
    etot = solve_total_field(Gd, tau, einc, opts)
    esca = scattered_field(Gr, etot, tau)
    np.savez(
        path,
        incident=einc.values,
        total=etot.values,
        scattered=esca.values,
        receiver_matrix=Gr.entries,
        contrast=tau,
        k0=k0,
        convention=GREEN_CONVENTION,
    )
    logger.info(f"Field dump written to {path} (frequency #{freq_index}, transmitter #{tx_index})")
    return path


def _mie_partial_sum(orders, coeffs, k0, rho, angle_diff):
    terms = (1j ** (-orders))[None, :] * coeffs[None, :] * special.hn_2(orders[None, :], k0 * rho[:, None])
    return np.sum(terms * np.exp(1j * orders[None, :] * angle_diff[:, None]), axis=1)


def _mie_coefficients(orders, k0, k1, radius):
    x0, x1 = k0 * radius, k1 * radius
    jn0, jn0p = special.jn(orders, x0), special.jn_prime(orders, x0)
    jn1, jn1p = special.jn(orders, x1), special.jn_prime(orders, x1)
    hn0, hn0p = special.hn_2(orders, x0), special.hn_2_prime(orders, x0)
    num = k1 * jn1p * jn0 - k0 * jn1 * jn0p
    den = k0 * jn1 * hn0p - k1 * jn1p * hn0
    return num / den


def mie_scattered_field(radius_m, eps_r, k0, incidence_angle, rx):
    """
    Scattered field of a homogeneous dielectric circular cylinder (centred at the origin)
    under a unit TM plane wave exp(-j k0 (x cos phi + y sin phi)).
    """
    if not radius_m > 0:
        raise DomainError(f"cylinder radius must be > 0 (got {radius_m})")
    if not eps_r > 1:
        raise DomainError(f"eps_r must be > 1 (got {eps_r})")
    _check_k0(k0)
    rx = np.atleast_2d(np.asarray(rx, dtype=np.float64))
    rho = np.hypot(rx[:, 0], rx[:, 1])
    if np.any(rho <= radius_m):
        raise GeometryError("Mie receivers must lie outside the cylinder")
    angle_diff = np.arctan2(rx[:, 1], rx[:, 0]) - incidence_angle
    k1 = k0 * math.sqrt(eps_r)

    def field(order):
        orders = np.arange(-order, order + 1)
        coeffs = _mie_coefficients(orders, k0, k1, radius_m)
        return _mie_partial_sum(orders, coeffs, k0, rho, angle_diff)

    order = int(math.ceil(k1 * radius_m)) + MIE_ORDER_STEP
    previous = field(order)
    while order + MIE_ORDER_STEP <= MIE_MAX_ORDER:
        order += MIE_ORDER_STEP
        current = field(order)
        if not np.all(np.isfinite(current)):
            break
        scale = np.linalg.norm(current)
        change = np.linalg.norm(current - previous)
        if change <= 1e-10 * scale or scale == 0:
            return current
        previous = current
    raise OracleError(f"Mie series did not converge for k0*radius = {k0 * radius_m:.3g}, eps_r = {eps_r}")
