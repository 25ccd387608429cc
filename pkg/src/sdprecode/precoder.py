"""Precoders producing the amplitude-limited target vector for the one-bit
modulators.

Every scheme returns a :class:`PrecodeOutput` whose ``xbar`` respects the
declared per-rail amplitude bound (a scalar, or one bound per antenna for the
channel-matched scheme) and whose ``gains`` give the noiseless receive
amplitude per user: with transmit scaling ``sqrt(P/2N)``, user i sees
``sqrt(P/2N) * gains[i] * s_i`` plus noise when interference is nulled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import analysis, modulator, optim
from .channel import (
    ArrayGeometry,
    CanonicalGains,
    MultiUserScene,
    SinglePathChannel,
    array_response,
    realize_channel,
    steering_matrix,
)

__all__ = [
    "PrecodeOutput",
    "iq_inf_norm",
    "mrt_single",
    "mrt_angle_steered",
    "mrt_generalized",
    "zf_precode",
    "zf_precode_qam_block",
    "nullspace_zf",
    "minimax_coefficients",
    "slp_psk",
    "nullspace_basis",
]

_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class PrecodeOutput:
    """Amplitude-limited transmit target plus its receive-side bookkeeping."""

    xbar: np.ndarray
    gains: np.ndarray
    iq_bound: np.ndarray
    scheme: str
    metadata: dict = field(default_factory=dict)


def iq_inf_norm(x, axis=None):
    """Largest in-phase or quadrature magnitude: ``max_n max(|Re|, |Im|)``."""
    x = np.asarray(x)
    return np.maximum(np.abs(x.real), np.abs(x.imag)).max(axis=axis)


def _unit_gain_direction(channel: SinglePathChannel) -> complex:
    if channel.gain == 0:
        raise ValueError("channel gain must be nonzero")
    return np.conj(channel.gain) / abs(channel.gain)


def mrt_single(channel: SinglePathChannel, geometry: ArrayGeometry,
               symbol: complex) -> PrecodeOutput:
    """Conjugate beamforming toward a single angular user.

    All antennas radiate the symbol with the conjugate phase ramp, so the
    receive side sees a coherent gain of N times the channel magnitude.
    """
    u = _unit_gain_direction(channel) * symbol
    xbar = u * np.conj(array_response(geometry, channel.angle))
    n = geometry.n_antennas
    return PrecodeOutput(
        xbar=xbar,
        gains=np.array([n * abs(channel.gain)]),
        iq_bound=np.float64(1.0),
        scheme="mrt",
    )


def mrt_angle_steered(channel: SinglePathChannel, geometry: ArrayGeometry,
                      symbol: complex) -> Tuple[PrecodeOutput, float]:
    """Conjugate beamforming backed off to the steered modulator's safe level.

    Returns the precode output together with the feedback rotation ``phi``
    that nulls the shaped quantization error along the user's phase
    progression; feed that ``phi`` to ``modulator.sd_angle_steered``.
    """
    phi = 2.0 * math.pi * geometry.spacing_over_wavelength * math.sin(channel.angle)
    amp = modulator.no_overload_amplitude(phi)
    u = amp * _unit_gain_direction(channel) * symbol
    xbar = u * np.conj(array_response(geometry, channel.angle))
    n = geometry.n_antennas
    out = PrecodeOutput(
        xbar=xbar,
        gains=np.array([amp * n * abs(channel.gain)]),
        iq_bound=np.float64(amp),
        scheme="mrt_steered",
        metadata={"phi": phi, "amplitude": amp},
    )
    return out, phi


def mrt_generalized(gains, symbol: complex,
                    amplitudes: Optional[np.ndarray] = None) -> PrecodeOutput:
    """Per-antenna matched weighting for an arbitrary (canonical) channel.

    Each antenna transmits ``r_n * s`` with ``r_n`` proportional to the
    conjugate gain, scaled so its dominant rail uses the antenna's safe
    amplitude ``A_n``.  For symbols off the rail axes that scaling can spill
    the weaker rail slightly past ``A_n``; offending antennas are rescaled by
    ``max/(max+min)`` of their rail magnitudes (which restores the bound for
    any unit-peak symbol) and reported in the metadata.

    ``amplitudes`` overrides the safe profile, e.g. all ones for the
    unquantized benchmark or for deliberately overloaded runs.
    """
    if isinstance(gains, CanonicalGains):
        h = gains.coefficients
    else:
        h = np.asarray(gains, dtype=complex)
    if np.any(h == 0):
        raise ValueError("channel gains must all be nonzero")
    if abs(symbol) > 1.0 + 1e-12:
        raise ValueError("symbol magnitude must not exceed 1")
    if amplitudes is None:
        amp = modulator.no_overload_amplitudes_generalized(h)
    else:
        amp = np.asarray(amplitudes, dtype=float)

    rail_max = np.maximum(np.abs(h.real), np.abs(h.imag))
    weights = amp * np.conj(h) / rail_max
    xbar = weights * symbol

    spill = np.maximum(np.abs(xbar.real), np.abs(xbar.imag)) > amp * (1.0 + 1e-12)
    if np.any(spill):
        rail_min = np.minimum(np.abs(h.real), np.abs(h.imag))
        shrink = rail_max / (rail_max + rail_min)
        weights = np.where(spill, weights * shrink, weights)
        xbar = weights * symbol

    coherent = (h * weights).real
    return PrecodeOutput(
        xbar=xbar,
        gains=np.array([float(coherent.sum())]),
        iq_bound=amp,
        scheme="mrt_generalized",
        metadata={"rescaled_antennas": np.flatnonzero(spill)},
    )


def _scene_single_path(scene: MultiUserScene):
    angles, gains = [], []
    for ch in scene.channels:
        if not isinstance(ch, SinglePathChannel):
            raise TypeError("zero-forcing needs single-path channels")
        if ch.gain == 0:
            raise ValueError("channel gains must be nonzero")
        angles.append(ch.angle)
        gains.append(ch.gain)
    return np.array(angles), np.array(gains, dtype=complex)


def _scene_noise_std(scene: MultiUserScene) -> np.ndarray:
    geom = scene.geometry
    var = np.array([
        analysis.noise_variance_for_channel(
            ch, scene.total_power, scene.noise_variance,
            geom.spacing_over_wavelength, geom.n_antennas)
        for ch in scene.channels
    ])
    if np.any(var <= 0):
        raise ValueError("per-user noise variance must be positive "
                         "(zero thermal noise at broadside is degenerate)")
    return np.sqrt(var)


def _zf_directions(scene: MultiUserScene, symbols: np.ndarray) -> np.ndarray:
    """Interference-free directions: pseudo-inverse applied to the weighted
    symbols, solved through the K x K steering Gram matrix (never N x N)."""
    angles, gains = _scene_single_path(scene)
    a = steering_matrix(scene.geometry, angles)
    sigma_w = _scene_noise_std(scene)
    weights = sigma_w * np.conj(gains) / np.abs(gains) ** 2
    rhs = weights[:, None] * symbols if symbols.ndim == 2 else weights * symbols

    n = scene.geometry.n_antennas
    gram = (a @ a.conj().T) / n
    try:
        factor = cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise ValueError("steering vectors are linearly dependent "
                         "(coincident user angles)") from exc
    y = cho_solve(factor, rhs)
    return (a.conj().T @ y) / n


def zf_precode(scene: MultiUserScene, symbols) -> PrecodeOutput:
    """Zero-forcing with noise-weighted per-user gains and peak normalization.

    Nulls inter-user interference and weights each user by its own noise
    standard deviation so every user lands at the same effective SNR
    ``P gamma^2 / (2N)``.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (scene.n_users,):
        raise ValueError("need one symbol per user")
    v = _zf_directions(scene, symbols)
    peak = float(iq_inf_norm(v))
    if peak == 0:
        raise ValueError("all-zero symbol vector leaves the normalization undefined")
    gamma = 1.0 / peak
    sigma_w = _scene_noise_std(scene)
    return PrecodeOutput(
        xbar=gamma * v,
        gains=gamma * sigma_w,
        iq_bound=np.float64(1.0),
        scheme="zf",
        metadata={
            "gamma": gamma,
            "snr_eff": analysis.effective_snr_zf(
                scene.total_power, scene.geometry.n_antennas, gamma),
        },
    )


def zf_precode_qam_block(scene: MultiUserScene, symbols) -> List[PrecodeOutput]:
    """Zero-forcing over a symbol block with one shared normalization.

    Amplitude decisions need the receive gain to be constant over the block,
    so the whole block is scaled by the worst symbol time's peak.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 2 or symbols.shape[0] != scene.n_users:
        raise ValueError("symbols must be (K, T)")
    v = _zf_directions(scene, symbols)
    peak = float(iq_inf_norm(v))
    if peak == 0:
        raise ValueError("all-zero symbol block leaves the normalization undefined")
    gamma = 1.0 / peak
    sigma_w = _scene_noise_std(scene)
    meta = {
        "gamma": gamma,
        "snr_eff": analysis.effective_snr_zf(
            scene.total_power, scene.geometry.n_antennas, gamma),
    }
    return [
        PrecodeOutput(xbar=gamma * v[:, t], gains=gamma * sigma_w,
                      iq_bound=np.float64(1.0), scheme="zf_qam",
                      metadata=dict(meta, t=t))
        for t in range(symbols.shape[1])
    ]


def nullspace_basis(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the right nullspace of a wide full-rank matrix."""
    k, n = a.shape
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    if s.size and s[-1] <= max(n, k) * np.finfo(float).eps * s[0]:
        raise ValueError("steering matrix is rank deficient")
    return vh[k:].conj().T


def nullspace_zf(scene: MultiUserScene, symbols,
                 params: Optional[optim.ApgParams] = None) -> List[PrecodeOutput]:
    """Block zero-forcing with a nullspace component that shaves the peak.

    Adding a vector from the steering nullspace leaves every receive signal
    untouched but can cancel transmit-side amplitude, raising the common
    scale ``gamma``.  Each symbol time solves an unconstrained peak-rail
    minimization; the zero component is always a fallback, so the resulting
    ``gamma`` never falls below the plain block zero-forcing one.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 2 or symbols.shape[0] != scene.n_users:
        raise ValueError("symbols must be (K, T)")
    v = _zf_directions(scene, symbols)            # (N, T)
    angles, _ = _scene_single_path(scene)
    a = steering_matrix(scene.geometry, angles)
    basis = nullspace_basis(a)

    xi, solve = optim.min_iq_inf_norm(v.T, basis, params=params)
    shaved = v.T + xi @ basis.T                   # (T, N)

    peak = float(np.max(solve.value))
    if peak == 0:
        raise ValueError("all-zero symbol block leaves the normalization undefined")
    gamma = 1.0 / peak
    sigma_w = _scene_noise_std(scene)
    meta = {
        "gamma": gamma,
        "snr_eff": analysis.effective_snr_zf(
            scene.total_power, scene.geometry.n_antennas, gamma),
        "solver_converged": bool(np.all(solve.converged)),
        "solver_iterations": int(np.max(solve.iterations)),
        "solver_residual": float(np.max(solve.value)),
    }
    return [
        PrecodeOutput(xbar=gamma * shaved[t], gains=gamma * sigma_w,
                      iq_bound=np.float64(1.0), scheme="nullspace_zf",
                      metadata=dict(meta, t=t))
        for t in range(symbols.shape[1])
    ]


def minimax_coefficients(h_rows: np.ndarray, symbols: np.ndarray,
                         noise_std: np.ndarray, order: int) -> np.ndarray:
    """Column matrix of the worst-user margin program, stacked-real form.

    Row space is ``x = [Re(xbar); Im(xbar)]``; the 2K columns are the
    negated, noise-normalized decision margins of each user's sent symbol,
    one per sign of the cross-rail term.  Minimizing their maximum over the
    unit box maximizes the worst normalized margin.  Batched over leading
    axes of ``h_rows`` ``(..., K, N)``, ``symbols`` ``(..., K)`` and
    ``noise_std`` ``(..., K)``.
    """
    h_rows = np.asarray(h_rows, dtype=complex)
    symbols = np.asarray(symbols, dtype=complex)
    noise_std = np.asarray(noise_std, dtype=float)
    cot = 0.0 if order == 2 else 1.0 / math.tan(math.pi / order)

    v = np.conj(symbols)[..., None] * h_rows
    inv = 1.0 / noise_std[..., None]
    aligned = np.concatenate([v.real, -v.imag], axis=-1) * inv
    cross = cot * np.concatenate([v.imag, v.real], axis=-1) * inv
    cols = np.concatenate([-aligned + cross, -aligned - cross], axis=-2)
    return cols.swapaxes(-1, -2)


def slp_psk(scene: MultiUserScene, symbols, order: int, solver: str = "primal",
            params: Optional[optim.ApgParams] = None) -> PrecodeOutput:
    """Per-symbol-time design maximizing the worst user's decision margin.

    Solves the box-constrained minimax program either by the smoothed primal
    APG or by the simplex-dual APG with closed-form primal recovery.  The
    result is flagged (not raised) when the iteration cap was hit.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.shape != (scene.n_users,):
        raise ValueError("need one symbol per user")
    if order < 2:
        raise ValueError("PSK order must be >= 2")
    if solver not in ("primal", "dual"):
        raise ValueError("solver must be 'primal' or 'dual'")

    h_rows = np.stack([realize_channel(ch, scene.geometry)
                       for ch in scene.channels])
    sigma_w = _scene_noise_std(scene)
    coeffs = minimax_coefficients(h_rows, symbols, sigma_w, order)
    problem = optim.MinimaxProblem(coefficients=coeffs, box=1.0)

    if solver == "primal":
        if params is None:
            params = optim.ApgParams(smoothing=0.05, tol=1e-5, max_iters=2000)
        res = optim.primal_apg(problem, params)
        x = res.x
        meta = {
            "solver": "primal",
            "objective": float(res.value),
            "iterations": int(res.iterations),
            "converged": bool(res.converged),
            "restarts": int(res.restarts),
        }
    else:
        if params is None:
            params = optim.ApgParams(regularization=0.005, tol=1e-7,
                                     max_iters=3000)
        res = optim.dual_apg(problem, params)
        x = res.x
        meta = {
            "solver": "dual",
            "objective": float(optim.minimax_value(problem, x)),
            "dual_value": float(res.dual_value),
            "duality_gap": float(res.gap),
            "iterations": int(res.iterations),
            "converged": bool(res.converged),
            "restarts": int(res.restarts),
        }

    xbar = optim.unstack_complex(x)
    received = h_rows @ xbar
    gains = (received * np.conj(symbols)).real
    meta["margins"] = analysis.psk_decision_margin(received, symbols, order) / sigma_w
    return PrecodeOutput(
        xbar=xbar,
        gains=gains,
        iq_bound=np.float64(1.0),
        scheme=f"slp_{solver}",
        metadata=meta,
    )
