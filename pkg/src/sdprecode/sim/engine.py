"""Monte Carlo engine: symbol/bit error curves, IQ scatter, angular spectra.

Randomness discipline
---------------------
Trials are grouped into fixed blocks of ``RNG_BATCH`` trials.  Each
(purpose, SNR point, block, category) tuple owns an independent generator
derived from the master seed, with categories 0..3 = channel, symbols,
noise, dither.  Every category draws trial-major arrays, so a configuration
with more trials extends the sequence without perturbing earlier trials,
and points can run in any order (or in parallel) with identical results.

Conventions: thermal noise power is fixed at 1, so the swept "SNR" is the
total transmit power ``P = 10^(snr_db/10)``; received samples are
``sqrt(P/2N) h^T x + v``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .. import analysis, modulator, optim
from ..channel import (
    Constellation,
    ArrayGeometry,
    array_response,
    bit_errors,
    decide,
    make_constellation,
    steering_matrix,
)
from ..precoder import iq_inf_norm, minimax_coefficients, nullspace_basis
from .config import ConfigError, SimConfig

__all__ = ["RNG_BATCH", "SerCurve", "run_ser", "run_iq_scatter",
           "run_spectrum", "direct_quantize"]

RNG_BATCH = 1024
_CHUNK = 128          # compute-chunk width for the multi-user matrix kernels

_CH, _SYM, _NOISE, _DITHER = range(4)
_PURPOSE_SER, _PURPOSE_SCATTER, _PURPOSE_SPECTRUM, _PURPOSE_SOLVE = range(4)

_SINGLE_USER_SCHEMES = ("mrt", "mrt_steered", "mrt_generalized")


def direct_quantize(xbar) -> np.ndarray:
    """Memoryless one-bit quantization of each rail (sign(0) = +1)."""
    return modulator.one_bit(xbar)


def _streams(seed, purpose, point, block):
    return tuple(
        np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(purpose, point, block, cat)))
        for cat in range(4)
    )


def _complex_normal(rng, shape):
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def _sample_separated_angles(rng, count, n_users, lo, hi, sep):
    """Uniform angle sets with a minimum pairwise gap, drawn constructively.

    Sorted uniforms on the gap-shrunk interval plus a deterministic ramp are
    exactly uniform over the feasible (sorted) configurations, with no
    rejection loop.  Returned in ascending order; users are exchangeable.
    """
    span = hi - lo - (n_users - 1) * sep
    u = np.sort(rng.uniform(0.0, span, (count, n_users)), axis=1)
    return lo + u + np.arange(n_users) * sep


@dataclass
class _Counts:
    trials: int = 0
    symbols: int = 0
    symbol_errors: int = 0
    bits: int = 0
    bit_errors: int = 0
    nonconverged: int = 0

    def add(self, other: "_Counts"):
        self.trials += other.trials
        self.symbols += other.symbols
        self.symbol_errors += other.symbol_errors
        self.bits += other.bits
        self.bit_errors += other.bit_errors
        self.nonconverged += other.nonconverged


def _tally(counts: _Counts, rx, scale, s_idx, const: Constellation):
    idx = decide(rx, const, scale)
    counts.symbols += idx.size
    counts.symbol_errors += int((idx != s_idx).sum())
    if const.bit_labels is not None:
        counts.bits += idx.size * const.bits_per_symbol
        counts.bit_errors += int(bit_errors(const, idx, s_idx).sum())


def _modulate(cfg: SimConfig, xbar, rng_dither, steer_phi=0.0, gains=None):
    """Dispatch the configured one-bit stage; xbar has the antenna axis first."""
    mod = cfg.modulator
    if mod == "unquantized":
        return xbar
    if mod == "direct":
        return modulator.one_bit(xbar)
    if mod == "basic":
        return modulator.sd_basic(xbar).output
    if mod == "dithered":
        lvl = cfg.dither_level
        n_ant = xbar.shape[0]
        tail = xbar.shape[1:]
        # Trial-major draw keeps early trials stable when the batch grows.
        u = rng_dither.uniform(-lvl, lvl, size=tail + (n_ant, 2))
        if tail:
            u = np.moveaxis(u, 0, -1)
        return modulator._run(xbar, 1.0, dither=u,
                              overload_limit=2.0 + lvl).output
    if mod == "steered":
        return modulator.sd_angle_steered(xbar, steer_phi).output
    if mod == "generalized":
        return modulator.sd_generalized(xbar, gains).output
    raise ConfigError(f"config.modulator: unknown modulator {mod!r}")


# ---------------------------------------------------------------------------
# Single-user transmit pipelines (shared by SER, scatter, and spectrum runs)
# ---------------------------------------------------------------------------

def _single_path_tx(cfg: SimConfig, const: Constellation, rngs, n_use):
    """MRT (optionally angle steered) toward one fixed-angle user.

    Returns (x, gain, alpha, s_idx, response): the one-bit (or pass-through)
    antenna matrix (N, n_use), the coherent receive gain per trial, the
    channel phase per trial, sent symbol indices, and the user's steering
    vector.
    """
    geom = ArrayGeometry(cfg.n_antennas, cfg.spacing_over_wavelength)
    theta = math.radians(cfg.channel.angle_deg)
    a = array_response(geom, theta)

    alpha = np.exp(1j * rngs[_CH].uniform(-math.pi, math.pi, RNG_BATCH))[:n_use]
    s_idx = rngs[_SYM].integers(0, const.order, RNG_BATCH)[:n_use]
    s = const.points[s_idx]

    if cfg.scheme == "mrt_steered":
        phi = 2.0 * math.pi * cfg.spacing_over_wavelength * math.sin(theta)
        amp = modulator.no_overload_amplitude(phi)
    else:
        phi, amp = 0.0, 1.0

    u = amp * np.conj(alpha) * s          # |alpha| = 1 in this channel model
    xbar = np.conj(a)[:, None] * u[None, :]
    x = _modulate(cfg, xbar, rngs[_DITHER], steer_phi=phi)
    gain = amp * cfg.n_antennas * np.ones(n_use)
    return x, gain, alpha, s_idx, a


def _generalized_tx(cfg: SimConfig, const: Constellation, rngs, n_use):
    """Channel-matched MRT over an i.i.d. Gaussian channel.

    The per-trial channel is sorted by magnitude (the matched modulator's
    canonical order); receive bookkeeping uses the sorted channel, which is
    equivalent to un-permuting the antenna vector.  Returns
    (x, gain, h_sorted, s_idx).
    """
    n_ant = cfg.n_antennas
    h = _complex_normal(rngs[_CH], (RNG_BATCH, n_ant))[:n_use]
    order = np.argsort(np.abs(h), axis=1, kind="stable")
    hs = np.take_along_axis(h, order, axis=1).T        # (N, B) ascending |h|

    s_idx = rngs[_SYM].integers(0, const.order, RNG_BATCH)[:n_use]
    s = const.points[s_idx]

    if cfg.modulator == "generalized" and cfg.amplitude_mode == "safe":
        ratios = np.zeros_like(hs)
        ratios[1:] = hs[:-1] / hs[1:]
        amp = 2.0 - np.abs(ratios.real) - np.abs(ratios.imag)
    else:
        amp = np.ones_like(hs, dtype=float)

    rail_max = np.maximum(np.abs(hs.real), np.abs(hs.imag))
    weights = amp * np.conj(hs) / rail_max
    xbar = weights * s[None, :]
    spill = np.maximum(np.abs(xbar.real), np.abs(xbar.imag)) \
        > amp * (1.0 + 1e-12)
    if np.any(spill):
        rail_min = np.minimum(np.abs(hs.real), np.abs(hs.imag))
        weights = np.where(spill, weights * rail_max / (rail_max + rail_min),
                           weights)
        xbar = weights * s[None, :]

    x = _modulate(cfg, xbar, rngs[_DITHER], gains=hs)
    gain = (hs * weights).real.sum(axis=0)
    return x, gain, hs, s_idx


def _kernel_single_path(cfg, const, power, rngs, n_use) -> _Counts:
    x, gain, alpha, s_idx, a = _single_path_tx(cfg, const, rngs, n_use)
    noise = _complex_normal(rngs[_NOISE], (RNG_BATCH,))[:n_use]
    amp_scale = math.sqrt(power / (2.0 * cfg.n_antennas))
    rx = amp_scale * alpha * (a @ x) + noise
    counts = _Counts(trials=n_use)
    scale = 1.0 if const.kind == "psk" else amp_scale * gain
    _tally(counts, rx, scale, s_idx, const)
    return counts


def _kernel_generalized(cfg, const, power, rngs, n_use) -> _Counts:
    x, gain, hs, s_idx = _generalized_tx(cfg, const, rngs, n_use)
    noise = _complex_normal(rngs[_NOISE], (RNG_BATCH,))[:n_use]
    amp_scale = math.sqrt(power / (2.0 * cfg.n_antennas))
    rx = amp_scale * np.einsum("nb,nb->b", hs, x) + noise
    counts = _Counts(trials=n_use)
    scale = 1.0 if const.kind == "psk" else amp_scale * gain
    _tally(counts, rx, scale, s_idx, const)
    return counts


# ---------------------------------------------------------------------------
# Multi-user kernels
# ---------------------------------------------------------------------------

def _draw_mu_channel(cfg: SimConfig, rng, n_use):
    """Angles (radians) and complex gains for a batch of multi-user scenes."""
    ch = cfg.channel
    k = ch.n_users
    if ch.angles_deg is not None:
        ang = np.broadcast_to(np.deg2rad(np.asarray(ch.angles_deg)),
                              (n_use, k)).copy()
    else:
        lo, hi = ch.angle_range_deg
        deg = _sample_separated_angles(rng, RNG_BATCH, k, lo, hi,
                                       ch.min_separation_deg)[:n_use]
        ang = np.deg2rad(deg)
    phases = rng.uniform(-math.pi, math.pi, (RNG_BATCH, k))[:n_use]
    if ch.gain_model == "pathloss":
        dist = rng.uniform(ch.pathloss_range[0], ch.pathloss_range[1],
                           (RNG_BATCH, k))[:n_use]
        amp = ch.pathloss_ref / dist
    else:
        amp = np.ones_like(phases)
    return ang, amp * np.exp(1j * phases)


def _mu_sigma_w(cfg, power, angles, alpha):
    s = np.sin(math.pi * cfg.spacing_over_wavelength * np.sin(angles))
    var = (4.0 * np.abs(alpha) ** 2 * power / 3.0) * s * s + 1.0
    return np.sqrt(var)


def _steering_tensor(cfg, angles):
    phase = 2.0 * math.pi * cfg.spacing_over_wavelength * np.sin(angles)
    n = np.arange(cfg.n_antennas)
    return np.exp(-1j * phase[..., None] * n)


def _zf_directions_batch(cfg, a_mat, rhs):
    gram = np.einsum("bkn,bjn->bkj", a_mat, a_mat.conj()) / cfg.n_antennas
    y = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return np.einsum("bkn,bk->bn", a_mat.conj(), y) / cfg.n_antennas


def _kernel_multiuser_symbol(cfg, const, power, rngs, n_use) -> _Counts:
    """ZF and margin-maximizing precoding, one symbol time per trial (PSK)."""
    k = cfg.channel.n_users
    angles, alpha = _draw_mu_channel(cfg, rngs[_CH], n_use)
    s_idx = rngs[_SYM].integers(0, const.order, (RNG_BATCH, k))[:n_use]
    noise = _complex_normal(rngs[_NOISE], (RNG_BATCH, k))[:n_use]
    amp_scale = math.sqrt(power / (2.0 * cfg.n_antennas))

    counts = _Counts(trials=n_use)
    for lo in range(0, n_use, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, n_use))
        ang_c, alp_c, sidx_c = angles[sl], alpha[sl], s_idx[sl]
        a_mat = _steering_tensor(cfg, ang_c)
        sigma_w = _mu_sigma_w(cfg, power, ang_c, alp_c)
        s = const.points[sidx_c]

        if cfg.scheme == "zf":
            weights = sigma_w * np.conj(alp_c) / np.abs(alp_c) ** 2
            v = _zf_directions_batch(cfg, a_mat, weights * s)
            gamma = 1.0 / iq_inf_norm(v, axis=-1)
            xbar = gamma[:, None] * v
        else:
            h_rows = alp_c[..., None] * a_mat
            coeffs = minimax_coefficients(h_rows, s, sigma_w, const.order)
            problem = optim.MinimaxProblem(coefficients=coeffs, box=1.0)
            if cfg.scheme == "slp_primal":
                params = optim.ApgParams(smoothing=cfg.solver.smoothing,
                                         tol=cfg.solver.tol,
                                         max_iters=cfg.solver.max_iters)
                res = optim.primal_apg(problem, params)
            else:
                params = optim.ApgParams(
                    regularization=cfg.solver.regularization,
                    tol=cfg.solver.dual_tol,
                    max_iters=cfg.solver.dual_max_iters)
                res = optim.dual_apg(problem, params)
            counts.nonconverged += int((~res.converged).sum())
            xbar = optim.unstack_complex(res.x)

        x = _modulate(cfg, xbar.T, rngs[_DITHER])
        rx = amp_scale * alp_c * np.einsum("bkn,nb->bk", a_mat, x) + noise[sl]
        _tally(counts, rx, 1.0, sidx_c, const)
    return counts


def _kernel_block(cfg, const, power, rngs, n_use) -> _Counts:
    """Block zero-forcing (plain or nullspace-assisted) for QAM blocks."""
    k = cfg.channel.n_users
    t_len = cfg.block_length
    angles, alpha = _draw_mu_channel(cfg, rngs[_CH], n_use)
    s_idx = rngs[_SYM].integers(0, const.order, (RNG_BATCH, k, t_len))[:n_use]
    noise = _complex_normal(rngs[_NOISE], (RNG_BATCH, k, t_len))[:n_use]
    amp_scale = math.sqrt(power / (2.0 * cfg.n_antennas))

    counts = _Counts(trials=n_use)
    for b in range(n_use):
        a_mat = _steering_tensor(cfg, angles[b])          # (K, N)
        sigma_w = _mu_sigma_w(cfg, power, angles[b], alpha[b])
        s = const.points[s_idx[b]]                        # (K, T)
        weights = sigma_w * np.conj(alpha[b]) / np.abs(alpha[b]) ** 2
        rhs = weights[:, None] * s

        gram = (a_mat @ a_mat.conj().T) / cfg.n_antennas
        y = np.linalg.solve(gram, rhs)
        v = (a_mat.conj().T @ y) / cfg.n_antennas         # (N, T)

        if cfg.scheme == "nullspace_zf":
            basis = nullspace_basis(a_mat)
            scale = float(iq_inf_norm(v))
            params = optim.ApgParams(
                smoothing=cfg.solver.nullspace_smoothing_rel * scale,
                tol=1e-5 * scale,
                max_iters=cfg.solver.nullspace_max_iters)
            xi, solve = optim.min_iq_inf_norm(v.T, basis, params=params)
            shaved = (v.T + xi @ basis.T).T
            peak = float(np.max(solve.value))
            counts.nonconverged += int(np.any(~solve.converged))
        else:
            shaved = v
            peak = float(iq_inf_norm(v))

        gamma = 1.0 / peak
        xbar = gamma * shaved
        x = _modulate(cfg, xbar, rngs[_DITHER])
        rx = amp_scale * alpha[b][:, None] * (a_mat @ x) + noise[b]
        c = amp_scale * gamma * sigma_w
        _tally(counts, rx, c[:, None], s_idx[b], const)
    return counts


_KERNELS = {
    "mrt": _kernel_single_path,
    "mrt_steered": _kernel_single_path,
    "mrt_generalized": _kernel_generalized,
    "zf": _kernel_multiuser_symbol,
    "slp_primal": _kernel_multiuser_symbol,
    "slp_dual": _kernel_multiuser_symbol,
    "zf_qam": _kernel_block,
    "nullspace_zf": _kernel_block,
}


def _theory_ser(cfg: SimConfig, const: Constellation, power: float) -> float:
    """Closed-form error bound where one exists for the scheme, else NaN."""
    if cfg.scheme not in ("mrt", "mrt_steered"):
        return math.nan
    theta = math.radians(cfg.channel.angle_deg)
    n, d = cfg.n_antennas, cfg.spacing_over_wavelength
    if cfg.scheme == "mrt" and cfg.modulator == "basic":
        snr = analysis.effective_snr_mrt(1.0, theta, power, 1.0, n, d)
    elif cfg.scheme == "mrt_steered" and cfg.modulator == "steered":
        phi = 2.0 * math.pi * d * math.sin(theta)
        amp = modulator.no_overload_amplitude(phi)
        snr = analysis.effective_snr_steered(1.0, amp, power, 1.0, n)
    elif cfg.modulator == "unquantized":
        amp = 1.0
        if cfg.scheme == "mrt_steered":
            phi = 2.0 * math.pi * d * math.sin(theta)
            amp = modulator.no_overload_amplitude(phi)
        snr = analysis.effective_snr_steered(1.0, amp, power, 1.0, n)
    else:
        return math.nan
    return float(analysis.sep_bound(snr, const))


@dataclass
class SerCurve:
    """Error-rate sweep with per-point accounting and closed-form overlay."""

    snr_db: np.ndarray
    ser: np.ndarray
    ber: np.ndarray
    theory_ser: np.ndarray
    ci_halfwidth: np.ndarray
    trials: np.ndarray
    symbols: np.ndarray
    symbol_errors: np.ndarray
    bits: np.ndarray
    bit_errors: np.ndarray
    nonconverged: int
    meta: dict = field(default_factory=dict)

    CSV_HEADER = "snr_db,ser,ber,theory_ser,ci_halfwidth,trials"

    def csv_rows(self):
        for i in range(self.snr_db.size):
            yield (f"{self.snr_db[i]:.10g},{self.ser[i]:.10g},"
                   f"{self.ber[i]:.10g},{self.theory_ser[i]:.10g},"
                   f"{self.ci_halfwidth[i]:.10g},{int(self.trials[i])}")


def _run_point(cfg: SimConfig, point: int) -> tuple:
    const = make_constellation(cfg.constellation_kind, cfg.constellation_order)
    power = 10.0 ** (cfg.snr_db[point] / 10.0)
    kernel = _KERNELS[cfg.scheme]

    totals = _Counts()
    block = 0
    while totals.trials < cfg.trials \
            and totals.symbol_errors < cfg.early_stop_errors:
        n_use = min(RNG_BATCH, cfg.trials - totals.trials)
        rngs = _streams(cfg.seed, _PURPOSE_SER, point, block)
        totals.add(kernel(cfg, const, power, rngs, n_use))
        block += 1
    theory = _theory_ser(cfg, const, power)
    return totals, theory


def run_ser(cfg: SimConfig, n_workers: int = 1) -> SerCurve:
    """Sweep the SNR grid and return the assembled error curve.

    ``n_workers > 1`` farms SNR points out to worker processes; results are
    reduced in point order, so the outcome does not depend on worker count.
    """
    cfg.validate()
    points = range(len(cfg.snr_db))
    if n_workers > 1 and len(cfg.snr_db) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers,
                                                 len(cfg.snr_db))) as pool:
            results = list(pool.map(partial(_run_point, cfg), points))
    else:
        results = [_run_point(cfg, p) for p in points]

    n_pts = len(cfg.snr_db)
    ser = np.zeros(n_pts)
    ber = np.full(n_pts, math.nan)
    theory = np.zeros(n_pts)
    ci = np.zeros(n_pts)
    trials = np.zeros(n_pts, dtype=np.int64)
    symbols = np.zeros(n_pts, dtype=np.int64)
    serrs = np.zeros(n_pts, dtype=np.int64)
    bits = np.zeros(n_pts, dtype=np.int64)
    berrs = np.zeros(n_pts, dtype=np.int64)
    nonconv = 0
    for i, (counts, th) in enumerate(results):
        ser[i] = counts.symbol_errors / counts.symbols
        if counts.bits:
            ber[i] = counts.bit_errors / counts.bits
        theory[i] = th
        ci[i] = 1.96 * math.sqrt(max(ser[i] * (1.0 - ser[i]), 0.0)
                                 / counts.symbols)
        trials[i] = counts.trials
        symbols[i] = counts.symbols
        serrs[i] = counts.symbol_errors
        bits[i] = counts.bits
        berrs[i] = counts.bit_errors
        nonconv += counts.nonconverged

    return SerCurve(
        snr_db=np.asarray(cfg.snr_db, dtype=float),
        ser=ser, ber=ber, theory_ser=theory, ci_halfwidth=ci,
        trials=trials, symbols=symbols, symbol_errors=serrs,
        bits=bits, bit_errors=berrs, nonconverged=nonconv,
        meta={"scheme": cfg.scheme, "modulator": cfg.modulator,
              "seed": cfg.seed},
    )


def _require_single_user(cfg: SimConfig, what: str):
    if cfg.scheme not in _SINGLE_USER_SCHEMES:
        raise ConfigError(
            f"config.scheme: {what} supports single-user schemes only "
            f"({', '.join(_SINGLE_USER_SCHEMES)})")


def run_iq_scatter(cfg: SimConfig, n_realizations: Optional[int] = None):
    """Noiseless shaped symbols at the user, normalized by the design gain.

    Returns ``(sent, received)`` complex arrays of equal length; with an
    ideal link every received point coincides with its sent symbol.
    """
    cfg.validate()
    _require_single_user(cfg, "the IQ scatter run")
    n_total = n_realizations or cfg.scatter_realizations
    const = make_constellation(cfg.constellation_kind, cfg.constellation_order)

    sent, received = [], []
    done, block = 0, 0
    while done < n_total:
        n_use = min(RNG_BATCH, n_total - done)
        rngs = _streams(cfg.seed, _PURPOSE_SCATTER, 0, block)
        if cfg.scheme == "mrt_generalized":
            x, gain, hs, s_idx = _generalized_tx(cfg, const, rngs, n_use)
            rx = np.einsum("nb,nb->b", hs, x) / gain
        else:
            x, gain, alpha, s_idx, a = _single_path_tx(cfg, const, rngs, n_use)
            rx = alpha * (a @ x) / gain
        sent.append(const.points[s_idx])
        received.append(rx)
        done += n_use
        block += 1
    return np.concatenate(sent), np.concatenate(received)


def build_solve_instance(cfg: SimConfig):
    """One multi-user scene plus symbol draw for a standalone solver run.

    Uses the first SNR point for the power budget and the same seeded draw
    discipline as the Monte Carlo runs (solve purpose, first trial).
    """
    from ..channel import MultiUserScene, SinglePathChannel

    cfg.validate()
    if cfg.channel.model != "multi_user":
        raise ConfigError("config.channel.model: solve needs a multi_user scene")
    rngs = _streams(cfg.seed, _PURPOSE_SOLVE, 0, 0)
    angles, alpha = _draw_mu_channel(cfg, rngs[_CH], 1)
    const = make_constellation(cfg.constellation_kind, cfg.constellation_order)
    s_idx = rngs[_SYM].integers(0, const.order, (RNG_BATCH, cfg.channel.n_users))[0]
    symbols = const.points[s_idx]
    scene = MultiUserScene(
        geometry=ArrayGeometry(cfg.n_antennas, cfg.spacing_over_wavelength),
        channels=tuple(SinglePathChannel(gain=complex(a), angle=float(t))
                       for a, t in zip(alpha[0], angles[0])),
        total_power=10.0 ** (cfg.snr_db[0] / 10.0),
        noise_variance=1.0,
    )
    return scene, symbols


def run_spectrum(cfg: SimConfig, angles_deg=None,
                 n_trials: Optional[int] = None):
    """Monte Carlo angular power spectrum of the transmitted antenna vector.

    Returns ``(angles_deg, spectrum_db)`` with the spectrum normalized so an
    unquantized coherent beam peaks at 0 dB.
    """
    cfg.validate()
    _require_single_user(cfg, "the spectrum run")
    if angles_deg is None:
        lo, hi, step = cfg.spectrum_grid_deg
        angles_deg = np.arange(lo, hi + step / 2.0, step)
    angles_deg = np.asarray(angles_deg, dtype=float)
    n_total = n_trials or cfg.spectrum_trials
    const = make_constellation(cfg.constellation_kind, cfg.constellation_order)
    geom = ArrayGeometry(cfg.n_antennas, cfg.spacing_over_wavelength)
    grid = steering_matrix(geom, np.deg2rad(angles_deg))

    power_sum = np.zeros(angles_deg.size)
    done, block = 0, 0
    while done < n_total:
        n_use = min(RNG_BATCH, n_total - done)
        rngs = _streams(cfg.seed, _PURPOSE_SPECTRUM, 0, block)
        if cfg.scheme == "mrt_generalized":
            x = _generalized_tx(cfg, const, rngs, n_use)[0]
        else:
            x = _single_path_tx(cfg, const, rngs, n_use)[0]
        power_sum += (np.abs(grid @ x) ** 2).sum(axis=1)
        done += n_use
        block += 1
    ref = float(cfg.n_antennas) ** 2
    db = 10.0 * np.log10(np.maximum(power_sum / done, 1e-300) / ref)
    return angles_deg, db
