"""Experiment configuration: parsing, validation, and compatibility rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple

__all__ = ["ConfigError", "ChannelSpec", "SolverSpec", "SimConfig"]

SCHEMES = (
    "mrt", "mrt_steered", "mrt_generalized",
    "zf", "zf_qam", "nullspace_zf", "slp_primal", "slp_dual",
)
MODULATORS = ("basic", "dithered", "steered", "generalized",
              "unquantized", "direct")

# Which modulators make sense behind each scheme.  The steered modulator
# needs the single steering rotation the steered scheme computes; the
# channel-matched modulator needs the per-antenna ratios of the generalized
# scheme; multi-user schemes run the plain (optionally dithered) modulator.
_COMPAT = {
    "mrt": {"basic", "dithered", "unquantized", "direct"},
    "mrt_steered": {"steered", "unquantized"},
    "mrt_generalized": {"generalized", "unquantized", "direct"},
    "zf": {"basic", "dithered", "unquantized", "direct"},
    "slp_primal": {"basic", "dithered", "unquantized", "direct"},
    "slp_dual": {"basic", "dithered", "unquantized", "direct"},
    "zf_qam": {"basic", "dithered", "unquantized", "direct"},
    "nullspace_zf": {"basic", "dithered", "unquantized", "direct"},
}

_CHANNEL_FOR_SCHEME = {
    "mrt": "single_path",
    "mrt_steered": "single_path",
    "mrt_generalized": "iid_gaussian",
    "zf": "multi_user",
    "slp_primal": "multi_user",
    "slp_dual": "multi_user",
    "zf_qam": "multi_user",
    "nullspace_zf": "multi_user",
}

_MULTI_USER_SCHEMES = ("zf", "slp_primal", "slp_dual", "zf_qam", "nullspace_zf")
_BLOCK_SCHEMES = ("zf_qam", "nullspace_zf")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _err(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _take(d: dict, path: str, key: str, default=None, required=False):
    if key in d:
        return d.pop(key)
    if required:
        _err(f"{path}.{key}", "missing required key")
    return default


def _no_leftovers(d: dict, path: str):
    if d:
        _err(path, f"unknown keys {sorted(d)}")


@dataclass(frozen=True)
class ChannelSpec:
    """Per-trial channel randomness model.

    ``single_path``: one user at a fixed angle, unit gain with uniform random
    phase each trial.  ``multi_user``: single-path users at per-trial random
    angles (or a fixed explicit list), uniform phases, and either unit or
    free-space path-loss amplitudes ``ref/distance``.  ``iid_gaussian``:
    one user with i.i.d. unit-variance complex Gaussian antenna gains.
    """

    model: str = "single_path"
    angle_deg: float = 0.0
    n_users: int = 1
    angle_range_deg: Tuple[float, float] = (-30.0, 30.0)
    angles_deg: Optional[Tuple[float, ...]] = None
    min_separation_deg: float = 1.0
    gain_model: str = "unit_phase"
    pathloss_ref: float = 30.0
    pathloss_range: Tuple[float, float] = (20.0, 100.0)

    @staticmethod
    def from_dict(d: dict, path: str = "channel") -> "ChannelSpec":
        d = dict(d)
        model = _take(d, path, "model", required=True)
        kw = {"model": model}
        if model == "single_path":
            kw["angle_deg"] = float(_take(d, path, "angle_deg", 0.0))
        elif model == "multi_user":
            angles = _take(d, path, "angles_deg")
            if angles is not None:
                kw["angles_deg"] = tuple(float(a) for a in angles)
                kw["n_users"] = len(kw["angles_deg"])
                if "n_users" in d and int(d.pop("n_users")) != kw["n_users"]:
                    _err(f"{path}.n_users", "conflicts with explicit angles_deg")
            else:
                kw["n_users"] = int(_take(d, path, "n_users", required=True))
                rng = _take(d, path, "angle_range_deg", (-30.0, 30.0))
                kw["angle_range_deg"] = (float(rng[0]), float(rng[1]))
                kw["min_separation_deg"] = float(
                    _take(d, path, "min_separation_deg", 1.0))
            kw["gain_model"] = str(_take(d, path, "gain_model", "unit_phase"))
            kw["pathloss_ref"] = float(_take(d, path, "pathloss_ref", 30.0))
            pl = _take(d, path, "pathloss_range", (20.0, 100.0))
            kw["pathloss_range"] = (float(pl[0]), float(pl[1]))
        elif model == "iid_gaussian":
            pass
        else:
            _err(f"{path}.model", f"unknown channel model {model!r}")
        _no_leftovers(d, path)
        return ChannelSpec(**kw)

    def validate(self, path: str = "channel"):
        if self.model == "single_path":
            if not -90.0 <= self.angle_deg <= 90.0:
                _err(f"{path}.angle_deg", "must lie in [-90, 90]")
        elif self.model == "multi_user":
            if self.n_users < 1:
                _err(f"{path}.n_users", "must be >= 1")
            if self.angles_deg is not None:
                if len(self.angles_deg) == 0:
                    _err(f"{path}.angles_deg", "must not be empty")
                for a in self.angles_deg:
                    if not -90.0 <= a <= 90.0:
                        _err(f"{path}.angles_deg", "angles must lie in [-90, 90]")
            else:
                lo, hi = self.angle_range_deg
                if not (-90.0 <= lo < hi <= 90.0):
                    _err(f"{path}.angle_range_deg", "need -90 <= lo < hi <= 90")
                if self.min_separation_deg < 0:
                    _err(f"{path}.min_separation_deg", "must be >= 0")
                needed = (self.n_users - 1) * self.min_separation_deg
                if hi - lo <= needed:
                    _err(f"{path}", "angle range too small for the separation")
            if self.gain_model not in ("unit_phase", "pathloss"):
                _err(f"{path}.gain_model", f"unknown model {self.gain_model!r}")
            if self.gain_model == "pathloss":
                lo, hi = self.pathloss_range
                if not 0 < lo <= hi:
                    _err(f"{path}.pathloss_range", "need 0 < lo <= hi")
                if self.pathloss_ref <= 0:
                    _err(f"{path}.pathloss_ref", "must be positive")


@dataclass(frozen=True)
class SolverSpec:
    """Knobs for the margin-maximizing and peak-shaving solvers."""

    smoothing: float = 0.05
    regularization: float = 0.005
    tol: float = 1e-5
    dual_tol: float = 1e-7
    max_iters: int = 2000
    dual_max_iters: int = 3000
    nullspace_smoothing_rel: float = 2e-3
    nullspace_max_iters: int = 300

    @staticmethod
    def from_dict(d: dict, path: str = "solver") -> "SolverSpec":
        d = dict(d)
        kw = {}
        for name in ("smoothing", "regularization", "tol", "dual_tol",
                     "nullspace_smoothing_rel"):
            if name in d:
                kw[name] = float(d.pop(name))
        for name in ("max_iters", "dual_max_iters", "nullspace_max_iters"):
            if name in d:
                kw[name] = int(d.pop(name))
        _no_leftovers(d, path)
        return SolverSpec(**kw)

    def validate(self, path: str = "solver"):
        for name in ("smoothing", "regularization", "tol", "dual_tol",
                     "nullspace_smoothing_rel"):
            if getattr(self, name) <= 0:
                _err(f"{path}.{name}", "must be positive")
        for name in ("max_iters", "dual_max_iters", "nullspace_max_iters"):
            if getattr(self, name) < 1:
                _err(f"{path}.{name}", "must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one Monte Carlo experiment.

    The sweep is over ``snr_db`` interpreted as total power over thermal
    noise power (``P / sigma_v^2`` with ``sigma_v^2 = 1``).  ``seed`` fixes
    every random draw; reruns of an identical config are bit-identical, and
    raising ``trials`` only appends new trials.
    """

    n_antennas: int
    spacing_over_wavelength: float
    constellation_kind: str
    constellation_order: int
    scheme: str
    modulator: str
    snr_db: Tuple[float, ...]
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    dither_level: float = 0.8
    amplitude_mode: str = "safe"
    trials: int = 100_000
    early_stop_errors: int = 500
    block_length: int = 1
    seed: int = 0
    solver: SolverSpec = field(default_factory=SolverSpec)
    spectrum_grid_deg: Tuple[float, float, float] = (-90.0, 90.0, 0.5)
    spectrum_trials: int = 2000
    scatter_realizations: int = 1000

    @staticmethod
    def from_dict(raw: dict, path: str = "config") -> "SimConfig":
        if not isinstance(raw, dict):
            _err(path, "top level must be a mapping")
        d = dict(raw)
        geom = _take(d, path, "geometry", required=True)
        if not isinstance(geom, dict):
            _err(f"{path}.geometry", "must be a mapping")
        geom = dict(geom)
        n_ant = int(_take(geom, f"{path}.geometry", "n_antennas", required=True))
        spacing = float(_take(geom, f"{path}.geometry", "spacing_over_wavelength",
                              required=True))
        _no_leftovers(geom, f"{path}.geometry")

        con = _take(d, path, "constellation", required=True)
        con = dict(con)
        kind = str(_take(con, f"{path}.constellation", "kind", required=True)).lower()
        order = int(_take(con, f"{path}.constellation", "order", required=True))
        _no_leftovers(con, f"{path}.constellation")

        channel = ChannelSpec.from_dict(
            _take(d, path, "channel", required=True), f"{path}.channel")
        solver = SolverSpec.from_dict(_take(d, path, "solver", {}) or {},
                                      f"{path}.solver")

        snr = _take(d, path, "snr_db", required=True)
        if not isinstance(snr, (list, tuple)) or len(snr) == 0:
            _err(f"{path}.snr_db", "must be a non-empty list")

        spectrum = dict(_take(d, path, "spectrum", {}) or {})
        grid = spectrum.pop("grid_deg", (-90.0, 90.0, 0.5))
        spectrum_trials = int(spectrum.pop("trials", 2000))
        _no_leftovers(spectrum, f"{path}.spectrum")

        scatter = dict(_take(d, path, "scatter", {}) or {})
        scatter_realizations = int(scatter.pop("realizations", 1000))
        _no_leftovers(scatter, f"{path}.scatter")

        cfg = SimConfig(
            n_antennas=n_ant,
            spacing_over_wavelength=spacing,
            constellation_kind=kind,
            constellation_order=order,
            scheme=str(_take(d, path, "scheme", required=True)),
            modulator=str(_take(d, path, "modulator", required=True)),
            snr_db=tuple(float(v) for v in snr),
            channel=channel,
            dither_level=float(_take(d, path, "dither_level", 0.8)),
            amplitude_mode=str(_take(d, path, "amplitude_mode", "safe")),
            trials=int(_take(d, path, "trials", 100_000)),
            early_stop_errors=int(_take(d, path, "early_stop_errors", 500)),
            block_length=int(_take(d, path, "block_length", 1)),
            seed=int(_take(d, path, "seed", 0)),
            solver=solver,
            spectrum_grid_deg=tuple(float(g) for g in grid),
            spectrum_trials=spectrum_trials,
            scatter_realizations=scatter_realizations,
        )
        _no_leftovers(d, path)
        cfg.validate(path)
        return cfg

    def validate(self, path: str = "config"):
        if self.n_antennas < 1:
            _err(f"{path}.geometry.n_antennas", "must be >= 1")
        if not 0.0 < self.spacing_over_wavelength <= 0.5:
            _err(f"{path}.geometry.spacing_over_wavelength",
                 "must lie in (0, 0.5]")
        if self.constellation_kind not in ("psk", "qam"):
            _err(f"{path}.constellation.kind", "must be 'psk' or 'qam'")
        if self.scheme not in SCHEMES:
            _err(f"{path}.scheme", f"unknown scheme {self.scheme!r}")
        if self.modulator not in MODULATORS:
            _err(f"{path}.modulator", f"unknown modulator {self.modulator!r}")
        if self.modulator not in _COMPAT[self.scheme]:
            _err(f"{path}.modulator",
                 f"modulator {self.modulator!r} is incompatible with scheme "
                 f"{self.scheme!r} (allowed: {sorted(_COMPAT[self.scheme])})")
        if self.channel.model != _CHANNEL_FOR_SCHEME[self.scheme]:
            _err(f"{path}.channel.model",
                 f"scheme {self.scheme!r} needs channel model "
                 f"{_CHANNEL_FOR_SCHEME[self.scheme]!r}")
        self.channel.validate(f"{path}.channel")
        self.solver.validate(f"{path}.solver")

        if self.scheme in ("zf", "slp_primal", "slp_dual") \
                and self.constellation_kind != "psk":
            _err(f"{path}.constellation.kind",
                 f"scheme {self.scheme!r} is a phase-decision design; use psk "
                 "(amplitude constellations need the block schemes)")
        if self.scheme in _BLOCK_SCHEMES and self.constellation_kind != "qam":
            _err(f"{path}.constellation.kind",
                 f"scheme {self.scheme!r} targets amplitude constellations; use qam")
        if self.block_length < 1:
            _err(f"{path}.block_length", "must be >= 1")
        if self.block_length > 1 and self.scheme not in _BLOCK_SCHEMES:
            _err(f"{path}.block_length",
                 f"only block schemes {_BLOCK_SCHEMES} accept block_length > 1")
        if self.scheme in _MULTI_USER_SCHEMES \
                and self.channel.n_users > self.n_antennas:
            _err(f"{path}.channel.n_users", "must not exceed n_antennas")

        if self.constellation_kind == "psk" and self.constellation_order < 2:
            _err(f"{path}.constellation.order", "PSK order must be >= 2")
        if self.constellation_kind == "qam":
            m = round(math.sqrt(self.constellation_order))
            if self.constellation_order < 4 or m * m != self.constellation_order \
                    or (m & (m - 1)) != 0:
                _err(f"{path}.constellation.order", "QAM order must be a power of 4")

        if self.dither_level < 0:
            _err(f"{path}.dither_level", "must be >= 0")
        if self.amplitude_mode not in ("safe", "unit"):
            _err(f"{path}.amplitude_mode", "must be 'safe' or 'unit'")
        if self.trials < 1:
            _err(f"{path}.trials", "must be >= 1")
        if self.early_stop_errors < 1:
            _err(f"{path}.early_stop_errors", "must be >= 1")
        for v in self.snr_db:
            if not math.isfinite(v):
                _err(f"{path}.snr_db", "entries must be finite")
        lo, hi, step = self.spectrum_grid_deg
        if not (-90.0 <= lo < hi <= 90.0) or step <= 0:
            _err(f"{path}.spectrum.grid_deg", "need -90 <= lo < hi <= 90, step > 0")
        if self.spectrum_trials < 1 or self.scatter_realizations < 1:
            _err(f"{path}", "spectrum trials and scatter realizations must be >= 1")

    def to_dict(self) -> dict:
        """Round-trippable plain-dict form (the manifest echoes this)."""
        ch = {"model": self.channel.model}
        if self.channel.model == "single_path":
            ch["angle_deg"] = self.channel.angle_deg
        elif self.channel.model == "multi_user":
            if self.channel.angles_deg is not None:
                ch["angles_deg"] = list(self.channel.angles_deg)
            else:
                ch["n_users"] = self.channel.n_users
                ch["angle_range_deg"] = list(self.channel.angle_range_deg)
                ch["min_separation_deg"] = self.channel.min_separation_deg
            ch["gain_model"] = self.channel.gain_model
            ch["pathloss_ref"] = self.channel.pathloss_ref
            ch["pathloss_range"] = list(self.channel.pathloss_range)
        return {
            "geometry": {
                "n_antennas": self.n_antennas,
                "spacing_over_wavelength": self.spacing_over_wavelength,
            },
            "constellation": {
                "kind": self.constellation_kind,
                "order": self.constellation_order,
            },
            "channel": ch,
            "scheme": self.scheme,
            "modulator": self.modulator,
            "dither_level": self.dither_level,
            "amplitude_mode": self.amplitude_mode,
            "snr_db": list(self.snr_db),
            "trials": self.trials,
            "early_stop_errors": self.early_stop_errors,
            "block_length": self.block_length,
            "seed": self.seed,
            "solver": asdict(self.solver),
            "spectrum": {
                "grid_deg": list(self.spectrum_grid_deg),
                "trials": self.spectrum_trials,
            },
            "scatter": {"realizations": self.scatter_realizations},
        }
