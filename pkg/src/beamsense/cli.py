"""Scenario runner: reproduce the reference measurements from declarative config files.

Scenario files are INI-style with explicit units in the key names (power_mW,
waist_um, z_cm, ...) because unit slips are the dominant failure mode for this
math.  Angles accept plain radians or pi-suffix notation ("0.5pi", "pi/4").
Exit codes: 0 success, 1 numeric failure, 2 parse/validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from .beam import (
    BeamState,
    Modulation,
    NoiseCovariance,
    apply_modulation,
    combine_mach_zehnder,
    flipped_noise_shape,
    inject_squeezed_mode,
    make_coherent_beam,
    propagate,
    tem10_noise_shape,
)
from .detect import (
    Measurement,
    homodyne_detect,
    homodyne_projection,
    inferred_displacement,
    qnl_displacement,
    qnl_momentum,
    qnl_tilt,
    split_detect,
    split_projection,
    spectrum_trace,
    sub_qnl_displacement,
    experimental_ratio_from_traces,
    theoretical_efficiency_ratio,
    write_measurements_csv,
    write_trace_csv,
)
from .errors import BeamSenseError, NumericError
from .mc import McConfig, mc_noise_power, statistical_tolerance
from .modes import DEFAULT_N_MAX
from .stateio import save_beam_state

OUT_DIR_ENV = "BEAMSENSE_OUT"
PRESETS = ("qnl-table", "fig-split-scan", "fig-homodyne-scan", "sub-qnl")

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_VALIDATION = 2


class ScenarioError(Exception):
    """Config parse/validation failure; message carries section and key."""


# ---------------------------------------------------------------------------
# unit and value parsing

_UNIT_SCALES = {
    "W": 1.0, "mW": 1e-3, "uW": 1e-6, "nW": 1e-9,
    "m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "nm": 1e-9,
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6,
    "rad": 1.0, "mrad": 1e-3, "urad": 1e-6, "nrad": 1e-9,
    "per_m": 1.0,
    "dB": 1.0,
}


def parse_angle(text: str, where: str) -> float:
    """Radians from '0.5pi', 'pi/4', '-pi', or a plain number."""
    s = text.strip().replace(" ", "")
    try:
        if "pi" in s:
            head, _, tail = s.partition("pi")
            value = math.pi
            if head in ("", "+"):
                pass
            elif head == "-":
                value = -value
            else:
                value *= float(head)
            if tail:
                if not tail.startswith("/"):
                    raise ValueError(tail)
                value /= float(tail[1:])
            return value
        return float(s)
    except ValueError as exc:
        raise ScenarioError(f"{where}: cannot parse angle {text!r}") from exc


def _parse_float(text: str, where: str) -> float:
    s = text.strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(s)
    except ValueError as exc:
        raise ScenarioError(f"{where}: cannot parse number {text!r}") from exc


class SectionReader:
    """Pulls unit-suffixed quantities out of one config section with good errors."""

    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.section = section
        self.items = dict(parser.items(section)) if parser.has_section(section) else {}
        self.used: set[str] = set()

    def quantity(self, base: str, units: tuple[str, ...], default: float | None = None,
                 required: bool = False) -> float | None:
        hits = [u for u in units if f"{base}_{u}".lower() in self.items]
        if len(hits) > 1:
            raise ScenarioError(
                f"[{self.section}]: give {base} in exactly one unit, found {hits}"
            )
        if not hits:
            if required:
                raise ScenarioError(
                    f"[{self.section}]: missing {base} (accepted keys: "
                    + ", ".join(f"{base}_{u}" for u in units) + ")"
                )
            return default
        key = f"{base}_{hits[0]}".lower()
        self.used.add(key)
        raw = _parse_float(self.items[key], f"[{self.section}] {key}")
        return raw * _UNIT_SCALES[hits[0]]

    def angle(self, base: str, default: float | None = None) -> float | None:
        for key in (f"{base}_rad", base):
            if key.lower() in self.items:
                self.used.add(key.lower())
                return parse_angle(self.items[key.lower()], f"[{self.section}] {key}")
        return default

    def string(self, key: str, default: str | None = None, choices: tuple[str, ...] | None = None) -> str | None:
        if key.lower() not in self.items:
            return default
        self.used.add(key.lower())
        value = self.items[key.lower()].strip()
        if choices and value not in choices:
            raise ScenarioError(f"[{self.section}] {key}: {value!r} not one of {choices}")
        return value

    def number(self, key: str, default: float | None = None) -> float | None:
        if key.lower() not in self.items:
            return default
        self.used.add(key.lower())
        return _parse_float(self.items[key.lower()], f"[{self.section}] {key}")

    def sweep(self, base: str, units: tuple[str, ...], angle: bool = False):
        """start:stop:count sweep under '<base>_<unit>' keys; returns array or None."""
        for u in ([""] if angle else units):
            key = f"{base}_{u}".lower().rstrip("_")
            if key not in self.items:
                continue
            self.used.add(key)
            parts = self.items[key].split(":")
            if len(parts) != 3:
                raise ScenarioError(
                    f"[{self.section}] {key}: sweep must be start:stop:count"
                )
            where = f"[{self.section}] {key}"
            if angle:
                lo, hi = parse_angle(parts[0], where), parse_angle(parts[1], where)
                scale = 1.0
            else:
                lo, hi = _parse_float(parts[0], where), _parse_float(parts[1], where)
                scale = _UNIT_SCALES[u]
            try:
                n = int(parts[2])
            except ValueError as exc:
                raise ScenarioError(f"{where}: sweep count {parts[2]!r} not an integer") from exc
            if n < 2:
                raise ScenarioError(f"{where}: sweep needs at least 2 points")
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ScenarioError(f"{where}: sweep bounds must be finite")
            return np.linspace(lo * scale, hi * scale, n)
        return None

    def check_consumed(self) -> None:
        stray = set(self.items) - self.used
        if stray:
            raise ScenarioError(
                f"[{self.section}]: unknown key(s) {sorted(stray)}"
            )


# ---------------------------------------------------------------------------
# scenario model


@dataclass
class SourceSpec:
    power_w: float
    wavelength_m: float
    waist_m: float
    rbw_hz: float
    vbw_hz: float | None


@dataclass
class ModulationSpec:
    displacement_m: float | None = None
    momentum_per_m: float | None = None
    displacement_power_fraction: float | None = None
    peak_mod_db: float | None = None
    peak_above_floor_db: float | None = None
    frequency_hz: float = 0.0
    plane_z_m: float = 0.0

    @property
    def calibrated(self) -> bool:
        return self.displacement_power_fraction is not None


@dataclass
class SqueezeSpec:
    mode: str  # "tem10" | "flipped"
    squeeze_db: float
    antisqueeze_db: float
    angle_rad: float = 0.0
    combiner_efficiency: float = 1.0


@dataclass
class DetectorSpec:
    kind: str  # "split" | "homodyne"
    settings: np.ndarray  # z (m) or phi_LO (rad)
    is_sweep: bool
    gap_m: float = 0.0
    half_width_m: float = math.inf
    lo: str = "tem10"


@dataclass
class McSpec:
    samples: int
    seed: int
    batch: int


@dataclass
class Scenario:
    name: str
    source: SourceSpec
    modulation: ModulationSpec | None
    squeezing: SqueezeSpec | None
    detector: DetectorSpec
    mc: McSpec | None
    out_path: str | None
    out_format: str
    variants: list[str]
    expected: dict = field(default_factory=dict)


def parse_scenario(path_or_text: str, name: str = "scenario", is_text: bool = False) -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if is_text:
            parser.read_string(path_or_text, source=name)
        else:
            with open(path_or_text) as fh:
                parser.read_string(fh.read(), source=path_or_text)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except configparser.Error as exc:
        raise ScenarioError(f"config syntax error: {exc}") from exc

    known = {"source", "modulation", "squeezing", "detector", "mc", "output", "expected"}
    stray = set(parser.sections()) - known
    if stray:
        raise ScenarioError(f"unknown section(s) {sorted(stray)}")
    if not parser.has_section("source"):
        raise ScenarioError("missing [source] section")
    if not parser.has_section("detector"):
        raise ScenarioError("missing [detector] section (exactly one detector required)")

    src = SectionReader(parser, "source")
    source = SourceSpec(
        power_w=src.quantity("power", ("W", "mW", "uW", "nW"), required=True),
        wavelength_m=src.quantity("wavelength", ("m", "um", "nm"), required=True),
        waist_m=src.quantity("waist", ("m", "mm", "um"), required=True),
        rbw_hz=src.quantity("rbw", ("Hz", "kHz", "MHz"), required=True),
        vbw_hz=src.quantity("vbw", ("Hz", "kHz", "MHz")),
    )
    src.check_consumed()
    if source.power_w < 0:
        raise ScenarioError("[source]: power must be >= 0")
    for label, val in (("wavelength", source.wavelength_m), ("waist", source.waist_m),
                       ("rbw", source.rbw_hz)):
        if val <= 0:
            raise ScenarioError(f"[source]: {label} must be > 0")
    if source.vbw_hz is not None and source.vbw_hz > source.rbw_hz:
        raise ScenarioError("[source]: vbw must not exceed rbw")

    modulation = None
    if parser.has_section("modulation"):
        mod = SectionReader(parser, "modulation")
        tilt = mod.quantity("tilt", ("rad", "mrad", "urad", "nrad"))
        momentum = mod.number("momentum_per_m")
        if tilt is not None and momentum is not None:
            raise ScenarioError("[modulation]: give tilt or momentum_per_m, not both")
        if tilt is not None:
            momentum = 2.0 * math.pi * math.sin(tilt) / source.wavelength_m
        modulation = ModulationSpec(
            displacement_m=mod.quantity("displacement", ("m", "um", "nm")),
            momentum_per_m=momentum,
            displacement_power_fraction=mod.number("displacement_power_fraction"),
            peak_mod_db=mod.number("peak_mod_dB"),
            peak_above_floor_db=mod.number("peak_above_floor_dB"),
            frequency_hz=mod.quantity("frequency", ("Hz", "kHz", "MHz"), default=0.0),
            plane_z_m=mod.quantity("plane_z", ("m", "cm", "mm"), default=0.0),
        )
        mod.check_consumed()
        frac = modulation.displacement_power_fraction
        has_absolute = modulation.displacement_m is not None or modulation.momentum_per_m is not None
        if frac is not None:
            if has_absolute:
                raise ScenarioError(
                    "[modulation]: fractional form excludes displacement/tilt keys"
                )
            if not 0.0 <= frac <= 1.0:
                raise ScenarioError("[modulation]: displacement_power_fraction must be in [0, 1]")
            if (modulation.peak_mod_db is None) == (modulation.peak_above_floor_db is None):
                raise ScenarioError(
                    "[modulation]: fractional form needs exactly one of "
                    "peak_mod_dB or peak_above_floor_dB"
                )
        elif not has_absolute:
            raise ScenarioError(
                "[modulation]: give displacement/tilt amplitudes or the fractional form"
            )

    squeezing = None
    if parser.has_section("squeezing"):
        sq = SectionReader(parser, "squeezing")
        squeezing = SqueezeSpec(
            mode=sq.string("mode", choices=("tem10", "flipped"), default="tem10"),
            squeeze_db=sq.number("squeeze_dB", default=0.0),
            antisqueeze_db=sq.number("antisqueeze_dB"),
            angle_rad=sq.angle("angle", default=0.0),
            combiner_efficiency=sq.number("combiner_efficiency", default=1.0),
        )
        if squeezing.antisqueeze_db is None:
            squeezing = SqueezeSpec(squeezing.mode, squeezing.squeeze_db,
                                    squeezing.squeeze_db, squeezing.angle_rad,
                                    squeezing.combiner_efficiency)
        sq.check_consumed()
        if squeezing.squeeze_db < 0:
            raise ScenarioError("[squeezing]: squeeze_dB must be >= 0")
        if squeezing.antisqueeze_db < squeezing.squeeze_db:
            raise ScenarioError("[squeezing]: antisqueeze_dB must be >= squeeze_dB")
        if not 0.0 < squeezing.combiner_efficiency <= 1.0:
            raise ScenarioError("[squeezing]: combiner_efficiency must be in (0, 1]")

    det = SectionReader(parser, "detector")
    kind = det.string("type", choices=("split", "homodyne"))
    if kind is None:
        raise ScenarioError("[detector]: missing type (split | homodyne)")
    if kind == "split":
        sweep = det.sweep("z_sweep", ("m", "cm", "mm"))
        z = det.quantity("z", ("m", "cm", "mm"))
        if (sweep is None) == (z is None):
            raise ScenarioError("[detector]: give exactly one of z or z_sweep")
        detector = DetectorSpec(
            kind="split",
            settings=sweep if sweep is not None else np.array([z]),
            is_sweep=sweep is not None,
            gap_m=det.quantity("gap", ("m", "mm", "um"), default=0.0),
            half_width_m=det.quantity("half_width", ("m", "cm", "mm", "um"), default=math.inf),
        )
        if detector.gap_m < 0:
            raise ScenarioError("[detector]: gap must be >= 0")
        if detector.half_width_m <= detector.gap_m / 2.0:
            raise ScenarioError("[detector]: half_width must exceed gap/2")
    else:
        sweep = det.sweep("phi_sweep", (), angle=True)
        phi = det.angle("phi_lo")
        if (sweep is None) == (phi is None):
            raise ScenarioError("[detector]: give exactly one of phi_lo or phi_sweep")
        lo = det.string("lo", default="tem10", choices=("tem10",))
        detector = DetectorSpec(
            kind="homodyne",
            settings=sweep if sweep is not None else np.array([phi]),
            is_sweep=sweep is not None,
            lo=lo,
        )
    det.check_consumed()

    mc_spec = None
    if parser.has_section("mc"):
        mc = SectionReader(parser, "mc")
        samples = mc.number("samples", default=1e6)
        mc_spec = McSpec(
            samples=int(samples),
            seed=int(mc.number("seed", default=0)),
            batch=int(mc.number("batch", default=65536)),
        )
        mc.check_consumed()
        if mc_spec.samples < 1000:
            raise ScenarioError("[mc]: samples must be >= 1000")

    out_path, out_format, variants = None, "csv", ["full"]
    if parser.has_section("output"):
        out = SectionReader(parser, "output")
        out_path = out.string("path")
        out_format = out.string("format", default="csv", choices=("csv", "json-lines"))
        raw_variants = out.string("variants")
        out.check_consumed()
        if raw_variants:
            variants = [v.strip() for v in raw_variants.split(",") if v.strip()]
            bad = [v for v in variants if v not in ("full", "qnl", "sqz", "mod", "mod-sqz")]
            if bad:
                raise ScenarioError(f"[output]: unknown variant(s) {bad}")

    expected = {}
    if parser.has_section("expected"):
        exp = SectionReader(parser, "expected")
        expected = {k: _parse_float(v, f"[expected] {k}") for k, v in exp.items.items()}

    return Scenario(
        name=name,
        source=source,
        modulation=modulation,
        squeezing=squeezing,
        detector=detector,
        mc=mc_spec,
        out_path=out_path,
        out_format=out_format,
        variants=variants,
        expected=expected,
    )


# ---------------------------------------------------------------------------
# scenario execution


def _noise_shape(mode: str, n_max: int) -> np.ndarray:
    return tem10_noise_shape(n_max) if mode == "tem10" else flipped_noise_shape(n_max)


def _base_beam(scn: Scenario, n_max: int, squeezed: bool) -> BeamState:
    """Source beam at the modulation plane, optionally with squeezing combined in."""
    src = scn.source
    beam = make_coherent_beam(src.power_w, src.wavelength_m, src.waist_m, src.rbw_hz, n_max)
    plane_z = scn.modulation.plane_z_m if scn.modulation else 0.0
    beam = propagate(beam, plane_z)
    if squeezed and scn.squeezing is not None and scn.squeezing.squeeze_db > 0:
        sq = scn.squeezing
        dim = inject_squeezed_mode(
            NoiseCovariance.vacuum(n_max),
            _noise_shape(sq.mode, n_max),
            sq.squeeze_db,
            sq.antisqueeze_db,
            sq.angle_rad,
        )
        beam = combine_mach_zehnder(beam, dim, sq.combiner_efficiency)
    return beam


def _measure(beam: BeamState, detector: DetectorSpec, n_max: int) -> list[Measurement]:
    if detector.kind == "split":
        return [
            split_detect(beam, z=s, gap=detector.gap_m, half_width=detector.half_width_m)
            for s in detector.settings
        ]
    lo = tem10_noise_shape(n_max)
    return [homodyne_detect(beam, lo, phi_lo=s) for s in detector.settings]


def _resolve_modulation(scn: Scenario, n_max: int) -> Modulation | None:
    """Fixed d/p from the config, or depth calibrated against a target trace height."""
    spec = scn.modulation
    if spec is None:
        return None
    if not spec.calibrated:
        return Modulation(
            displacement_d=spec.displacement_m or 0.0,
            momentum_p=spec.momentum_per_m or 0.0,
            frequency=spec.frequency_hz,
        )
    w0 = scn.source.waist_m
    frac_d = spec.displacement_power_fraction
    # probe with a tiny depth; signal scales exactly as depth^2 in the linear model
    probe = 1e-6
    mod_probe = Modulation(
        displacement_d=math.sqrt(frac_d) * probe * w0,
        momentum_p=math.sqrt(1.0 - frac_d) * probe * 2.0 / w0,
        frequency=spec.frequency_hz,
    )
    beam = apply_modulation(_base_beam(scn, n_max, squeezed=True), mod_probe)
    meas = _measure(beam, scn.detector, n_max)
    signals = np.array([m.signal_rel for m in meas])
    noises = np.array([m.noise_rel for m in meas])
    if spec.peak_above_floor_db is not None:
        if scn.detector.is_sweep:
            raise ScenarioError(
                "[modulation]: peak_above_floor_dB needs a single-setting detector"
            )
        target_sig = noises[0] * (10.0 ** (spec.peak_above_floor_db / 10.0) - 1.0)
        if signals[0] <= 0:
            raise ScenarioError("[modulation]: modulation invisible at this setting")
        k = target_sig / signals[0]
    else:
        target_total = 10.0 ** (spec.peak_mod_db / 10.0)
        if np.max(signals) <= 0:
            raise ScenarioError("[modulation]: modulation invisible over the sweep")
        lo_k, hi_k = 0.0, 1.0
        while np.max(signals * hi_k + noises) < target_total:
            hi_k *= 2.0
            if hi_k > 1e30:
                raise ScenarioError("[modulation]: peak_mod_dB unreachable")
        for _ in range(200):
            mid = 0.5 * (lo_k + hi_k)
            if np.max(signals * mid + noises) < target_total:
                lo_k = mid
            else:
                hi_k = mid
        k = 0.5 * (lo_k + hi_k)
    depth = probe * math.sqrt(k)
    return Modulation(
        displacement_d=math.sqrt(frac_d) * depth * w0,
        momentum_p=math.sqrt(1.0 - frac_d) * depth * 2.0 / w0,
        frequency=spec.frequency_hz,
    )


def _variant_flags(variant: str) -> tuple[bool, bool]:
    """(squeezed, modulated) for a named trace variant."""
    return variant in ("sqz", "mod-sqz", "full"), variant in ("mod", "mod-sqz", "full")


def run_scenario(
    scn: Scenario,
    n_max: int = DEFAULT_N_MAX,
    seed: int | None = None,
    out_dir: str | None = None,
    out_format: str | None = None,
    dump_state: str | None = None,
) -> dict:
    """Execute a scenario; write configured outputs and return the summary dict."""
    src = scn.source
    beam0 = make_coherent_beam(src.power_w, src.wavelength_m, src.waist_m, src.rbw_hz, n_max)
    n_photons = beam0.field.photons_N
    summary: dict = {
        "scenario": scn.name,
        "photons_N": n_photons,
        "n_max": n_max,
    }
    if n_photons > 0:
        summary["qnl"] = {
            "d_qnl_m": qnl_displacement(src.waist_m, n_photons),
            "p_qnl_per_m": qnl_momentum(src.waist_m, n_photons),
            "theta_qnl_rad": qnl_tilt(src.waist_m, n_photons, src.wavelength_m),
        }
        if scn.squeezing is not None and scn.squeezing.squeeze_db > 0:
            summary["qnl"]["d_sqz_m"] = sub_qnl_displacement(
                summary["qnl"]["d_qnl_m"], scn.squeezing.squeeze_db
            )

    mod = _resolve_modulation(scn, n_max)
    if mod is not None:
        summary["modulation"] = {
            "displacement_m": mod.displacement_d,
            "momentum_per_m": mod.momentum_p,
            "frequency_Hz": mod.frequency,
        }

    fmt = out_format or scn.out_format
    seed_val = scn.mc.seed if (seed is None and scn.mc is not None) else (seed or 0)
    setting_name = "z_m" if scn.detector.kind == "split" else "phi_LO_rad"

    results: dict[str, list[Measurement]] = {}
    beams: dict[str, BeamState] = {}
    for variant in scn.variants:
        squeezed, modulated = _variant_flags(variant)
        beam = _base_beam(scn, n_max, squeezed=squeezed)
        if modulated and mod is not None:
            beam = apply_modulation(beam, mod)
        beams[variant] = beam
        results[variant] = _measure(beam, scn.detector, n_max)
    final_beam = beams[scn.variants[-1]]

    summary["variants"] = {}
    for variant, meas in results.items():
        totals = [m.total_db for m in meas]
        info = {
            "peak_dB": max(totals),
            "min_dB": min(totals),
            "peak_setting": meas[int(np.argmax(totals))].setting,
        }
        if any(m.apertured for m in meas):
            info["apertured_settings"] = [m.setting for m in meas if m.apertured]
        if scn.detector.kind == "split" and scn.detector.is_sweep:
            far = split_detect(
                beams[variant],
                z=1e12,
                gap=scn.detector.gap_m,
                half_width=scn.detector.half_width_m,
            )
            info["near_field_dB"] = meas[0].total_db
            info["far_field_plateau_dB"] = far.total_db
            info["near_to_plateau_dB"] = far.total_db - meas[0].total_db
        if not scn.detector.is_sweep and mod is not None and _variant_flags(variant)[1]:
            m0 = meas[0]
            info["inferred_displacement_m"] = inferred_displacement(
                m0.signal_rel, src.waist_m, n_photons
            )
            info["signal_above_floor_dB"] = 10.0 * math.log10(m0.total_rel / m0.noise_rel)
        summary["variants"][variant] = info

    if scn.mc is not None:
        cfg = McConfig(samples_m=scn.mc.samples, seed=seed_val, batch=scn.mc.batch)
        checks = []
        idxs = sorted({0, len(scn.detector.settings) // 2, len(scn.detector.settings) - 1})
        beam = final_beam if final_beam is not None else _base_beam(scn, n_max, True)
        for i in idxs:
            s = float(scn.detector.settings[i])
            if scn.detector.kind == "split":
                local = propagate(beam, s)
                v = split_projection(n_max, beam.geom, scn.detector.gap_m, scn.detector.half_width_m)
            else:
                local = beam
                v = homodyne_projection(n_max, tem10_noise_shape(n_max), s)
            analytic = local.noise.project(v)
            empirical = mc_noise_power(local.noise, v, cfg)
            checks.append({
                "setting": s,
                "analytic": analytic,
                "mc": empirical,
                "rel_dev": abs(empirical - analytic) / analytic,
            })
        summary["mc"] = {
            "samples": cfg.samples_m,
            "seed": cfg.seed,
            "tolerance": statistical_tolerance(cfg.samples_m),
            "checks": checks,
            "max_rel_dev": max(c["rel_dev"] for c in checks),
        }
        if summary["mc"]["max_rel_dev"] > summary["mc"]["tolerance"]:
            raise NumericError(
                "MC noise deviates from the analytic value beyond 3 sigma: "
                f"{summary['mc']['max_rel_dev']:.4g} > {summary['mc']['tolerance']:.4g}"
            )

    if scn.expected:
        summary["expected"] = scn.expected

    out_file = _output_path(scn.out_path, out_dir)
    if out_file:
        _write_outputs(scn, results, fmt, seed_val, out_file, setting_name)
        summary["output"] = out_file

    if dump_state and final_beam is not None:
        with open(dump_state, "w") as fh:
            save_beam_state(final_beam, fh)
        summary["state_dump"] = dump_state

    return summary


def _output_path(path: str | None, out_dir: str | None) -> str | None:
    if path is None:
        return None
    if os.path.isabs(path):
        return path
    base = out_dir or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(base, exist_ok=True)
    return os.path.join(base, path)


def _write_outputs(
    scn: Scenario,
    results: dict[str, list[Measurement]],
    fmt: str,
    seed: int,
    out_file: str,
    setting_name: str,
) -> None:
    vbw = scn.source.vbw_hz
    names = list(results)
    traces = {}
    if vbw is not None:
        for j, variant in enumerate(names):
            # per-variant seed offset decorrelates the trace noise between curves
            traces[variant] = spectrum_trace(results[variant], scn.source.rbw_hz, vbw, seed + j)
    with open(out_file, "w", newline="") as fh:
        if fmt == "json-lines":
            for variant in names:
                for i, m in enumerate(results[variant]):
                    rec = {
                        "variant": variant,
                        setting_name: m.setting,
                        "signal_rel": m.signal_rel,
                        "noise_rel": m.noise_rel,
                        "snr": m.snr,
                        "dB": m.total_db,
                    }
                    if variant in traces:
                        rec["trace_dB"] = float(traces[variant].values_db[i])
                    if m.apertured:
                        rec["apertured"] = True
                    fh.write(json.dumps(rec) + "\n")
            return
        if len(names) == 1:
            write_measurements_csv(
                results[names[0]], fh, setting_name, trace=traces.get(names[0])
            )
            return
        # multi-variant CSV: one dB column per trace variant
        from .detect import CSV_PREAMBLE

        fh.write(CSV_PREAMBLE + "\n")
        columns = {
            v: traces[v].values_db if v in traces
            else np.array([m.total_db for m in results[v]])
            for v in names
        }
        fh.write(",".join([setting_name] + [f"{v}_dB" for v in names]) + "\n")
        for i, s in enumerate(scn.detector.settings):
            row = [f"{s:.12g}"] + [f"{columns[v][i]:.12g}" for v in names]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# presets and subcommands


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("beamsense.presets").joinpath(f"{name}.ini").read_text()


def load_scenario(target: str) -> Scenario:
    if target in PRESETS:
        return parse_scenario(preset_text(target), name=target, is_text=True)
    return parse_scenario(target, name=os.path.basename(target))


def _print_summary(summary: dict, fh=None) -> None:
    json.dump(summary, fh or sys.stdout, indent=1, default=float)
    (fh or sys.stdout).write("\n")


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    if args.out_file:
        scn.out_path = args.out_file
    summary = run_scenario(
        scn,
        n_max=args.nmax,
        seed=args.seed,
        out_dir=args.out,
        out_format=args.format,
        dump_state=args.dump_state,
    )
    _print_summary(summary)
    return EXIT_OK


def cmd_qnl(args) -> int:
    from .beam import photon_number

    n = photon_number(args.power_mw * 1e-3, args.wavelength_um * 1e-6, args.rbw_hz)
    w0 = args.waist_um * 1e-6
    d = qnl_displacement(w0, n)
    summary = {
        "photons_N": n,
        "d_qnl_m": d,
        "p_qnl_per_m": qnl_momentum(w0, n),
        "theta_qnl_rad": qnl_tilt(w0, n, args.wavelength_um * 1e-6),
    }
    if args.squeeze_db:
        summary["d_sqz_m"] = sub_qnl_displacement(d, args.squeeze_db)
    if (args.power_mw, args.wavelength_um, args.waist_um, args.rbw_hz) == (1.0, 1.0, 100.0, 1e5):
        summary["expected"] = {"d_qnl_m": 0.2e-9, "p_qnl_per_m": 4e-2, "theta_qnl_rad": 7e-9}
    _print_summary(summary)
    return EXIT_OK


def cmd_preset(name: str):
    def handler(args) -> int:
        scn = load_scenario(name)
        if args.out_file:
            scn.out_path = args.out_file
        summary = run_scenario(
            scn, n_max=args.nmax, seed=args.seed, out_dir=args.out, out_format=args.format
        )
        _print_summary(summary)
        return EXIT_OK

    return handler


def cmd_efficiency(args) -> int:
    r_exp = experimental_ratio_from_traces(
        args.p_sd_mw * 1e-3, args.p_hd_uw * 1e-6, args.mod_sd_db, args.mod_hd_db
    )
    summary = {
        "theoretical_equal_power": theoretical_efficiency_ratio(1.0, 1.0),
        "r_exp": r_exp,
        "inputs": {
            "P_SD_W": args.p_sd_mw * 1e-3,
            "P_HD_W": args.p_hd_uw * 1e-6,
            "Mod_SD_dB": args.mod_sd_db,
            "Mod_HD_dB": args.mod_hd_db,
        },
        "expected": {"r_exp": 0.64, "theoretical_equal_power": 2.0 / math.pi},
    }
    _print_summary(summary)
    return EXIT_OK


def cmd_squeeze_transfer(args) -> int:
    from .beam import squeeze_transfer_flipped_to_tem10

    v_f = 10.0 ** (-args.squeeze_db / 10.0)
    v_1 = squeeze_transfer_flipped_to_tem10(v_f)
    cov = inject_squeezed_mode(
        NoiseCovariance.vacuum(args.nmax),
        flipped_noise_shape(args.nmax),
        args.squeeze_db,
        args.squeeze_db,
        0.0,
    )
    v_1_cov = float(cov.mode_block(1)[0, 0])
    summary = {
        "flipped_squeeze_dB": args.squeeze_db,
        "V_flipped": v_f,
        "V_tem10_scalar": v_1,
        "V_tem10_covariance": v_1_cov,
        "tem10_squeeze_dB": -10.0 * math.log10(v_1),
        "agreement": abs(v_1 - v_1_cov),
    }
    if args.squeeze_db == 3.6:
        summary["expected"] = {"tem10_squeeze_dB": 2.0, "V_tem10_scalar": 0.641}
    _print_summary(summary)
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    n_max = args.nmax
    cfg = McConfig(samples_m=int(args.samples), seed=args.seed)
    tem10 = tem10_noise_shape(n_max)
    flipped = flipped_noise_shape(n_max)
    vac = NoiseCovariance.vacuum(n_max)
    sq28 = inject_squeezed_mode(vac, tem10, 2.0, 8.0, 0.0)
    sqf = inject_squeezed_mode(vac, flipped, 3.6, 3.6, 0.0)
    geom = make_coherent_beam(1e-3, 1e-6, 1e-4, 1e5, n_max).geom
    cases = [
        ("coherent split z=0", vac, split_projection(n_max, geom)),
        ("coherent homodyne", vac, homodyne_projection(n_max, tem10, 0.3)),
        ("tem10 2/8dB phi=0", sq28, homodyne_projection(n_max, tem10, 0.0)),
        ("tem10 2/8dB phi=pi/2", sq28, homodyne_projection(n_max, tem10, math.pi / 2)),
        ("tem10 2/8dB phi=pi/4", sq28, homodyne_projection(n_max, tem10, math.pi / 4)),
        ("flipped 3.6dB split z=0", sqf, split_projection(n_max, geom)),
    ]
    tol = statistical_tolerance(cfg.samples_m)
    rows = []
    ok = True
    for name, cov, proj in cases:
        analytic = cov.project(proj)
        empirical = mc_noise_power(cov, proj, cfg)
        rel = abs(empirical - analytic) / analytic
        ok = ok and rel <= tol
        rows.append({"case": name, "analytic": analytic, "mc": empirical, "rel_dev": rel})
    summary = {
        "samples": cfg.samples_m,
        "seed": cfg.seed,
        "tolerance_3sigma": tol,
        "cases": rows,
        "pass": ok,
    }
    _print_summary(summary)
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamsense",
        description="Quantum-limited beam displacement/tilt metrology simulator",
    )
    parser.add_argument("--version", action="version", version=f"beamsense {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    common.add_argument("--out", default=None,
                        help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    common.add_argument("--out-file", default=None, help="override the output file name")
    common.add_argument("--format", choices=("csv", "json-lines"), default=None)
    common.add_argument("--nmax", type=int, default=DEFAULT_N_MAX,
                        help="mode truncation (default %(default)s)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a scenario file or bundled preset")
    p.add_argument("scenario", help="scenario file path or preset name: " + ", ".join(PRESETS))
    p.add_argument("--dump-state", default=None, help="write the final beam state as JSON")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("qnl", parents=[common], help="quantum-noise-limit worked example")
    p.add_argument("--power-mW", dest="power_mw", type=float, default=1.0)
    p.add_argument("--wavelength-um", dest="wavelength_um", type=float, default=1.0)
    p.add_argument("--waist-um", dest="waist_um", type=float, default=100.0)
    p.add_argument("--rbw-Hz", dest="rbw_hz", type=float, default=1e5)
    p.add_argument("--squeeze-dB", dest="squeeze_db", type=float, default=0.0)
    p.set_defaults(handler=cmd_qnl)

    p = sub.add_parser("split-scan", parents=[common],
                       help="split-detector z-scan (preset fig-split-scan)")
    p.set_defaults(handler=cmd_preset("fig-split-scan"))

    p = sub.add_parser("homodyne-scan", parents=[common],
                       help="TEM10 homodyne phase scan (preset fig-homodyne-scan)")
    p.set_defaults(handler=cmd_preset("fig-homodyne-scan"))

    p = sub.add_parser("efficiency", parents=[common],
                       help="split vs homodyne efficiency ratio reconstruction")
    p.add_argument("--p-sd-mW", dest="p_sd_mw", type=float, default=4.2)
    p.add_argument("--p-hd-uW", dest="p_hd_uw", type=float, default=170.0)
    p.add_argument("--mod-sd-dB", dest="mod_sd_db", type=float, default=23.0)
    p.add_argument("--mod-hd-dB", dest="mod_hd_db", type=float, default=11.3)
    p.set_defaults(handler=cmd_efficiency)

    p = sub.add_parser("squeeze-transfer", parents=[common],
                       help="flipped-mode to TEM10 squeezing transfer")
    p.add_argument("--squeeze-dB", dest="squeeze_db", type=float, default=3.6)
    p.set_defaults(handler=cmd_squeeze_transfer)

    p = sub.add_parser("mc-validate", parents=[common],
                       help="Monte-Carlo validation of the analytic noise projections")
    p.add_argument("--samples", type=float, default=1e6)
    p.set_defaults(handler=cmd_mc_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BeamSenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
