"""Versioned text serialization of beam states for CLI round-trips.

JSON with an explicit scheme tag and the quadrature ordering convention spelled
out in the header, so a reader never has to guess the covariance layout.
"""

from __future__ import annotations

import json
import io

import numpy as np

from .beam import BeamGeometry, BeamState, ModalField, NoiseCovariance
from .errors import UsageError

SCHEME = "beamsense/beamstate/1"
QUADRATURE_ORDER = "X+_0, X-_0, X+_1, X-_1, ... per mode 0..n_max, then the tail mode"


def beam_state_to_dict(state: BeamState) -> dict:
    return {
        "scheme": SCHEME,
        "quadrature_order": QUADRATURE_ORDER,
        "geometry": {
            "waist_w0_m": state.geom.waist_w0,
            "wavelength_m": state.geom.wavelength_lambda,
            "rayleigh_zR_m": state.geom.rayleigh_zR,
        },
        "z_m": state.z,
        "photons_N": state.field.photons_N,
        "integration_T_s": state.field.integration_T,
        "n_max": state.n_max,
        "coeffs_re": state.field.coeffs.real.tolist(),
        "coeffs_im": state.field.coeffs.imag.tolist(),
        "covariance": state.noise.matrix.tolist(),
    }


def beam_state_from_dict(data: dict) -> BeamState:
    scheme = data.get("scheme")
    if scheme != SCHEME:
        raise UsageError(f"unsupported beam state scheme {scheme!r}, expected {SCHEME!r}")
    geom = BeamGeometry(
        waist_w0=data["geometry"]["waist_w0_m"],
        wavelength_lambda=data["geometry"]["wavelength_m"],
    )
    coeffs = np.array(data["coeffs_re"]) + 1j * np.array(data["coeffs_im"])
    field = ModalField(
        geom=geom,
        coeffs=coeffs,
        photons_N=data["photons_N"],
        integration_T=data["integration_T_s"],
    )
    noise = NoiseCovariance(np.array(data["covariance"]), data["n_max"])
    return BeamState(field=field, noise=noise, z=data["z_m"])


def save_beam_state(state: BeamState, fh: io.TextIOBase) -> None:
    json.dump(beam_state_to_dict(state), fh, indent=1)


def load_beam_state(fh: io.TextIOBase) -> BeamState:
    return beam_state_from_dict(json.load(fh))
