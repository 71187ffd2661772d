"""Synthetic drifting link: symbol generation, distortion, dataset files.

The link substitutes a real system with the smallest model showing both
distortion classes an equalizer has to fight: an FIR filter (memory /
intersymbol interference) followed by a memoryless cubic polynomial
(nonlinearity) plus additive white Gaussian noise.  Symbols come from the
sign of a Gaussian sequence (fair bits without a short PRBS period), are
Gray-mapped onto PAM4 levels {-3,-1,+1,+3} (16QAM uses one such mapping per
quadrature), held for ``gamma`` samples per symbol, distorted, and finally
normalized to zero mean and unit RMS.

16QAM streams keep the ``gamma``-reals-per-symbol budget by carrying
``gamma / 2`` complex samples per symbol, stored interleaved I,Q,I,Q; the I
and Q rails pass through identical real channels with independent noise.

All randomness flows from explicit seeds, so a written dataset is exactly
reproducible from its sidecar.
"""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError, UsageError

STREAM_FORMAT_VERSION = 1

PAM4_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])
# Gray code per level rank: adjacent levels differ in exactly one bit.
PAM4_GRAY = np.array([0b00, 0b01, 0b11, 0b10], dtype=np.int64)
_GRAY_INV = np.zeros(4, dtype=np.int64)
_GRAY_INV[PAM4_GRAY] = np.arange(4)
_POPCOUNT4 = np.array([0, 1, 1, 2], dtype=np.int64)


class Modulation(Enum):
    PAM4 = "pam4"
    QAM16 = "qam16"

    @property
    def n_classes(self) -> int:
        return 4 if self is Modulation.PAM4 else 16

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self is Modulation.PAM4 else 4

    @property
    def is_complex(self) -> bool:
        return self is Modulation.QAM16


def gray_bit_distance(a, b, modulation: Modulation):
    """Bit errors implied by deciding class ``b`` when ``a`` was sent."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if modulation is Modulation.PAM4:
        return _POPCOUNT4[PAM4_GRAY[a] ^ PAM4_GRAY[b]]
    return (_POPCOUNT4[PAM4_GRAY[a // 4] ^ PAM4_GRAY[b // 4]]
            + _POPCOUNT4[PAM4_GRAY[a % 4] ^ PAM4_GRAY[b % 4]])


@dataclass(frozen=True)
class ChannelSpec:
    """FIR taps + cubic polynomial + AWGN level for one capture."""

    modulation: Modulation
    isi_taps: tuple
    nl_coeffs: tuple  # (c1, c2, c3) of y = c1 x + c2 x^2 + c3 x^3
    noise_std: float
    gamma: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "isi_taps", tuple(float(t) for t in self.isi_taps))
        object.__setattr__(self, "nl_coeffs", tuple(float(c) for c in self.nl_coeffs))
        if len(self.isi_taps) == 0:
            raise ConfigError("isi_taps must be nonempty")
        if len(self.nl_coeffs) != 3:
            raise ConfigError(f"nl_coeffs must be (c1, c2, c3), got {self.nl_coeffs}")
        if self.nl_coeffs[0] == 0.0:
            raise ConfigError("nl_coeffs[0] (linear term) must be nonzero")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.modulation.is_complex and self.gamma % 2 != 0:
            raise ConfigError("qam16 requires an even gamma (interleaved I/Q)")

    def to_json(self) -> dict:
        return {
            "modulation": self.modulation.value,
            "isi_taps": list(self.isi_taps),
            "nl_coeffs": list(self.nl_coeffs),
            "noise_std": self.noise_std,
            "gamma": self.gamma,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(doc: dict) -> "ChannelSpec":
        return ChannelSpec(
            modulation=Modulation(doc["modulation"]),
            isi_taps=tuple(doc["isi_taps"]),
            nl_coeffs=tuple(doc["nl_coeffs"]),
            noise_std=doc["noise_std"],
            gamma=doc["gamma"],
            seed=doc["seed"],
        )


@dataclass(frozen=True)
class SymbolStream:
    """Labels plus chronological samples (``gamma`` reals per symbol)."""

    spec: ChannelSpec
    labels: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.shape != (self.spec.gamma * len(labels),):
            raise ConfigError(
                f"samples length {samples.shape} does not match "
                f"gamma * n_seq = {self.spec.gamma * len(labels)}")
        labels.flags.writeable = False
        samples.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "samples", samples)

    @property
    def n_seq(self) -> int:
        return len(self.labels)

    @property
    def gamma(self) -> int:
        return self.spec.gamma


def generate_symbols(n: int, modulation: Modulation, seed):
    """Draw ``n`` symbols: sign of Gaussian noise -> bits -> Gray-mapped levels.

    Returns ``(labels, amplitudes)``; amplitudes are a float column for PAM4
    and an (n, 2) I/Q array for 16QAM.
    """
    if n <= 0:
        raise UsageError(f"symbol count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    bits = (rng.standard_normal(n * modulation.bits_per_symbol) > 0).astype(np.int64)
    if modulation is Modulation.PAM4:
        codes = 2 * bits[0::2] + bits[1::2]
        ranks = _GRAY_INV[codes]
        return ranks.astype(np.uint8), PAM4_LEVELS[ranks]
    i_rank = _GRAY_INV[2 * bits[0::4] + bits[1::4]]
    q_rank = _GRAY_INV[2 * bits[2::4] + bits[3::4]]
    labels = (4 * i_rank + q_rank).astype(np.uint8)
    amps = np.column_stack([PAM4_LEVELS[i_rank], PAM4_LEVELS[q_rank]])
    return labels, amps


def _distort_rail(amps, sps, spec: ChannelSpec, rng):
    held = np.repeat(np.asarray(amps, dtype=np.float64), sps)
    y = np.convolve(held, spec.isi_taps)[:len(held)]
    c1, c2, c3 = spec.nl_coeffs
    y = c1 * y + c2 * y * y + c3 * y * y * y
    if spec.noise_std > 0:
        y = y + spec.noise_std * rng.standard_normal(len(y))
    return y


def apply_channel(amps, spec: ChannelSpec, rng=None) -> np.ndarray:
    """Hold, filter, distort and add noise; returns ``gamma`` reals per symbol.

    ``rng`` defaults to ``default_rng(spec.seed)``; pass an explicit
    generator when several streams share one spec but need independent noise.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    amps = np.asarray(amps, dtype=np.float64)
    if spec.modulation is Modulation.PAM4:
        return _distort_rail(amps, spec.gamma, spec, rng)
    sps = spec.gamma // 2
    rail_i = _distort_rail(amps[:, 0], sps, spec, rng)
    rail_q = _distort_rail(amps[:, 1], sps, spec, rng)
    out = np.empty(2 * len(rail_i))
    out[0::2] = rail_i
    out[1::2] = rail_q
    return out


def normalize(samples) -> np.ndarray:
    """Subtract the mean and divide by the RMS of the residual."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise UsageError("cannot normalize an empty sample array")
    centered = samples - samples.mean()
    rms = np.sqrt((centered * centered).mean())
    if rms == 0.0:
        raise DegenerateInputError("samples have zero variance")
    return centered / rms


def make_stream(spec: ChannelSpec, n: int, symbol_seed, noise_seed) -> SymbolStream:
    """Generate, distort and normalize one capture."""
    labels, amps = generate_symbols(n, spec.modulation, symbol_seed)
    raw = apply_channel(amps, spec, np.random.default_rng(noise_seed))
    return SymbolStream(spec, labels, normalize(raw))


def make_drift_scenario(spec1: ChannelSpec, spec2: ChannelSpec,
                        n1: int, n2: int, seed):
    """Two independent captures through two channels, normalized separately."""
    if spec1.modulation is not spec2.modulation:
        raise UsageError("drift scenario requires matching modulations")
    if spec1.gamma != spec2.gamma:
        raise UsageError("drift scenario requires matching gamma")
    children = np.random.SeedSequence(seed).spawn(4)
    set1 = make_stream(spec1, n1, children[0], children[1])
    set2 = make_stream(spec2, n2, children[2], children[3])
    return set1, set2


def write_stream(stream: SymbolStream, out_dir, name: str) -> Path:
    """Write samples (raw little-endian f64), labels (raw u8) and sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples_file = f"{name}.f64"
    labels_file = f"{name}_labels.u8"
    stream.samples.astype("<f8").tofile(out_dir / samples_file)
    stream.labels.astype(np.uint8).tofile(out_dir / labels_file)
    sidecar = {
        "format_version": STREAM_FORMAT_VERSION,
        "n_seq": stream.n_seq,
        "gamma": stream.gamma,
        "modulation": stream.spec.modulation.value,
        "samples_file": samples_file,
        "labels_file": labels_file,
        "channel_spec": stream.spec.to_json(),
        "normalization_applied": True,
    }
    sidecar_path = out_dir / f"{name}.json"
    sidecar_path.write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return sidecar_path


def read_stream(sidecar_path) -> SymbolStream:
    sidecar_path = Path(sidecar_path)
    doc = json.loads(sidecar_path.read_text())
    version = doc.get("format_version")
    if version != STREAM_FORMAT_VERSION:
        raise UsageError(f"unsupported stream format_version: {version}")
    spec = ChannelSpec.from_json(doc["channel_spec"])
    labels = np.fromfile(sidecar_path.parent / doc["labels_file"], dtype=np.uint8)
    samples = np.fromfile(sidecar_path.parent / doc["samples_file"], dtype="<f8")
    if len(labels) != doc["n_seq"]:
        raise UsageError(
            f"labels file holds {len(labels)} entries, sidecar says {doc['n_seq']}")
    return SymbolStream(spec, labels, samples.astype(np.float64))
