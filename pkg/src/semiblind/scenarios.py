"""Synthetic cluster-based channels for a uniform rectangular array.

The generator stands in for measured cell data: each user channel is a sum
of plane waves grouped in a few angular clusters, which yields the low-rank
spatial correlation that the mixture and subspace estimators rely on.

Channel samples are stored row-wise, i.e. a dataset of ``T`` channels for
``M`` antennas is a ``(T, M)`` complex array.
"""

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DatasetFormatError,
    DimensionMismatchError,
    InvalidArgumentError,
    TruncatedPayloadError,
)

__all__ = [
    "ArrayGeometry",
    "ClusterScenario",
    "ChannelDataset",
    "steering_vector",
    "steering_matrix",
    "sample_user_channel",
    "sample_channels",
    "generate_dataset",
    "write_dataset",
    "read_dataset",
    "export_csv",
    "CHUNK_SIZE",
]

MAGIC = b"CVD1"
_HEADER = struct.Struct("<4sIQ")

# Samples per independent random stream; fixed so results do not depend on
# how many workers are used.
CHUNK_SIZE = 1024


@dataclass(frozen=True)
class ArrayGeometry:
    """URA layout. Spacings are in wavelengths.

    Element ``(v, h)`` maps to vector index ``v * horizontal_count + h``.
    """

    vertical_count: int = 4
    horizontal_count: int = 16
    vertical_spacing: float = 1.0
    horizontal_spacing: float = 0.5

    def __post_init__(self):
        if self.vertical_count < 1 or self.horizontal_count < 1:
            raise InvalidArgumentError("array dimensions must be positive")
        if self.vertical_spacing <= 0 or self.horizontal_spacing <= 0:
            raise InvalidArgumentError("array spacings must be positive")

    @property
    def antennas(self):
        return self.vertical_count * self.horizontal_count


@dataclass(frozen=True)
class ClusterScenario:
    """Parameters of the cluster channel model.

    Angles are in radians. ``power_profile`` is ``"random"`` (exponentially
    distributed cluster powers normalized to one) or ``"equal"``. With
    ``random_gains=False`` the path gains are deterministic and real, which
    is only useful for tests.
    """

    cluster_count_range: tuple = (1, 3)
    angular_spread: float = float(np.deg2rad(5.0))
    path_count_per_cluster: int = 20
    azimuth_range: tuple = (float(np.deg2rad(-60.0)), float(np.deg2rad(60.0)))
    elevation_range: tuple = (float(np.deg2rad(-15.0)), float(np.deg2rad(15.0)))
    power_profile: str = "random"
    random_gains: bool = True

    def __post_init__(self):
        lo, hi = self.cluster_count_range
        if lo < 1 or hi < lo:
            raise InvalidArgumentError(f"invalid cluster_count_range {self.cluster_count_range}")
        if self.angular_spread <= 0:
            raise InvalidArgumentError("angular_spread must be positive")
        if self.path_count_per_cluster < 1:
            raise InvalidArgumentError("path_count_per_cluster must be positive")
        if self.power_profile not in ("random", "equal"):
            raise InvalidArgumentError(f"unknown power_profile {self.power_profile!r}")
        for name in ("azimuth_range", "elevation_range"):
            a, b = getattr(self, name)
            if b < a:
                raise InvalidArgumentError(f"{name} must be an increasing interval")


@dataclass
class ChannelDataset:
    antennas: int
    samples: np.ndarray
    normalization: float = field(default=float("nan"))

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.antennas:
            raise DimensionMismatchError(
                f"samples of shape {self.samples.shape} do not match M={self.antennas}"
            )

    def __len__(self):
        return self.samples.shape[0]

    def mean_power(self):
        return float(np.mean(np.sum(np.abs(self.samples) ** 2, axis=1)))

    def covariance(self):
        """Uncentered sample covariance ``(1/T) sum h h^H``."""
        s = self.samples
        c = s.T @ s.conj() / len(self)
        return 0.5 * (c + c.conj().T)


def _phases(geometry, azimuth, elevation):
    v = np.repeat(np.arange(geometry.vertical_count), geometry.horizontal_count)
    h = np.tile(np.arange(geometry.horizontal_count), geometry.vertical_count)
    azimuth = np.asarray(azimuth, dtype=float)[..., None]
    elevation = np.asarray(elevation, dtype=float)[..., None]
    return 2.0 * np.pi * (
        v * geometry.vertical_spacing * np.sin(elevation)
        + h * geometry.horizontal_spacing * np.cos(elevation) * np.sin(azimuth)
    )


def steering_vector(geometry, azimuth, elevation):
    """Unit-modulus array response for one plane wave."""
    return np.exp(1j * _phases(geometry, azimuth, elevation))


def steering_matrix(geometry, azimuth, elevation):
    """Array responses for arrays of angles; the antenna axis is appended last."""
    return np.exp(1j * _phases(geometry, azimuth, elevation))


def sample_channels(scenario, geometry, count, rng):
    """Draw ``count`` channels as a ``(count, M)`` array from ``rng``."""
    lo, hi = scenario.cluster_count_range
    paths = scenario.path_count_per_cluster
    n_clusters = rng.integers(lo, hi + 1, size=count)
    active = np.arange(hi)[None, :] < n_clusters[:, None]

    if scenario.power_profile == "random":
        power = rng.exponential(size=(count, hi))
    else:
        power = np.ones((count, hi))
    power = np.where(active, power, 0.0)
    power /= power.sum(axis=1, keepdims=True)

    az_c = rng.uniform(*scenario.azimuth_range, size=(count, hi))
    el_c = rng.uniform(*scenario.elevation_range, size=(count, hi))
    az = az_c[..., None] + scenario.angular_spread * rng.standard_normal((count, hi, paths))
    el = el_c[..., None] + scenario.angular_spread * rng.standard_normal((count, hi, paths))

    amp = np.sqrt(power / paths)[..., None]
    if scenario.random_gains:
        g = (rng.standard_normal((count, hi, paths))
             + 1j * rng.standard_normal((count, hi, paths))) / np.sqrt(2.0)
        gains = amp * g
    else:
        gains = np.broadcast_to(amp, (count, hi, paths)).astype(np.complex128)

    a = steering_matrix(geometry, az, el)  # (count, hi, paths, M)
    return np.einsum("cqp,cqpm->cm", gains, a)


def sample_user_channel(scenario, geometry, rng):
    """One channel vector of length ``M``."""
    return sample_channels(scenario, geometry, 1, rng)[0]


def _chunk_rngs(seed, count):
    n_chunks = -(-count // CHUNK_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [np.random.default_rng(s) for s in children]


def generate_dataset(scenario, geometry, count, normalization=None, seed=0, executor=None):
    """Generate a dataset rescaled so that the mean of ``||h||^2`` is exact.

    Samples are produced in chunks of :data:`CHUNK_SIZE`, each with its own
    stream spawned from ``seed``; passing an ``executor`` (anything with a
    ``map`` method) generates chunks concurrently with identical results.
    """
    if count < 1:
        raise InvalidArgumentError("count must be positive")
    if normalization is None:
        normalization = float(geometry.antennas)
    if normalization <= 0:
        raise InvalidArgumentError("normalization must be positive")

    rngs = _chunk_rngs(seed, count)
    sizes = [min(CHUNK_SIZE, count - i * CHUNK_SIZE) for i in range(len(rngs))]

    def work(args):
        rng, n = args
        return sample_channels(scenario, geometry, n, rng)

    mapper = map if executor is None else executor.map
    samples = np.concatenate(list(mapper(work, zip(rngs, sizes))), axis=0)

    power = np.mean(np.sum(np.abs(samples) ** 2, axis=1))
    samples *= np.sqrt(normalization / power)
    return ChannelDataset(geometry.antennas, samples, float(normalization))


def write_dataset(dataset, path):
    """Write a dataset in the ``CVD1`` binary format."""
    samples = np.ascontiguousarray(dataset.samples, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dataset.antennas, samples.shape[0]))
        fh.write(samples.tobytes())


def read_dataset(path, antennas=None):
    """Read a ``CVD1`` file.

    If ``antennas`` is given, a file with a different ``M`` raises
    :class:`DimensionMismatchError`.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file too short for CVD1 header")
    magic, m, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if m == 0:
        raise DatasetFormatError(f"{path}: header declares zero antennas")
    if antennas is not None and m != antennas:
        raise DimensionMismatchError(f"{path}: file has M={m}, expected M={antennas}")
    expected = count * m * 16
    payload = len(data) - _HEADER.size
    if payload < expected:
        raise TruncatedPayloadError(
            f"{path}: header declares {count} samples but payload holds {payload // (16 * m)}"
        )
    if payload > expected:
        raise DatasetFormatError(f"{path}: {payload - expected} trailing bytes after payload")
    samples = np.frombuffer(data, dtype="<c16", count=count * m, offset=_HEADER.size)
    samples = samples.astype(np.complex128).reshape(count, m)
    power = float(np.mean(np.sum(np.abs(samples) ** 2, axis=1))) if count else float("nan")
    return ChannelDataset(m, samples, power)


def export_csv(dataset, path):
    """Debug export: one sample per row, interleaved real/imaginary columns."""
    m = dataset.antennas
    header = [f"{p}_{i}" for i in range(m) for p in ("re", "im")]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for h in dataset.samples:
            row = np.empty(2 * m)
            row[0::2] = h.real
            row[1::2] = h.imag
            writer.writerow([repr(float(x)) for x in row])
