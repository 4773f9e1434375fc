"""Multi-user uplink Monte-Carlo simulation and NMSE sweeps.

One coherence block carries ``J`` users with fixed channels ``H`` (``M x J``),
one orthogonal pilot per user and ``N`` Gaussian data snapshots. Pilot
observations are returned after decorrelation, so column ``j`` equals
``h_j`` plus white noise of variance ``noise_var``.

Random streams: block ``b`` of a sweep always uses the stream
``SeedSequence([seed, b])`` regardless of the grid point or the number of
worker threads, so results are reproducible and grid points share channel
draws (common random numbers).
"""

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError
from .estimators import (
    ESTIMATORS,
    EstimatorBank,
    EstimatorInput,
    build_gmm_filters,
    estimate_gmm,
    estimate_proj_gmm,
    estimate_sub_gmm,
)
from .subspace import SubspaceBasis, estimate_subspace

__all__ = [
    "SystemConfig",
    "ScenarioRealization",
    "SweepResult",
    "SWEEP_PARAMETERS",
    "snr_to_noise_var",
    "dft_pilots",
    "simulate_block",
    "nmse",
    "run_sweep",
    "benchmark_precompute",
    "write_benchmark_csv",
]

SWEEP_PARAMETERS = ("snr_db", "snapshots", "users")


def snr_to_noise_var(snr_db):
    return float(10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True)
class SystemConfig:
    antennas: int = 64
    users: int = 8
    snapshots: int = 200
    snr_db: float = 0.0
    symbol_power: tuple = None
    pilot_type: str = "identity"
    include_pilots: bool = False

    def __post_init__(self):
        if not 1 <= self.users <= self.antennas:
            raise InvalidArgumentError(
                f"need 1 <= J <= M, got J={self.users}, M={self.antennas}"
            )
        if self.snapshots < 1:
            raise InvalidArgumentError("need at least one data snapshot")
        if self.pilot_type not in ("identity", "dft"):
            raise InvalidArgumentError(f"unknown pilot_type {self.pilot_type!r}")
        if self.symbol_power is not None:
            p = np.asarray(self.symbol_power, dtype=float)
            if p.shape != (self.users,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise InvalidArgumentError("symbol_power must hold J nonnegative values summing to 1")

    @property
    def noise_var(self):
        return snr_to_noise_var(self.snr_db)

    def powers(self):
        if self.symbol_power is None:
            return np.full(self.users, 1.0 / self.users)
        return np.asarray(self.symbol_power, dtype=float)


@dataclass
class ScenarioRealization:
    channels: np.ndarray
    pilot_observations: np.ndarray
    data_observations: np.ndarray
    noise_var: float


@dataclass
class SweepResult:
    parameter: str
    grid: list
    nmse: dict
    trials: int
    seed: int
    config: dict = field(default_factory=dict)

    def to_csv(self):
        """CSV text with header ``param,estimator,nmse,trials,seed``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["param", "estimator", "nmse", "trials", "seed"])
        for i, g in enumerate(self.grid):
            for name, values in self.nmse.items():
                writer.writerow([g, name, repr(float(values[i])), self.trials, self.seed])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _cn(rng, shape, var=1.0):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def dft_pilots(users):
    """``J x J`` DFT pilot matrix with unit-modulus entries, ``P P^H = J I``."""
    n = np.arange(users)
    return np.exp(-2j * np.pi * np.outer(n, n) / users)


def simulate_block(config, channels, rng, noise_var=None):
    """Simulate pilot and data reception for one coherence block.

    ``channels`` is ``M x J``. With ``pilot_type="dft"`` the DFT pilots are
    transmitted with per-symbol power ``1/J`` and decorrelated, which gives
    exactly the same noise statistics as the direct ``H + N`` model.
    """
    h = np.asarray(channels, dtype=np.complex128)
    m, j = h.shape
    if (m, j) != (config.antennas, config.users):
        raise InvalidArgumentError(f"channels have shape {h.shape}, config expects ({config.antennas}, {config.users})")
    s2 = config.noise_var if noise_var is None else float(noise_var)

    if config.pilot_type == "identity":
        y_p = h + _cn(rng, (m, j), s2)
    else:
        # per-symbol power 1/J; the scaled pilot matrix is unitary
        pilots = dft_pilots(j) / np.sqrt(j)
        received = h @ pilots + _cn(rng, (m, j), s2)
        y_p = received @ pilots.conj().T
    symbols = _cn(rng, (j, config.snapshots)) * np.sqrt(config.powers())[:, None]
    y_d = h @ symbols + _cn(rng, (m, config.snapshots), s2)
    return ScenarioRealization(h, y_p, y_d, s2)


def nmse(truths, estimates, antennas=None):
    """``(1 / (M T)) sum_t ||h_t - h_hat_t||^2`` over rows."""
    t = np.atleast_2d(np.asarray(truths))
    e = np.atleast_2d(np.asarray(estimates))
    if t.shape != e.shape:
        raise InvalidArgumentError(f"truths {t.shape} and estimates {e.shape} differ in shape")
    m = t.shape[1] if antennas is None else antennas
    return float(np.sum(np.abs(t - e) ** 2) / (m * t.shape[0]))


def _block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence([seed, block]))


def _run_block(block, system, test, bank, names, seed):
    rng = _block_rng(seed, block)
    idx = rng.choice(test.shape[0], size=system.users, replace=False)
    h = test[idx].T
    real = simulate_block(system, h, rng)
    basis = estimate_subspace(
        real.pilot_observations, real.data_observations, system.users,
        include_pilots=system.include_pilots,
    )
    inp = EstimatorInput(real.pilot_observations.T, real.noise_var, basis, system.users)
    truth = h.T
    return [float(np.sum(np.abs(truth - bank.estimate(n, inp).estimate) ** 2)) for n in names]


def run_sweep(system, parameter, grid, test, trials, seed=0, bank=None,
              model=None, covariance=None, estimators=ESTIMATORS, threads=1):
    """NMSE of each estimator over a grid of SNR, snapshot or user values.

    ``test`` is a ``(T_test, M)`` array (or dataset) of test channels. Each
    grid point simulates ``trials`` blocks and scores all ``J`` users of
    each block; per-block errors are summed in block order.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise InvalidArgumentError(f"unknown sweep parameter {parameter!r}")
    grid = list(grid)
    if not grid:
        raise InvalidArgumentError("sweep grid is empty")
    if trials < 1:
        raise InvalidArgumentError("need at least one trial")
    names = tuple(estimators)
    for n in names:
        if n not in ESTIMATORS:
            raise InvalidArgumentError(f"unknown estimator {n!r}")
    test = np.asarray(getattr(test, "samples", test), dtype=np.complex128)
    if bank is None:
        bank = EstimatorBank(model, covariance)

    key = {"snr_db": "snr_db", "snapshots": "snapshots", "users": "users"}[parameter]
    out = {n: [] for n in names}
    for g in grid:
        changes = {key: type(getattr(system, key))(g)}
        if parameter == "users":
            changes["symbol_power"] = None
        point = replace(system, **changes)
        if test.shape[0] < point.users:
            raise InvalidArgumentError(
                f"test set holds {test.shape[0]} channels, fewer than J={point.users}"
            )
        bank.prepare(names, point.noise_var, point.users, point.antennas)

        def work(b, point=point):
            return _run_block(b, point, test, bank, names, seed)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                errors = list(pool.map(work, range(trials)))
        else:
            errors = [work(b) for b in range(trials)]
        errors = np.asarray(errors)
        denom = point.antennas * point.users * trials
        for i, n in enumerate(names):
            out[n].append(float(np.sum(errors[:, i]) / denom))
    echo = asdict(system)
    return SweepResult(parameter, grid, out, trials, seed, echo)


def _random_basis(rng, m, j):
    q, _ = np.linalg.qr(_cn(rng, (m, j)))
    return SubspaceBasis(q, np.ones(j))


def benchmark_precompute(model, noise_vars, repetitions, users=8, seed=0):
    """Per-estimate wall-clock cost of the mixture estimators.

    For every noise level: ``proj_gmm`` with filters built beforehand,
    ``sub_gmm`` with its filters rebuilt for a new basis each repetition
    (as happens every coherence block), and the standalone ``gmm`` with
    precomputed filters. Returns a list of row dicts.
    """
    if repetitions < 1:
        raise InvalidArgumentError("repetitions must be >= 1")
    m, k = model.dim, model.components
    rng = np.random.default_rng(seed)
    rows = []
    for s2 in noise_vars:
        gmm_filters = build_gmm_filters(model, s2)
        proj_filters = build_gmm_filters(model, s2 * users / m)
        timings = {"proj_gmm": [], "sub_gmm": [], "gmm": []}
        for _ in range(repetitions):
            basis = _random_basis(rng, m, users)
            inp = EstimatorInput(_cn(rng, m, 1.0 + s2), s2, basis, users)
            t0 = time.perf_counter_ns()
            estimate_proj_gmm(inp, model, proj_filters)
            t1 = time.perf_counter_ns()
            estimate_sub_gmm(inp, model)
            t2 = time.perf_counter_ns()
            estimate_gmm(inp, model, gmm_filters)
            t3 = time.perf_counter_ns()
            timings["proj_gmm"].append(t1 - t0)
            timings["sub_gmm"].append(t2 - t1)
            timings["gmm"].append(t3 - t2)
        for name, ts in timings.items():
            ts = np.asarray(ts, dtype=float)
            rows.append({
                "estimator": name, "noise_var": float(s2), "M": m, "J": users, "K": k,
                "mean_ns": float(ts.mean()), "std_ns": float(ts.std()),
            })
    return rows


def write_benchmark_csv(rows, path):
    fields = ["estimator", "M", "J", "K", "mean_ns", "std_ns", "noise_var"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
