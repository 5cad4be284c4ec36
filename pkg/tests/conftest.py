"""Shared fixtures: the reference one-dimensional model and banks of
conditioned replicates reused across the statistical test modules."""

import numpy as np
import pytest

from catlab import (CoefficientFamily, FailureSet, ModelSpec, NoiseModel,
                    SpectralMeasure, WindowKit, compute_cluster_extent,
                    condition_by_rejection, exceedance_count, operator_norm)
from catlab.rng import substream

MASTER_SEED = 20260810


@pytest.fixture(scope="session")
def rc1_noise():
    return NoiseModel(alpha=1.5, spectral=SpectralMeasure.tail_balance(1.0),
                      scale=1.0)


@pytest.fixture(scope="session")
def rc1_spec(rc1_noise):
    return ModelSpec(coeffs=CoefficientFamily.geometric(1.0, 0.5),
                     noise=rc1_noise)


@pytest.fixture(scope="session")
def rc1_gamma():
    return FailureSet.half_space([1.0], 1.2)


@pytest.fixture(scope="session")
def rc1_psi():
    return FailureSet.half_space([1.0], 2.4)


class ReplicateBank:
    """Derived statistics of a batch of rejection-conditioned replicates."""

    def __init__(self, n, records, exceed_counts, inwindow_locs, inwindow_mags,
                 attempts, elapsed):
        self.n = n
        self.records = records
        self.exceed_counts = np.asarray(exceed_counts)
        self.inwindow_locs = np.asarray(inwindow_locs)
        self.inwindow_mags = np.asarray(inwindow_mags)
        self.attempts = np.asarray(attempts)
        self.elapsed = elapsed

    @property
    def uncensored(self):
        return [r for r in self.records if not r.censored]

    def extent_ratios(self):
        recs = self.uncensored
        jp = np.array([r.j_plus for r in recs])
        jm = np.array([r.j_minus for r in recs])
        return jp / self.n, jm / self.n

    def psi_zero_fraction(self):
        flags = [r.j_plus_psi == 0 for r in self.records
                 if r.j_plus_psi is not None]
        return np.mean(flags)

    def dominant_locs(self):
        return np.array([r.dominant_location for r in self.records])

    def dominant_mags(self):
        return np.array([r.dominant_value[0] for r in self.records])


def build_bank(spec, gamma, psi, n, replicates, seed=MASTER_SEED):
    """Condition `replicates` paths and collect per-replicate statistics."""
    import time
    kit = WindowKit(spec, n)
    threshold = 0.5 * n * gamma.delta0 / operator_norm(spec.aggregate)
    records, counts, locs, mags, attempts = [], [], [], [], []
    agg = np.atleast_2d(spec.aggregate)
    t0 = time.perf_counter()
    for r in range(replicates):
        rng = substream(seed, r)
        sample = condition_by_rejection(spec, gamma, n, (-2 * n, 2 * n),
                                        max_attempts=500_000, rng=rng, kit=kit)
        rec = compute_cluster_extent(sample, psi, censor_cap=2 * n, M=2.0)
        records.append(rec.with_replicate(r))
        counts.append(exceedance_count(sample, threshold, M=2.0))
        block = sample.path.noise_block(0, n - 1)
        norms = np.abs(block[:, 0]) if block.shape[1] == 1 \
            else np.linalg.norm(block, axis=1)
        pos = int(np.argmax(norms))
        locs.append(pos / n)
        mags.append(float((agg @ block[pos])[0] / n))
        attempts.append(sample.attempts)
    return ReplicateBank(n, records, counts, locs, mags, attempts,
                         time.perf_counter() - t0)


@pytest.fixture(scope="session")
def rc1_bank_400(rc1_spec, rc1_gamma, rc1_psi):
    return build_bank(rc1_spec, rc1_gamma, rc1_psi, 400, 2000)


@pytest.fixture(scope="session")
def rc1_bank_200(rc1_spec, rc1_gamma, rc1_psi):
    return build_bank(rc1_spec, rc1_gamma, rc1_psi, 200, 1600)


@pytest.fixture(scope="session")
def rc1_bank_800(rc1_spec, rc1_gamma, rc1_psi):
    return build_bank(rc1_spec, rc1_gamma, rc1_psi, 800, 1600)
