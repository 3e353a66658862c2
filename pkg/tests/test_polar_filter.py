import math

import numpy as np
import pytest

from radar_odometry.polar_filter import (
    Detections,
    FilterParams,
    PolarScan,
    filter_scan,
    k_strongest,
    polar_to_cartesian,
    uniform_azimuths,
)


def make_scan(power, res=0.5, period=0.25, timestamp=1.0):
    power = np.asarray(power, dtype=float)
    return PolarScan(
        timestamp=timestamp,
        sweep_period=period,
        range_resolution=res,
        power=power,
        azimuths=uniform_azimuths(power.shape[0]),
    )


def brute_force_rows(power, k, z_min):
    """Per-row sort oracle: by power descending, ties by smaller bin."""
    kept = set()
    for i, row in enumerate(np.asarray(power, dtype=float)):
        ranked = sorted(range(len(row)), key=lambda j: (-row[j], j))
        taken = 0
        for j in ranked:
            if taken == k:
                break
            if row[j] > z_min:
                kept.add((i, j))
                taken += 1
    return kept


def random_scan(rng, max_m=64, max_n=512):
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    # Integer-valued powers force plenty of ties.
    power = rng.integers(0, 40, size=(m, n)).astype(float)
    return make_scan(power)


class TestKStrongest:
    def test_simple_row(self):
        scan = make_scan([[5, 9, 3, 7, 1]])
        det = k_strongest(scan, FilterParams(k=2, z_min=4))
        assert set(zip(det.azimuth_index, det.bin_index)) == {(0, 1), (0, 3)}

    def test_all_below_threshold(self):
        scan = make_scan([[1, 2, 3], [0, 1, 2]])
        det = k_strongest(scan, FilterParams(k=4, z_min=3))
        assert len(det) == 0

    def test_k_is_upper_bound(self):
        row = np.zeros(20)
        row[[2, 5, 9, 11, 17]] = [10, 20, 30, 40, 50]
        det = k_strongest(make_scan([row]), FilterParams(k=12, z_min=1))
        assert sorted(det.bin_index) == [2, 5, 9, 11, 17]

    def test_threshold_is_strict(self):
        scan = make_scan([[5.0, 5.0, 6.0]])
        det = k_strongest(scan, FilterParams(k=3, z_min=5.0))
        assert list(det.bin_index) == [2]

    def test_tie_break_prefers_smaller_bin(self):
        scan = make_scan([[7, 7, 7, 7, 7]])
        det = k_strongest(scan, FilterParams(k=2, z_min=0))
        assert list(det.bin_index) == [0, 1]

    def test_matches_oracle_on_random_scans(self):
        rng = np.random.default_rng(10)
        for _ in range(60):
            scan = random_scan(rng, max_m=16, max_n=64)
            k = int(rng.integers(1, 16))
            z_min = float(rng.integers(0, 30))
            det = k_strongest(scan, FilterParams(k=k, z_min=z_min))
            got = set(zip(det.azimuth_index, det.bin_index))
            assert got == brute_force_rows(scan.power, k, z_min)

    def test_output_order_and_size(self):
        rng = np.random.default_rng(11)
        scan = random_scan(rng)
        params = FilterParams(k=5, z_min=10)
        det = k_strongest(scan, params)
        assert len(det) <= scan.num_azimuths * params.k
        keys = list(zip(det.azimuth_index, det.bin_index))
        assert keys == sorted(keys)
        assert np.all(det.power > params.z_min)

    def test_monotonic_in_threshold_and_k(self):
        rng = np.random.default_rng(12)
        scan = random_scan(rng, max_m=8, max_n=64)
        base = set(
            zip(*(lambda d: (d.azimuth_index, d.bin_index))(k_strongest(scan, FilterParams(k=4, z_min=5))))
        )
        higher_z = k_strongest(scan, FilterParams(k=4, z_min=9))
        assert set(zip(higher_z.azimuth_index, higher_z.bin_index)) <= base
        higher_k = k_strongest(scan, FilterParams(k=7, z_min=5))
        assert set(zip(higher_k.azimuth_index, higher_k.bin_index)) >= base

    def test_noise_profile_hook(self):
        scan = make_scan([[10, 10, 10, 10]])
        profile = np.array([0.0, 20.0, 0.0, 20.0])
        det = k_strongest(scan, FilterParams(k=4, z_min=1), noise_profile=profile)
        assert sorted(det.bin_index) == [0, 2]

    def test_uint8_power(self):
        power = np.array([[0, 200, 30]], dtype=np.uint8)
        scan = make_scan(power)
        det = k_strongest(scan, FilterParams(k=1, z_min=10))
        assert list(det.bin_index) == [1]
        assert det.power[0] == 200.0


class TestPolarToCartesian:
    def test_axis_aligned(self):
        scan = make_scan(np.ones((4, 8)), res=0.5)
        det = Detections(np.array([0]), np.array([3]), np.array([1.0]))
        cloud = polar_to_cartesian(det, scan)
        assert np.allclose(cloud.xy[0], [(3 + 0.5) * 0.5, 0.0])

    def test_quarter_turn(self):
        scan = make_scan(np.ones((4, 8)), res=0.5)
        det = Detections(np.array([1]), np.array([3]), np.array([1.0]))
        cloud = polar_to_cartesian(det, scan)  # azimuth 1 of 4 is pi/2
        assert np.allclose(cloud.xy[0], [0.0, 1.75], atol=1e-12)

    def test_matches_conversion_oracle(self):
        rng = np.random.default_rng(13)
        scan = random_scan(rng, max_m=32, max_n=128)
        cloud = filter_scan(scan, FilterParams(k=3, z_min=5))
        for i in range(len(cloud)):
            rho = (cloud.bin_index[i] + 0.5) * scan.range_resolution
            phi = scan.azimuth_angle(int(cloud.azimuth_index[i]))
            assert np.allclose(
                cloud.xy[i], [rho * math.cos(phi), rho * math.sin(phi)], atol=1e-12
            )
            want_t = scan.sweep_period * cloud.azimuth_index[i] / scan.num_azimuths
            assert cloud.relative_time[i] == pytest.approx(want_t, abs=1e-15)
            assert 0 <= cloud.relative_time[i] < scan.sweep_period


class TestPolarScanValidation:
    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            make_scan([[-1.0, 2.0]])

    def test_nan_power_rejected(self):
        with pytest.raises(ValueError):
            make_scan([[np.nan, 2.0]])

    def test_non_monotone_azimuths_rejected(self):
        with pytest.raises(ValueError):
            PolarScan(0.0, 0.25, 0.5, np.ones((2, 3)), np.array([1.0, 0.5]))

    def test_span_beyond_revolution_rejected(self):
        with pytest.raises(ValueError):
            PolarScan(0.0, 0.25, 0.5, np.ones((2, 3)), np.array([0.0, 7.0]))

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            FilterParams(k=0)
        with pytest.raises(ValueError):
            FilterParams(z_min=-1)
